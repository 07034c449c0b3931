//! System Hamiltonian in a truncated Fock basis and propagation of the
//! (generalized) Lindblad master equation for emitter plus few-mode model.
//!
//! Basis ordering is emitter ⊗ mode_1 ⊗ … ⊗ mode_N with the emitter slowest:
//! `index = s·(n_max+1)^N + Σ_i n_i·(n_max+1)^(N−i)`, where `s = 1` is the
//! excited state.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitmodel::FewModeModel;
use crate::markov::MarkovParams;
use crate::ode::{self, OdeOptions};
use crate::sparse::Csr;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default cap on the Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    #[default]
    Excited,
    Ground,
    /// `cos(θ/2)|e⟩ + e^{iφ} sin(θ/2)|g⟩`.
    Superposition { theta: f64, phi: f64 },
}

impl InitialState {
    /// Amplitudes `(c_g, c_e)`.
    pub fn amplitudes(self) -> (Complex64, Complex64) {
        match self {
            InitialState::Excited => (ZERO, ONE),
            InitialState::Ground => (ONE, ZERO),
            InitialState::Superposition { theta, phi } => (
                Complex64::from_polar((theta / 2.0).sin(), phi),
                Complex64::new((theta / 2.0).cos(), 0.0),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    pub omega_e: f64,
    #[serde(default)]
    pub initial_state: InitialState,
}

impl EmitterParams {
    pub fn excited(omega_e: f64) -> Self {
        EmitterParams {
            omega_e,
            initial_state: InitialState::Excited,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_e > 0.0 && self.omega_e.is_finite()) {
            return Err(Error::invalid(format!("omega_e must be positive, got {}", self.omega_e)));
        }
        if let InitialState::Superposition { theta, phi } = self.initial_state {
            if !(theta.is_finite() && phi.is_finite()) {
                return Err(Error::invalid("superposition angles must be finite"));
            }
        }
        Ok(())
    }
}

/// Emitter plus `n_modes` oscillators, each truncated at `n_max` quanta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    n_modes: usize,
    n_max: usize,
    dim: usize,
}

impl FockBasis {
    pub fn new(n_modes: usize, n_max: usize) -> Result<Self> {
        Self::with_cap(n_modes, n_max, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(n_modes: usize, n_max: usize, cap: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        let dim = (n_max + 1)
            .checked_pow(n_modes as u32)
            .and_then(|d| d.checked_mul(2))
            .filter(|&d| d <= cap)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "Hilbert dimension 2·{}^{n_modes} exceeds the cap of {cap}; lower n_max or the mode count",
                    n_max + 1
                ))
            })?;
        Ok(FockBasis { n_modes, n_max, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn stride(&self, mode: usize) -> usize {
        (self.n_max + 1).pow((self.n_modes - 1 - mode) as u32)
    }

    pub fn index(&self, excited: bool, occupations: &[usize]) -> usize {
        assert_eq!(occupations.len(), self.n_modes);
        let mut idx = if excited { self.dim / 2 } else { 0 };
        for (m, &n) in occupations.iter().enumerate() {
            assert!(n <= self.n_max);
            idx += n * self.stride(m);
        }
        idx
    }

    pub fn is_excited(&self, idx: usize) -> bool {
        idx >= self.dim / 2
    }

    pub fn occupation(&self, idx: usize, mode: usize) -> usize {
        (idx / self.stride(mode)) % (self.n_max + 1)
    }

    pub fn occupations(&self, idx: usize) -> Vec<usize> {
        (0..self.n_modes).map(|m| self.occupation(idx, m)).collect()
    }

    fn op(&self, f: impl Fn(usize) -> Vec<(usize, f64)>) -> SystemOperator {
        let mut trip = Vec::new();
        for col in 0..self.dim {
            for (row, v) in f(col) {
                trip.push((row, col, Complex64::new(v, 0.0)));
            }
        }
        SystemOperator {
            basis: *self,
            matrix: Csr::from_triplets(self.dim, self.dim, trip),
        }
    }

    pub fn identity(&self) -> SystemOperator {
        self.op(|c| vec![(c, 1.0)])
    }

    pub fn sigma_minus(&self) -> SystemOperator {
        let half = self.dim / 2;
        self.op(|c| if c >= half { vec![(c - half, 1.0)] } else { vec![] })
    }

    pub fn sigma_plus(&self) -> SystemOperator {
        self.sigma_minus().adjoint()
    }

    /// `σ⁺σ⁻`, the excited-state projector.
    pub fn emitter_population(&self) -> SystemOperator {
        let half = self.dim / 2;
        self.op(|c| if c >= half { vec![(c, 1.0)] } else { vec![] })
    }

    pub fn annihilation(&self, mode: usize) -> SystemOperator {
        assert!(mode < self.n_modes);
        let s = self.stride(mode);
        self.op(|c| {
            let n = self.occupation(c, mode);
            if n > 0 {
                vec![(c - s, (n as f64).sqrt())]
            } else {
                vec![]
            }
        })
    }

    pub fn creation(&self, mode: usize) -> SystemOperator {
        self.annihilation(mode).adjoint()
    }

    pub fn number(&self, mode: usize) -> SystemOperator {
        self.op(|c| vec![(c, self.occupation(c, mode) as f64)])
    }

    /// `σ⁺σ⁻ + Σ a_i†a_i`.
    pub fn excitation_number(&self) -> SystemOperator {
        self.op(|c| {
            let n: usize = self.occupations(c).iter().sum::<usize>() + self.is_excited(c) as usize;
            vec![(c, n as f64)]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperator {
    pub basis: FockBasis,
    pub matrix: Csr<Complex64>,
}

impl SystemOperator {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn adjoint(&self) -> Self {
        SystemOperator {
            basis: self.basis,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        SystemOperator {
            basis: self.basis,
            matrix: self.matrix.scaled(Complex64::new(s, 0.0)),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(SystemOperator {
            basis: self.basis,
            matrix: self.matrix.add(&other.matrix),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(SystemOperator {
            basis: self.basis,
            matrix: self.matrix.matmul(&other.matrix),
        })
    }

    /// `[A, B]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.add(&other.matmul(self)?.scaled(-1.0))
    }

    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::Structural(format!(
                "state of length {} does not match operator dimension {}",
                psi.len(),
                self.dim()
            )));
        }
        let mut out = vec![ZERO; self.dim()];
        for (i, j, v) in self.matrix.iter() {
            out[i] += v * psi[j];
        }
        Ok(out)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.matrix.hermiticity_defect() <= tol * self.matrix.max_abs().max(f64::MIN_POSITIVE)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::Structural(format!(
                "operator dimensions differ ({} vs {})",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// `H_S = ω_e σ⁺σ⁻ + Σ ω_ij a_i†a_j + Σ g_i (σ⁺ + σ⁻)(a_i + a_i†)`; with
/// `rwa` only `σ⁺a_i + σ⁻a_i†` is kept in the coupling.
pub fn build_hs(emitter: &EmitterParams, model: &FewModeModel, rwa: bool, n_max: usize) -> Result<SystemOperator> {
    build_hs_with_cap(emitter, model, rwa, n_max, DEFAULT_DIM_CAP)
}

pub fn build_hs_with_cap(
    emitter: &EmitterParams,
    model: &FewModeModel,
    rwa: bool,
    n_max: usize,
    cap: usize,
) -> Result<SystemOperator> {
    emitter.validate()?;
    let basis = FockBasis::with_cap(model.n_modes(), n_max, cap)?;
    let n = model.n_modes();
    let half = basis.dim() / 2;
    let mut trip: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut push = |r: usize, c: usize, v: f64| trip.push((r, c, Complex64::new(v, 0.0)));

    for col in 0..basis.dim() {
        let excited = basis.is_excited(col);
        if excited {
            push(col, col, emitter.omega_e);
        }
        for i in 0..n {
            let ni = basis.occupation(col, i);
            push(col, col, model.omega(i, i) * ni as f64);
            for j in 0..n {
                let nj = basis.occupation(col, j);
                if i == j || nj == 0 || ni == n_max {
                    continue;
                }
                let row = col + basis.stride(i) - basis.stride(j);
                push(row, col, model.omega(i, j) * ((ni + 1) as f64 * nj as f64).sqrt());
            }

            let g = model.g()[i];
            let s = basis.stride(i);
            let lower = (ni > 0).then(|| (col - s, (ni as f64).sqrt()));
            let raise = (ni < n_max).then(|| (col + s, ((ni + 1) as f64).sqrt()));
            if excited {
                // σ⁻a_i† and, beyond RWA, σ⁻a_i
                if let Some((c, f)) = raise {
                    push(c - half, col, g * f);
                }
                if !rwa {
                    if let Some((c, f)) = lower {
                        push(c - half, col, g * f);
                    }
                }
            } else {
                // σ⁺a_i and, beyond RWA, σ⁺a_i†
                if let Some((c, f)) = lower {
                    push(c + half, col, g * f);
                }
                if !rwa {
                    if let Some((c, f)) = raise {
                        push(c + half, col, g * f);
                    }
                }
            }
        }
    }
    let op = SystemOperator {
        basis,
        matrix: Csr::from_triplets(basis.dim(), basis.dim(), trip),
    };
    if !op.is_hermitian(1e-12) {
        return Err(Error::Structural("assembled Hamiltonian is not Hermitian".into()));
    }
    Ok(op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// Shift `−Δ_mod σ⁺σ⁻`, dissipators `γ_mod D[σ⁻]` and `κ_i D[a_i]`.
    #[default]
    RwaEq,
    /// Adds `−Δ̃_mod σ⁺σ⁻` and the signed `γ̃_mod D[σ⁺]`.
    UscEq,
}

/// Density matrix stored as a dense block on a subset of basis states; all
/// other entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub basis: FockBasis,
    pub support: Vec<usize>,
    pub block: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|` for a full-length state vector.
    pub fn from_state(basis: FockBasis, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::Structural("state length does not match the basis".into()));
        }
        let support: Vec<usize> = (0..psi.len()).filter(|&i| psi[i] != ZERO).collect();
        let v: Vec<Complex64> = support.iter().map(|&i| psi[i]).collect();
        let d = v.len();
        let block = DMatrix::from_fn(d, d, |a, b| v[a] * v[b].conj());
        Ok(DensityMatrix { basis, support, block })
    }

    pub fn trace(&self) -> Complex64 {
        self.block.trace()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.basis.dim(), self.basis.dim());
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                m[(i, j)] = self.block[(a, b)];
            }
        }
        m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.block)
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.basis != other.basis {
            return Err(Error::Structural("density matrices live in different bases".into()));
        }
        let mut keep: Vec<usize> = self.support.iter().chain(&other.support).copied().collect();
        keep.sort_unstable();
        keep.dedup();
        let a = self.to_dense();
        let b = other.to_dense();
        let diff = DMatrix::from_fn(keep.len(), keep.len(), |x, y| {
            a[(keep[x], keep[y])] - b[(keep[x], keep[y])]
        });
        let h = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(0.5 * h.symmetric_eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
    }
}

/// `Tr(O ρ)`.
pub fn expectation(rho: &DensityMatrix, op: &SystemOperator) -> Result<Complex64> {
    if rho.basis != op.basis {
        return Err(Error::Structural(format!(
            "operator dimension {} does not match density matrix dimension {}",
            op.dim(),
            rho.basis.dim()
        )));
    }
    let mut pos = vec![usize::MAX; op.dim()];
    for (k, &i) in rho.support.iter().enumerate() {
        pos[i] = k;
    }
    let mut acc = ZERO;
    for (i, j, v) in op.matrix.iter() {
        if pos[i] != usize::MAX && pos[j] != usize::MAX {
            acc += v * rho.block[(pos[j], pos[i])];
        }
    }
    Ok(acc)
}

fn min_eigenvalue(block: &DMatrix<Complex64>) -> f64 {
    let h = (block + block.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub emitter_population: Vec<f64>,
    /// One series per mode.
    pub mode_populations: Vec<Vec<f64>>,
    pub trace_drift: Vec<f64>,
    pub min_eigenvalue: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.trace_drift.iter().cloned().fold(0.0, f64::max)
    }

    pub fn final_population(&self) -> Option<f64> {
        self.emitter_population.last().copied()
    }
}

#[derive(Debug, Clone)]
struct Jump {
    rate: f64,
    op: Csr<Complex64>,
    label: &'static str,
}

/// The assembled generator `dρ/dt = (1/ħ)(−i[H, ρ] + Σ_k γ_k D[L_k]ρ)`.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    basis: FockBasis,
    hamiltonian: Csr<Complex64>,
    jumps: Vec<Jump>,
    hbar: f64,
}

/// Options for [`MasterEquation::propagate`].
#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    pub ode: OdeOptions,
    /// Record the smallest eigenvalue of ρ when the propagated block is at
    /// most this large.
    pub eigen_monitor_dim: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            ode: OdeOptions::default(),
            eigen_monitor_dim: 256,
        }
    }
}

impl MasterEquation {
    pub fn new(
        h_s: &SystemOperator,
        model: &FewModeModel,
        markov: &MarkovParams,
        equation: Equation,
        hbar: f64,
    ) -> Result<Self> {
        let basis = h_s.basis;
        if basis.n_modes() != model.n_modes() {
            return Err(Error::Structural(format!(
                "Hamiltonian has {} modes but the model has {}",
                basis.n_modes(),
                model.n_modes()
            )));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::invalid("hbar must be positive"));
        }
        let mut shift = markov.delta_mod;
        let mut jumps = vec![Jump {
            rate: markov.gamma_mod,
            op: basis.sigma_minus().matrix,
            label: "gamma_mod",
        }];
        if equation == Equation::UscEq {
            shift += markov.delta_mod_tilde;
            jumps.push(Jump {
                rate: markov.gamma_mod_tilde,
                op: basis.sigma_plus().matrix,
                label: "gamma_mod_tilde",
            });
        }
        for (i, &k) in model.kappa().iter().enumerate() {
            jumps.push(Jump {
                rate: k,
                op: basis.annihilation(i).matrix,
                label: "kappa",
            });
        }
        jumps.retain(|j| j.rate != 0.0);
        let hamiltonian = h_s.add(&basis.emitter_population().scaled(-shift))?.matrix;
        Ok(MasterEquation {
            basis,
            hamiltonian,
            jumps,
            hbar,
        })
    }

    /// Emitter without any modes: `H = ω_e σ⁺σ⁻` plus the Markov terms.
    pub fn emitter_only(emitter: &EmitterParams, markov: &MarkovParams, equation: Equation, hbar: f64) -> Result<Self> {
        emitter.validate()?;
        let basis = FockBasis::new(0, 1)?;
        let h = basis.emitter_population().scaled(emitter.omega_e);
        let empty = FewModeModel::empty();
        Self::new(&h, &empty, markov, equation, hbar)
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn has_negative_rate(&self) -> bool {
        self.jumps.iter().any(|j| j.rate < 0.0)
    }

    fn rate_warnings(&self) -> Vec<String> {
        self.jumps
            .iter()
            .filter(|j| j.rate < 0.0)
            .map(|j| format!("negative rate {} = {:e}: evolution is not completely positive", j.label, j.rate))
            .collect()
    }

    fn initial_state(&self, emitter: &EmitterParams) -> Result<DensityMatrix> {
        emitter.validate()?;
        let (cg, ce) = emitter.initial_state.amplitudes();
        let mut psi = vec![ZERO; self.basis.dim()];
        psi[0] = cg;
        psi[self.basis.dim() / 2] = ce;
        DensityMatrix::from_state(self.basis, &psi)
    }

    /// Smallest set of basis states containing `seed` and closed under the
    /// Hamiltonian and every jump operator. ρ stays supported on it exactly.
    fn reachable(&self, seed: &[usize]) -> Vec<usize> {
        let dim = self.basis.dim();
        let mut seen = vec![false; dim];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in seed {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        let h_adj = self.hamiltonian.adjoint();
        let jump_adj: Vec<Csr<Complex64>> = self.jumps.iter().map(|j| j.op.adjoint()).collect();
        while let Some(c) = queue.pop_front() {
            // Column c of each operator lists the states that c maps into.
            let targets = h_adj
                .row(c)
                .map(|(r, _)| r)
                .chain(self.hamiltonian.row(c).map(|(r, _)| r))
                .chain(jump_adj.iter().flat_map(|m| m.row(c).map(|(r, _)| r)))
                .collect::<Vec<_>>();
            for r in targets {
                if !seen[r] {
                    seen[r] = true;
                    queue.push_back(r);
                }
            }
        }
        (0..dim).filter(|&i| seen[i]).collect()
    }

    fn restricted(&self, support: &[usize]) -> Generator {
        let mut pos = vec![usize::MAX; self.basis.dim()];
        for (k, &i) in support.iter().enumerate() {
            pos[i] = k;
        }
        let restrict = |m: &Csr<Complex64>| {
            let trip = m
                .iter()
                .filter(|&(i, j, _)| pos[i] != usize::MAX && pos[j] != usize::MAX)
                .map(|(i, j, v)| (pos[i], pos[j], v))
                .collect();
            Csr::from_triplets(support.len(), support.len(), trip)
        };
        let mut k_eff = self.hamiltonian.clone();
        for j in &self.jumps {
            let ldl = j.op.adjoint().matmul(&j.op);
            k_eff = k_eff.add(&ldl.scaled(Complex64::new(0.0, -0.5 * j.rate)));
        }
        Generator {
            d: support.len(),
            k_eff: restrict(&k_eff),
            jumps: self.jumps.iter().map(|j| (j.rate, restrict(&j.op))).collect(),
            inv_hbar: 1.0 / self.hbar,
        }
    }

    /// Propagates from `emitter.initial_state` ⊗ vacuum, recording at `times`.
    pub fn propagate(&self, emitter: &EmitterParams, times: &[f64], opts: &PropagateOptions) -> Result<Trajectory> {
        Ok(self.propagate_with_state(emitter, times, opts)?.0)
    }

    /// As [`propagate`](Self::propagate), also returning ρ at the last time.
    pub fn propagate_with_state(
        &self,
        emitter: &EmitterParams,
        times: &[f64],
        opts: &PropagateOptions,
    ) -> Result<(Trajectory, DensityMatrix)> {
        if times.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        let rho0 = self.initial_state(emitter)?;
        let support = self.reachable(&rho0.support);
        let gen = self.restricted(&support);
        let d = support.len();

        let mut y0 = vec![ZERO; d * d];
        for (a, &i) in rho0.support.iter().enumerate() {
            let ia = support.binary_search(&i).unwrap();
            for (b, &j) in rho0.support.iter().enumerate() {
                let jb = support.binary_search(&j).unwrap();
                y0[ia * d + jb] = rho0.block[(a, b)];
            }
        }

        let n_modes = self.basis.n_modes();
        let excited: Vec<bool> = support.iter().map(|&i| self.basis.is_excited(i)).collect();
        let occ: Vec<Vec<usize>> = support.iter().map(|&i| self.basis.occupations(i)).collect();
        let monitor = d <= opts.eigen_monitor_dim;

        let mut traj = Trajectory {
            times: times.to_vec(),
            emitter_population: Vec::with_capacity(times.len()),
            mode_populations: vec![Vec::with_capacity(times.len()); n_modes],
            trace_drift: Vec::with_capacity(times.len()),
            min_eigenvalue: monitor.then(|| Vec::with_capacity(times.len())),
            warnings: self.rate_warnings(),
        };
        let mut herm_defect = 0.0f64;
        let mut last = vec![ZERO; d * d];

        let result = ode::integrate(
            |_, y, dy| gen.apply(y, dy),
            y0,
            times,
            &opts.ode,
            |_, _, y| {
                let mut tr = ZERO;
                let mut pe = 0.0;
                let mut pm = vec![0.0; n_modes];
                for a in 0..d {
                    let p = y[a * d + a];
                    tr += p;
                    if excited[a] {
                        pe += p.re;
                    }
                    for (m, &n) in occ[a].iter().enumerate() {
                        pm[m] += n as f64 * p.re;
                    }
                }
                traj.emitter_population.push(pe);
                for (series, v) in traj.mode_populations.iter_mut().zip(pm) {
                    series.push(v);
                }
                traj.trace_drift.push((tr - ONE).norm());
                for a in 0..d {
                    for b in a..d {
                        herm_defect = herm_defect.max((y[a * d + b] - y[b * d + a].conj()).norm());
                    }
                }
                if let Some(eigs) = traj.min_eigenvalue.as_mut() {
                    eigs.push(min_eigenvalue(&DMatrix::from_row_slice(d, d, y)));
                }
                last.copy_from_slice(y);
            },
        );
        result?;

        if herm_defect > 1e-10 {
            traj.warnings.push(format!("density matrix Hermiticity defect {herm_defect:e}"));
        }
        let span = times[times.len() - 1] - times[0];
        if traj.max_trace_drift() > 1e-8 * span.max(1.0) {
            traj.warnings
                .push(format!("trace drift {:e} exceeds tolerance", traj.max_trace_drift()));
        }
        let state = DensityMatrix {
            basis: self.basis,
            support,
            block: DMatrix::from_row_slice(d, d, &last),
        };
        Ok((traj, state))
    }

    /// Unique stationary state within the sector reachable from
    /// `emitter.initial_state`.
    pub fn steady_state(&self, emitter: &EmitterParams) -> Result<DensityMatrix> {
        const MAX_BLOCK: usize = 48;
        let rho0 = self.initial_state(emitter)?;
        let support = self.reachable(&rho0.support);
        let d = support.len();
        if d > MAX_BLOCK {
            return Err(Error::Resource(format!(
                "steady state needs a {}×{} superoperator; the reachable sector has {d} states (limit {MAX_BLOCK})",
                d * d,
                d * d
            )));
        }
        let gen = self.restricted(&support);
        let n = d * d;
        // Columns of the superoperator are images of the unit matrices.
        let mut sup = DMatrix::<Complex64>::zeros(n, n);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for k in 0..n {
            e[k] = ONE;
            gen.apply(&e, &mut col);
            e[k] = ZERO;
            for r in 0..n {
                sup[(r, k)] = col[r];
            }
        }
        let norm = sup.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if norm == 0.0 {
            return Err(Error::Structural("generator vanishes; every state is stationary".into()));
        }

        let mut a = sup.clone();
        let mut rhs = nalgebra::DVector::<Complex64>::zeros(n);
        for k in 0..n {
            a[(0, k)] = if k / d == k % d { ONE } else { ZERO };
        }
        rhs[0] = ONE;
        let lu = a.lu();
        let u = lu.u();
        let (umin, umax) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let v = u[(i, i)].norm();
            (lo.min(v), hi.max(v))
        });
        if umin <= 1e-12 * umax {
            return Err(Error::Structural(
                "stationary state is not unique (degenerate null space)".into(),
            ));
        }
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Structural("superoperator is singular".into()))?;

        let residual = (&sup * &x).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if residual > 1e-10 * norm {
            return Err(Error::Structural(format!(
                "no stationary state: residual {residual:e} relative to generator norm {norm:e}"
            )));
        }
        let block = DMatrix::from_row_slice(d, d, x.as_slice());
        let block = (&block + block.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(DensityMatrix {
            basis: self.basis,
            support,
            block,
        })
    }
}

/// Restricted generator acting on row-major `d × d` blocks.
struct Generator {
    d: usize,
    k_eff: Csr<Complex64>,
    jumps: Vec<(f64, Csr<Complex64>)>,
    inv_hbar: f64,
}

impl Generator {
    /// `dρ = (1/ħ)(−i K ρ + i ρ K† + Σ γ L ρ L†)` with `K = H − (i/2)Σγ L†L`.
    fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.d;
        out.iter_mut().for_each(|o| *o = ZERO);
        for i in 0..d {
            for (j, k) in self.k_eff.row(i) {
                // −i K_ij ρ[j, :] into row i, and i ρ[:, j] conj(K_ij) into column i
                let a = -I * k;
                let b = I * k.conj();
                for c in 0..d {
                    out[i * d + c] += a * rho[j * d + c];
                    out[c * d + i] += b * rho[c * d + j];
                }
            }
        }
        for (rate, l) in &self.jumps {
            for (i, j, lij) in l.iter() {
                for (k, m, lkm) in l.iter() {
                    out[i * d + k] += *rate * lij * lkm.conj() * rho[j * d + m];
                }
            }
        }
        let s = self.inv_hbar;
        out.iter_mut().for_each(|o| *o *= s);
    }
}

/// Convenience wrapper: assemble the master equation and propagate.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    h_s: &SystemOperator,
    markov: &MarkovParams,
    model: &FewModeModel,
    emitter: &EmitterParams,
    times: &[f64],
    equation: Equation,
    hbar: f64,
) -> Result<Trajectory> {
    MasterEquation::new(h_s, model, markov, equation, hbar)?.propagate(emitter, times, &PropagateOptions::default())
}

/// Uniform grid of `n_points` times on `[0, t_max]`.
pub fn time_grid(t_max: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && t_max.is_finite()) || n_points < 2 {
        return Err(Error::invalid("time grid needs t_max > 0 and at least 2 points"));
    }
    Ok((0..n_points)
        .map(|k| t_max * k as f64 / (n_points - 1) as f64)
        .collect())
}
