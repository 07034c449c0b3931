//! Few-mode models: N lossy, mutually coupled oscillators whose spectral
//! density `J_fit(ω) = (1/π)·Im[gᵀ (H̃ − ω)⁻¹ g]`, with
//! `H̃ = Ω − (i/2)·diag(κ)`, is fitted to a target spectral density.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{self, LeastSquares, LmOptions};
use crate::par::Exec;
use crate::specdens::{LorentzianMode, SpectralDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct FewModeModel {
    n: usize,
    omega: Vec<f64>,
    kappa: Vec<f64>,
    g: Vec<f64>,
}

/// Serialized layout: `omega_matrix` is row-major, `n_modes × n_modes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub n_modes: usize,
    pub omega_matrix: Vec<f64>,
    pub kappa: Vec<f64>,
    pub g: Vec<f64>,
}

impl TryFrom<ModelRecord> for FewModeModel {
    type Error = Error;
    fn try_from(r: ModelRecord) -> Result<Self> {
        if r.kappa.len() != r.n_modes {
            return Err(Error::invalid(format!(
                "n_modes = {} but kappa has {} entries",
                r.n_modes,
                r.kappa.len()
            )));
        }
        FewModeModel::new(r.omega_matrix, r.kappa, r.g)
    }
}

impl From<FewModeModel> for ModelRecord {
    fn from(m: FewModeModel) -> Self {
        ModelRecord {
            n_modes: m.n,
            omega_matrix: m.omega,
            kappa: m.kappa,
            g: m.g,
        }
    }
}

impl FewModeModel {
    /// `omega` is the row-major N×N frequency/coupling matrix.
    pub fn new(omega: Vec<f64>, kappa: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let n = g.len();
        if n == 0 {
            return Err(Error::invalid("a few-mode model needs at least one mode"));
        }
        if kappa.len() != n || omega.len() != n * n {
            return Err(Error::invalid(format!(
                "inconsistent model sizes: {} couplings, {} rates, {} matrix entries",
                n,
                kappa.len(),
                omega.len()
            )));
        }
        if omega.iter().chain(&kappa).chain(&g).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        if let Some(k) = kappa.iter().find(|&&k| k < 0.0) {
            return Err(Error::invalid(format!("decay rate {k} is negative")));
        }
        let norm = omega.iter().map(|x| x.abs()).fold(1.0, f64::max);
        let mut omega = omega;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (omega[i * n + j], omega[j * n + i]);
                if (a - b).abs() > 1e-12 * norm {
                    return Err(Error::invalid(format!("omega matrix is not symmetric at ({i}, {j})")));
                }
                let avg = 0.5 * (a + b);
                omega[i * n + j] = avg;
                omega[j * n + i] = avg;
            }
        }
        Ok(FewModeModel { n, omega, kappa, g })
    }

    /// Model without modes; `J_fit ≡ 0`. Deserialization never produces it.
    pub fn empty() -> Self {
        FewModeModel {
            n: 0,
            omega: vec![],
            kappa: vec![],
            g: vec![],
        }
    }

    /// Non-interacting modes, one per Lorentzian line.
    pub fn from_lorentzians(modes: &[LorentzianMode]) -> Result<Self> {
        let n = modes.len();
        let mut omega = vec![0.0; n * n];
        for (i, m) in modes.iter().enumerate() {
            omega[i * n + i] = m.omega0;
        }
        FewModeModel::new(omega, modes.iter().map(|m| m.kappa).collect(), modes.iter().map(|m| m.g).collect())
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn omega(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.n + j]
    }

    pub fn omega_row_major(&self) -> &[f64] {
        &self.omega
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn omega_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.omega)
    }

    /// `H̃ = Ω − (i/2)·diag(κ)`.
    pub fn effective_matrix(&self) -> DMatrix<Complex64> {
        let mut h = self.omega_matrix().map(|x| Complex64::new(x, 0.0));
        for i in 0..self.n {
            h[(i, i)] -= Complex64::new(0.0, 0.5 * self.kappa[i]);
        }
        h
    }

    /// `u = (H̃ − z)⁻¹ g`.
    fn resolvent_vector(&self, z: Complex64) -> Option<DVector<Complex64>> {
        let mut a = self.effective_matrix();
        for i in 0..self.n {
            a[(i, i)] -= z;
        }
        let g = DVector::from_iterator(self.n, self.g.iter().map(|&x| Complex64::new(x, 0.0)));
        if self.n == 1 {
            let d = a[(0, 0)];
            return (d != Complex64::new(0.0, 0.0)).then(|| g / d);
        }
        a.lu().solve(&g)
    }

    /// `gᵀ (H̃ − z)⁻¹ g`.
    pub fn resolvent_form(&self, z: Complex64) -> Result<Complex64> {
        let u = self.resolvent_vector(z).ok_or(Error::Pole(z.re))?;
        Ok(self.g.iter().zip(u.iter()).map(|(&g, &u)| u * g).sum())
    }

    /// `J_fit(ω)`.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        let f = self.resolvent_form(Complex64::new(omega, 0.0))?;
        let v = f.im / PI;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Pole(omega))
        }
    }

    /// `J_fit(ω)` through the manifestly nonnegative form
    /// `(1/π)·Σᵢ (κᵢ/2)·|uᵢ|²` with `u = (H̃ − ω)⁻¹ g`.
    pub fn eval_dissipative_form(&self, omega: f64) -> Result<f64> {
        let u = self.resolvent_vector(Complex64::new(omega, 0.0)).ok_or(Error::Pole(omega))?;
        Ok(u.iter().zip(&self.kappa).map(|(u, k)| 0.5 * k * u.norm_sqr()).sum::<f64>() / PI)
    }

    pub fn eval_many(&self, omegas: &[f64], exec: Exec) -> Result<Vec<f64>> {
        exec.map_slice(omegas, |&w| self.eval(w)).into_iter().collect()
    }

    /// `∫ J_fit dω` over the real line, which equals `Σ gᵢ²`.
    pub fn spectral_sum_rule(&self) -> f64 {
        self.g.iter().map(|g| g * g).sum()
    }

    /// Limit of `ω²·J_fit(ω)` for `|ω| → ∞`: `Σ gᵢ²κᵢ/(2π)`.
    pub fn far_field_coefficient(&self) -> f64 {
        self.g.iter().zip(&self.kappa).map(|(g, k)| g * g * k).sum::<f64>() / (2.0 * PI)
    }

    /// Eigenvalues of Ω (approximate peak positions), widened by the largest rate.
    pub fn feature_points(&self) -> Vec<f64> {
        let kmax = self.kappa.iter().cloned().fold(0.0, f64::max);
        let eig = SymmetricEigen::new(self.omega_matrix()).eigenvalues;
        let mut pts = Vec::with_capacity(3 * self.n);
        for &e in eig.iter() {
            pts.extend([e - kmax, e, e + kmax]);
        }
        pts
    }

    /// Largest |eigenvalue| of Ω plus the largest rate.
    pub fn scale(&self) -> f64 {
        let kmax = self.kappa.iter().cloned().fold(0.0, f64::max);
        let emax = SymmetricEigen::new(self.omega_matrix())
            .eigenvalues
            .iter()
            .map(|e| e.abs())
            .fold(0.0, f64::max);
        (emax + kmax).max(f64::MIN_POSITIVE)
    }

    fn n_params(n: usize) -> usize {
        n * (n + 1) / 2 + 2 * n
    }

    /// Unconstrained parameter vector: upper triangle of Ω (row-major,
    /// diagonal included), then `sᵢ` with `κᵢ = sᵢ²`, then `gᵢ`.
    fn to_params(&self) -> Vec<f64> {
        let n = self.n;
        let mut p = Vec::with_capacity(Self::n_params(n));
        for i in 0..n {
            for j in i..n {
                p.push(self.omega(i, j));
            }
        }
        p.extend(self.kappa.iter().map(|k| k.sqrt()));
        p.extend_from_slice(&self.g);
        p
    }

    fn from_params(n: usize, p: &[f64]) -> Self {
        let mut omega = vec![0.0; n * n];
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                omega[i * n + j] = p[idx];
                omega[j * n + i] = p[idx];
                idx += 1;
            }
        }
        let kappa = p[idx..idx + n].iter().map(|s| s * s).collect();
        let g = p[idx + n..idx + 2 * n].to_vec();
        FewModeModel { n, omega, kappa, g }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
    pub n_grid: usize,
    #[serde(default)]
    pub weighting: Weighting,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64, n_grid: usize) -> Self {
        FitWindow {
            lo,
            hi,
            n_grid,
            weighting: Weighting::Uniform,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.n_grid - 1) as f64;
        (0..self.n_grid).map(|k| self.lo + k as f64 * h).collect()
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::invalid(format!(
                "fit window needs finite lo < hi, got ({}, {})",
                self.lo, self.hi
            )));
        }
        let needed = 2 * FewModeModel::n_params(n_modes);
        if self.n_grid < needed.max(2) {
            return Err(Error::invalid(format!(
                "fit window has {} grid points but {} modes need at least {}",
                self.n_grid, n_modes, needed
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Start from this model instead of the peak-detection heuristic.
    pub initial: Option<FewModeModel>,
    pub exec: Exec,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_restarts: 16,
            seed: 0,
            tol: 1e-10,
            max_iterations: 2000,
            initial: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub model: FewModeModel,
    pub residual_norm: f64,
    pub window: FitWindow,
    pub n_restarts_used: usize,
    pub converged: bool,
}

struct FitProblem {
    n: usize,
    grid: Vec<f64>,
    target: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl FitProblem {
    fn model_values(&self, p: &[f64]) -> FewModeModel {
        FewModeModel::from_params(self.n, p)
    }
}

impl LeastSquares for FitProblem {
    fn n_residuals(&self) -> usize {
        self.grid.len()
    }

    fn residuals(&self, p: &[f64], r: &mut DVector<f64>) {
        let m = self.model_values(p);
        for (k, &w) in self.grid.iter().enumerate() {
            let j = m.eval(w).unwrap_or(f64::NAN);
            r[k] = self.sqrt_w[k] * (j - self.target[k]);
        }
    }

    fn residuals_and_jacobian(&self, p: &[f64], r: &mut DVector<f64>, jac: &mut DMatrix<f64>) {
        let n = self.n;
        let m = self.model_values(p);
        let s_off = n * (n + 1) / 2;
        for (k, &w) in self.grid.iter().enumerate() {
            let sw = self.sqrt_w[k];
            let Some(u) = m.resolvent_vector(Complex64::new(w, 0.0)) else {
                r[k] = f64::NAN;
                continue;
            };
            let form: Complex64 = m.g.iter().zip(u.iter()).map(|(&g, &u)| u * g).sum();
            r[k] = sw * (form.im / PI - self.target[k]);
            let mut idx = 0;
            for i in 0..n {
                for j in i..n {
                    let d = if i == j {
                        -(u[i] * u[i]).im / PI
                    } else {
                        -2.0 * (u[i] * u[j]).im / PI
                    };
                    jac[(k, idx)] = sw * d;
                    idx += 1;
                }
            }
            for i in 0..n {
                jac[(k, s_off + i)] = sw * p[s_off + i] * (u[i] * u[i]).re / PI;
                jac[(k, s_off + n + i)] = sw * 2.0 * u[i].im / PI;
            }
        }
    }
}

/// Peak-detection starting point: the `n_modes` highest local maxima of the
/// target, each seeded as a Lorentzian of matching height and FWHM.
pub fn initial_guess(grid: &[f64], values: &[f64], n_modes: usize) -> FewModeModel {
    let width = grid[grid.len() - 1] - grid[0];
    let mut peaks: Vec<usize> = (1..grid.len() - 1)
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(n_modes);

    let mut modes: Vec<(f64, f64, f64)> = peaks
        .iter()
        .map(|&k| {
            let h = values[k];
            let half = 0.5 * h;
            let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
                let mut prev = k;
                for i in range {
                    if values[i] < half {
                        let (x0, x1, v0, v1) = (grid[prev], grid[i], values[prev], values[i]);
                        return Some(x0 + (half - v0) * (x1 - x0) / (v1 - v0));
                    }
                    prev = i;
                }
                None
            };
            let left = crossing(&mut (0..k).rev());
            let right = crossing(&mut (k + 1..grid.len()));
            let fwhm = match (left, right) {
                (Some(l), Some(r)) => r - l,
                (Some(l), None) => 2.0 * (grid[k] - l),
                (None, Some(r)) => 2.0 * (r - grid[k]),
                (None, None) => width,
            }
            .max(width * 1e-6);
            let g = (PI * fwhm * h / 2.0).sqrt();
            (grid[k], fwhm, g)
        })
        .collect();

    let missing = n_modes - modes.len();
    if missing > 0 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let kappa = width / n_modes as f64;
        let g = 0.5 * (PI * kappa * mean.max(0.0) / 2.0).sqrt();
        for k in 0..missing {
            let w = grid[0] + (k as f64 + 0.5) * width / missing as f64;
            modes.push((w, kappa, g.max(1e-6 * width)));
        }
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = n_modes;
    let mut omega = vec![0.0; n * n];
    for (i, m) in modes.iter().enumerate() {
        omega[i * n + i] = m.0;
    }
    FewModeModel {
        n,
        omega,
        kappa: modes.iter().map(|m| m.1).collect(),
        g: modes.iter().map(|m| m.2).collect(),
    }
}

fn perturb(base: &FewModeModel, width: f64, seed: u64, restart: usize) -> FewModeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n = base.n;
    let mut m = base.clone();
    let mean_kappa = base.kappa.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        m.omega[i * n + i] += rng.random_range(-1.0..1.0) * 0.05 * width;
        m.kappa[i] *= rng.random_range(-0.5f64..0.5).exp();
        m.g[i] *= rng.random_range(-0.25f64..0.25).exp();
        for j in (i + 1)..n {
            let v = m.omega[i * n + j] + rng.random_range(-1.0..1.0) * 0.1 * mean_kappa;
            m.omega[i * n + j] = v;
            m.omega[j * n + i] = v;
        }
    }
    m
}

/// Fits an `n_modes` model to `target` over `window` by multi-start
/// Levenberg–Marquardt. A run that never meets the convergence tests is
/// returned with `converged = false` rather than as an error.
pub fn fit(target: &SpectralDensity, window: &FitWindow, n_modes: usize, options: &FitOptions) -> Result<FitReport> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes must be at least 1"));
    }
    window.validate(n_modes)?;
    if let Some(init) = &options.initial {
        if init.n_modes() != n_modes {
            return Err(Error::invalid(format!(
                "initial model has {} modes, expected {n_modes}",
                init.n_modes()
            )));
        }
    }
    let grid = window.grid();
    let target_values: Vec<f64> = grid.iter().map(|&w| target.evaluate(w)).collect::<Result<_>>()?;
    let peak = target_values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let sqrt_w: Vec<f64> = match window.weighting {
        Weighting::Uniform => vec![1.0; grid.len()],
        Weighting::Relative => target_values.iter().map(|&v| 1.0 / (v.abs() + 1e-3 * peak)).collect(),
    };
    let loss_scale: f64 = target_values
        .iter()
        .zip(&sqrt_w)
        .map(|(v, s)| (v * s).powi(2))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let width = window.hi - window.lo;

    let problem = FitProblem {
        n: n_modes,
        grid,
        target: target_values,
        sqrt_w,
    };
    let lm_opts = LmOptions {
        max_iterations: options.max_iterations,
        gtol: options.tol * loss_scale / width,
        ftol: 1e-15,
        xtol: 1e-15,
        loss_floor: 1e-30 * loss_scale,
    };

    let base = match &options.initial {
        Some(m) => m.clone(),
        None => initial_guess(&problem.grid, &problem.target, n_modes),
    };
    let run = |start: &FewModeModel| {
        let out = lm::minimize(&problem, &start.to_params(), &lm_opts);
        let loss = if out.loss.is_finite() { out.loss } else { f64::INFINITY };
        (FewModeModel::from_params(n_modes, &out.params), loss, out.converged)
    };

    let mut best = run(&base);
    let mut used = 0;
    let exact = best.1 <= 1e-24 * loss_scale;
    if !exact && options.max_restarts > 0 {
        let starts: Vec<FewModeModel> = (1..=options.max_restarts)
            .map(|r| perturb(&base, width, options.seed, r))
            .collect();
        let results = options.exec.map_slice(&starts, run);
        used = results.len();
        for r in results {
            // strict `<` keeps the first-found run on ties
            if r.1 < best.1 {
                best = r;
            }
        }
    }

    let (mut model, loss, converged) = best;
    // Canonical gauge: order modes by diagonal frequency.
    model = model.sorted_by_frequency();
    Ok(FitReport {
        model,
        residual_norm: loss,
        window: *window,
        n_restarts_used: used,
        converged: converged && loss.is_finite(),
    })
}

impl FewModeModel {
    /// Same model with modes permuted into ascending `Ω_ii`; the spectral
    /// density is invariant under the permutation.
    pub fn sorted_by_frequency(&self) -> FewModeModel {
        let n = self.n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.omega(a, a).total_cmp(&self.omega(b, b)).then(a.cmp(&b)));
        let mut omega = vec![0.0; n * n];
        for (i, &oi) in order.iter().enumerate() {
            for (j, &oj) in order.iter().enumerate() {
                omega[i * n + j] = self.omega(oi, oj);
            }
        }
        FewModeModel {
            n,
            omega,
            kappa: order.iter().map(|&i| self.kappa[i]).collect(),
            g: order.iter().map(|&i| self.g[i]).collect(),
        }
    }
}
