//! Exact reference dynamics from a directly discretized bath.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{EmitterParams, Trajectory};
use crate::ode::{self, OdeOptions};
use crate::par::Exec;
use crate::sparse::Csr;
use crate::specdens::SpectralDensity;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Discrete bath realizing `J(ω) ≈ Σ g_k² δ(ω − ω_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub gs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl DiscretizedBath {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn delta_omega(&self) -> f64 {
        (self.hi - self.lo) / self.len() as f64
    }

    pub fn total_weight(&self) -> f64 {
        self.gs.iter().map(|g| g * g).sum()
    }

    /// Time `2πħ/Δω` after which the discrete bath revives.
    pub fn recurrence_time(&self, hbar: f64) -> f64 {
        2.0 * std::f64::consts::PI * hbar / self.delta_omega()
    }

    /// Same bath with every coupling set to zero.
    pub fn decoupled(&self) -> Self {
        DiscretizedBath {
            gs: vec![0.0; self.len()],
            ..self.clone()
        }
    }
}

/// Midpoint discretization of `j` on `[a, b]` into `m` modes.
pub fn discretize(j: &SpectralDensity, range: (f64, f64), m: usize) -> Result<DiscretizedBath> {
    discretize_with(j, range, m, Exec::default())
}

pub fn discretize_with(j: &SpectralDensity, range: (f64, f64), m: usize, exec: Exec) -> Result<DiscretizedBath> {
    let (a, b) = range;
    if !(a < b && a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("discretization range ({a}, {b}) is empty or infinite")));
    }
    if m == 0 {
        return Err(Error::invalid("bath needs at least one mode"));
    }
    let dw = (b - a) / m as f64;
    let omegas: Vec<f64> = (0..m).map(|k| a + (k as f64 + 0.5) * dw).collect();
    let values = exec.map_slice(&omegas, |&w| j.evaluate(w));
    let mut gs = Vec::with_capacity(m);
    for (w, v) in omegas.iter().zip(values) {
        let v = v?;
        if v < 0.0 {
            return Err(Error::invalid(format!(
                "J({w}) = {v:e} is negative; only nonnegative spectral densities can be discretized"
            )));
        }
        gs.push((v * dw).sqrt());
    }
    Ok(DiscretizedBath {
        omegas,
        gs,
        lo: a,
        hi: b,
    })
}

fn recurrence_warning(bath: &DiscretizedBath, times: &[f64], hbar: f64) -> Vec<String> {
    let span = times.last().unwrap_or(&0.0) - times.first().unwrap_or(&0.0);
    let t_rec = bath.recurrence_time(hbar);
    if span >= 0.8 * t_rec {
        vec![format!(
            "duration {span} exceeds 0.8 of the bath recurrence time {t_rec}; expect artificial revivals"
        )]
    } else {
        vec![]
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    Ok(())
}

/// Single-excitation amplitudes in the frame rotating at `ω_e`:
/// `ċ_e = −(i/ħ) Σ g_k c_k`, `ċ_k = −(i/ħ)((ω_k − ω_e) c_k + g_k c_e)`.
pub fn exact_rwa(emitter: &EmitterParams, bath: &DiscretizedBath, times: &[f64], hbar: f64) -> Result<Trajectory> {
    exact_rwa_with(emitter, bath, times, hbar, &OdeOptions::default())
}

pub fn exact_rwa_with(
    emitter: &EmitterParams,
    bath: &DiscretizedBath,
    times: &[f64],
    hbar: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    emitter.validate()?;
    check_times(times)?;
    let weight = emitter.initial_state.amplitudes().1.norm_sqr();
    let m = bath.len();
    let det: Vec<f64> = bath.omegas.iter().map(|w| w - emitter.omega_e).collect();
    let gs = &bath.gs;
    let s = Complex64::new(0.0, -1.0 / hbar);
    let mut y0 = vec![ZERO; m + 1];
    y0[0] = Complex64::new(1.0, 0.0);

    let mut traj = Trajectory {
        times: times.to_vec(),
        warnings: recurrence_warning(bath, times, hbar),
        ..Default::default()
    };
    ode::integrate(
        |_, y, dy| {
            let ce = y[0];
            let mut acc = ZERO;
            for k in 0..m {
                acc += y[k + 1] * gs[k];
                dy[k + 1] = s * (y[k + 1] * det[k] + ce * gs[k]);
            }
            dy[0] = s * acc;
        },
        y0,
        times,
        opts,
        |_, _, y| {
            let norm: f64 = y.iter().map(|c| c.norm_sqr()).sum();
            traj.emitter_population.push(weight * y[0].norm_sqr());
            traj.trace_drift.push((norm - 1.0).abs());
        },
    )?;
    Ok(traj)
}

/// Largest bath for which [`exact_rwa_eigen`] is offered.
pub const EIGEN_MAX_MODES: usize = 2000;

/// Same dynamics as [`exact_rwa`], by diagonalizing the arrowhead matrix.
pub fn exact_rwa_eigen(emitter: &EmitterParams, bath: &DiscretizedBath, times: &[f64], hbar: f64) -> Result<Trajectory> {
    emitter.validate()?;
    check_times(times)?;
    let m = bath.len();
    if m > EIGEN_MAX_MODES {
        return Err(Error::Resource(format!(
            "diagonalization is limited to {EIGEN_MAX_MODES} modes, bath has {m}"
        )));
    }
    let weight = emitter.initial_state.amplitudes().1.norm_sqr();
    let mut h = nalgebra::DMatrix::<f64>::zeros(m + 1, m + 1);
    for k in 0..m {
        h[(k + 1, k + 1)] = bath.omegas[k] - emitter.omega_e;
        h[(0, k + 1)] = bath.gs[k];
        h[(k + 1, 0)] = bath.gs[k];
    }
    let eig = h.symmetric_eigen();
    let w: Vec<f64> = (0..=m).map(|n| eig.eigenvectors[(0, n)].powi(2)).collect();
    let mut traj = Trajectory {
        times: times.to_vec(),
        warnings: recurrence_warning(bath, times, hbar),
        ..Default::default()
    };
    for &t in times {
        let t = t - times[0];
        let ce: Complex64 = (0..=m)
            .map(|n| Complex64::from_polar(w[n], -eig.eigenvalues[n] * t / hbar))
            .sum();
        traj.emitter_population.push(weight * ce.norm_sqr());
        traj.trace_drift.push(0.0);
    }
    Ok(traj)
}

/// Options for [`exact_truncated`].
#[derive(Debug, Clone, Copy)]
pub struct TruncatedOptions {
    /// Keep `σ⁺a_k† + σ⁻a_k`; without them the dynamics reduces to RWA.
    pub counter_rotating: bool,
    pub basis_cap: usize,
    pub ode: OdeOptions,
    pub exec: Exec,
}

impl Default for TruncatedOptions {
    fn default() -> Self {
        TruncatedOptions {
            counter_rotating: true,
            basis_cap: 200_000,
            ode: OdeOptions::default(),
            exec: Exec::default(),
        }
    }
}

/// Emitter state plus an occupied-mode multiset of at most three entries,
/// stored sorted and padded with `u32::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct State {
    excited: bool,
    modes: [u32; 3],
    len: u8,
}

impl State {
    fn vacuum(excited: bool) -> Self {
        State {
            excited,
            modes: [u32::MAX; 3],
            len: 0,
        }
    }

    fn modes(&self) -> &[u32] {
        &self.modes[..self.len as usize]
    }

    fn excitations(&self) -> usize {
        self.len as usize + self.excited as usize
    }

    fn count(&self, k: u32) -> usize {
        self.modes().iter().filter(|&&m| m == k).count()
    }

    fn with_added(&self, k: u32, excited: bool) -> Self {
        let mut s = *self;
        s.modes[s.len as usize] = k;
        s.len += 1;
        s.modes[..s.len as usize].sort_unstable();
        s.excited = excited;
        s
    }

    fn with_removed(&self, k: u32, excited: bool) -> Self {
        let mut s = *self;
        let pos = s.modes().iter().position(|&m| m == k).unwrap();
        s.modes[pos] = u32::MAX;
        s.modes.sort_unstable();
        s.len -= 1;
        s.excited = excited;
        s
    }

    /// Lexicographic order of the occupation vectors `(s, n_1, …, n_M)`.
    fn lex_cmp(&self, other: &Self) -> Ordering {
        match self.excited.cmp(&other.excited) {
            Ordering::Equal => {}
            o => return o,
        }
        let (a, b) = (self.modes(), other.modes());
        let (mut i, mut j) = (0, 0);
        loop {
            match (a.get(i), b.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&ma), Some(&mb)) => {
                    if ma != mb {
                        // The lower mode index is occupied in only one of them.
                        return if ma < mb { Ordering::Greater } else { Ordering::Less };
                    }
                    let ca = a[i..].iter().take_while(|&&m| m == ma).count();
                    let cb = b[j..].iter().take_while(|&&m| m == mb).count();
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    i += ca;
                    j += cb;
                }
            }
        }
    }

    /// Basis states coupled to `self` by the Hamiltonian, with amplitudes.
    fn neighbors(&self, gs: &[f64], k_max: usize, counter_rotating: bool, out: &mut Vec<(State, f64)>) {
        out.clear();
        let mut distinct: Vec<u32> = self.modes().to_vec();
        distinct.dedup();
        let can_add = self.len < 3;
        if self.excited {
            // σ⁻a_k† keeps the excitation count
            if can_add {
                for (k, &g) in gs.iter().enumerate() {
                    let n = self.count(k as u32);
                    out.push((self.with_added(k as u32, false), g * ((n + 1) as f64).sqrt()));
                }
            }
            if counter_rotating {
                for &k in &distinct {
                    let n = self.count(k);
                    out.push((self.with_removed(k, false), gs[k as usize] * (n as f64).sqrt()));
                }
            }
        } else {
            for &k in &distinct {
                let n = self.count(k);
                out.push((self.with_removed(k, true), gs[k as usize] * (n as f64).sqrt()));
            }
            if counter_rotating && can_add && self.excitations() + 2 <= k_max {
                for (k, &g) in gs.iter().enumerate() {
                    let n = self.count(k as u32);
                    out.push((self.with_added(k as u32, true), g * ((n + 1) as f64).sqrt()));
                }
            }
        }
        out.retain(|(s, g)| s.excitations() <= k_max && *g != 0.0);
    }
}

/// Enumerates the sector reachable from the seeds, in lexicographic order.
fn enumerate_basis(seeds: &[State], gs: &[f64], k_max: usize, counter_rotating: bool, cap: usize) -> Result<Vec<State>> {
    let mut seen: HashMap<State, ()> = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        if seen.insert(s, ()).is_none() {
            queue.push_back(s);
        }
    }
    let mut nb = Vec::new();
    while let Some(s) = queue.pop_front() {
        s.neighbors(gs, k_max, counter_rotating, &mut nb);
        for &(t, _) in &nb {
            if !seen.contains_key(&t) {
                if seen.len() >= cap {
                    return Err(Error::Resource(format!(
                        "truncated basis exceeds {cap} states; use fewer bath modes or a lower max_excitations"
                    )));
                }
                seen.insert(t, ());
                queue.push_back(t);
            }
        }
    }
    let mut states: Vec<State> = seen.into_keys().collect();
    states.sort_by(|a, b| a.lex_cmp(b));
    Ok(states)
}

/// Number of states with at most `k_max` excitations, for a bath of `m`
/// modes, before any symmetry reduction.
pub fn truncated_dimension(m: usize, k_max: usize) -> usize {
    // multisets of size k from m modes: C(m + k − 1, k)
    let multisets = |k: usize| -> usize {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (m + i) as u128 / (i + 1) as u128;
        }
        c as usize
    };
    (0..=k_max)
        .map(|k| multisets(k) + if k >= 1 { multisets(k - 1) } else { 0 })
        .sum()
}

/// Full emitter–bath Hamiltonian on the basis of at most `max_excitations`
/// quanta, propagated unitarily from `emitter.initial_state ⊗ vacuum`.
pub fn exact_truncated(
    emitter: &EmitterParams,
    bath: &DiscretizedBath,
    max_excitations: usize,
    times: &[f64],
    hbar: f64,
    opts: &TruncatedOptions,
) -> Result<Trajectory> {
    emitter.validate()?;
    check_times(times)?;
    if !(1..=3).contains(&max_excitations) {
        return Err(Error::invalid(format!(
            "max_excitations must be 1, 2 or 3, got {max_excitations}"
        )));
    }
    let (cg, ce) = emitter.initial_state.amplitudes();
    let mut seeds = vec![];
    if cg != ZERO {
        seeds.push(State::vacuum(false));
    }
    if ce != ZERO {
        seeds.push(State::vacuum(true));
    }
    let states = enumerate_basis(&seeds, &bath.gs, max_excitations, opts.counter_rotating, opts.basis_cap)?;
    let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    // Energies are measured from ω_e; a global shift only changes the phase.
    let omega_e = emitter.omega_e;
    let rows: Vec<Vec<(usize, f64)>> = opts.exec.map_slice(&states, |s| {
        let mut nb = Vec::new();
        s.neighbors(&bath.gs, max_excitations, opts.counter_rotating, &mut nb);
        let mut row: Vec<(usize, f64)> = nb.iter().map(|(t, g)| (index[t], *g)).collect();
        let diag = if s.excited { omega_e } else { 0.0 } - omega_e
            + s.modes().iter().map(|&k| bath.omegas[k as usize]).sum::<f64>();
        row.push((index[s], diag));
        row
    });
    let h = Csr::from_rows(states.len(), rows);

    let mut y0 = vec![ZERO; states.len()];
    if cg != ZERO {
        y0[index[&State::vacuum(false)]] = cg;
    }
    if ce != ZERO {
        y0[index[&State::vacuum(true)]] = ce;
    }
    let excited: Vec<bool> = states.iter().map(|s| s.excited).collect();
    let scale = Complex64::new(0.0, -1.0 / hbar);
    let mut traj = Trajectory {
        times: times.to_vec(),
        warnings: recurrence_warning(bath, times, hbar),
        ..Default::default()
    };
    ode::integrate(
        |_, y, dy| h.apply_complex(y, scale, dy, opts.exec),
        y0,
        times,
        &opts.ode,
        |_, _, y| {
            let mut pe = 0.0;
            let mut norm = 0.0;
            for (c, &e) in y.iter().zip(&excited) {
                let p = c.norm_sqr();
                norm += p;
                if e {
                    pe += p;
                }
            }
            traj.emitter_population.push(pe);
            traj.trace_drift.push((norm - 1.0).abs());
        },
    )?;
    Ok(traj)
}

/// Reference population below which ε_r is replaced by the absolute error.
pub const FLAG_THRESHOLD: f64 = 1e-6;

/// `ε_r(t) = |p − p_ref| / p_ref` on the reference grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
    /// Points where the reference is below [`FLAG_THRESHOLD`]; `eps` then
    /// holds the absolute error.
    pub flagged: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub max: f64,
    pub mean: f64,
    pub flagged_fraction: f64,
    pub t_at_max: f64,
}

impl ErrorSeries {
    /// Statistics over unflagged points.
    pub fn summary(&self) -> ErrorSummary {
        let mut max = 0.0;
        let mut t_at_max = self.times.first().copied().unwrap_or(0.0);
        let mut sum = 0.0;
        let mut n = 0usize;
        for ((&t, &e), &f) in self.times.iter().zip(&self.eps).zip(&self.flagged) {
            if f {
                continue;
            }
            if e > max {
                max = e;
                t_at_max = t;
            }
            sum += e;
            n += 1;
        }
        let total = self.times.len().max(1);
        ErrorSummary {
            max,
            mean: if n > 0 { sum / n as f64 } else { 0.0 },
            flagged_fraction: (total - n.min(total)) as f64 / total as f64,
            t_at_max,
        }
    }

    pub fn max_unflagged(&self) -> f64 {
        self.summary().max
    }
}

fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let k = ts.partition_point(|&x| x <= t);
    if k == 0 {
        return ys[0];
    }
    if k >= ts.len() {
        return ys[ts.len() - 1];
    }
    let (t0, t1) = (ts[k - 1], ts[k]);
    let w = (t - t0) / (t1 - t0);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}

/// ε_r of `test` against `reference`, evaluated at the reference times that
/// lie inside the test range (the test series is linearly interpolated).
pub fn relative_error(test: &Trajectory, reference: &Trajectory) -> Result<ErrorSeries> {
    if test.is_empty() || reference.is_empty() {
        return Err(Error::invalid("cannot compare empty trajectories"));
    }
    let (lo, hi) = (test.times[0], test.times[test.len() - 1]);
    let tol = 1e-12 * (hi - lo).abs().max(1.0);
    let mut out = ErrorSeries {
        times: vec![],
        eps: vec![],
        flagged: vec![],
    };
    for (&t, &p_ref) in reference.times.iter().zip(&reference.emitter_population) {
        if t < lo - tol || t > hi + tol {
            continue;
        }
        let p = interpolate(&test.times, &test.emitter_population, t);
        let flag = p_ref.abs() < FLAG_THRESHOLD;
        let err = (p - p_ref).abs();
        out.times.push(t);
        out.eps.push(if flag { err } else { err / p_ref.abs() });
        out.flagged.push(flag);
    }
    if out.times.is_empty() {
        return Err(Error::invalid(format!(
            "time ranges do not overlap: test covers [{lo}, {hi}], reference [{}, {}]",
            reference.times[0],
            reference.times[reference.len() - 1]
        )));
    }
    Ok(out)
}
