//! Perturbative (Markovian) treatment of the residual spectral density
//! `ΔJ = J − J_fit`: Casimir–Polder shifts from principal-value integrals,
//! signed decay rates, and the reaction-mode validity check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitmodel::FewModeModel;
use crate::quad::{self, QuadOptions};
use crate::specdens::SpectralDensity;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MarkovParams {
    /// Shift entering `H_CP = −Δ_mod σ⁺σ⁻`.
    pub delta_mod: f64,
    /// Rate of the `D[σ⁻]` dissipator; may be negative.
    pub gamma_mod: f64,
    /// Counter-rotating shift entering `H̃_CP = −Δ̃_mod σ⁺σ⁻`.
    pub delta_mod_tilde: f64,
    /// Rate of the `D[σ⁺]` dissipator; negative when J vanishes below ω = 0.
    pub gamma_mod_tilde: f64,
}

impl MarkovParams {
    pub fn has_negative_rate(&self) -> bool {
        self.gamma_mod < 0.0 || self.gamma_mod_tilde < 0.0
    }
}

/// `ΔJ = physical − J_fit`, represented as a `Difference`.
pub fn residual(physical: &SpectralDensity, model: &FewModeModel) -> SpectralDensity {
    SpectralDensity::difference(physical.clone(), SpectralDensity::Fitted(model.clone()))
}

#[derive(Debug, Clone, Copy)]
pub struct PvOptions {
    pub rel_tol: f64,
    /// Integration runs over `|ω| ≤ cutoff_factor · scale`.
    pub cutoff_factor: f64,
}

impl Default for PvOptions {
    fn default() -> Self {
        PvOptions {
            rel_tol: 1e-9,
            cutoff_factor: 1e6,
        }
    }
}

/// `P∫ f(ω)/(ω − c) dω` over the (truncated) real line.
pub fn principal_value_integral(f: &SpectralDensity, c: f64, opts: &PvOptions) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::invalid(format!("pole position {c} is not finite")));
    }
    if f.has_unbounded_tail() {
        return Err(Error::invalid(
            "principal value diverges for a free-space term; pass the scattered part J_s only",
        ));
    }
    let scale = f.scale().max(c.abs());
    let cutoff = opts.cutoff_factor * scale;
    let mut pts = f.feature_points();
    pts.extend(quad::geometric_points(0.0, scale, opts.cutoff_factor.log10().ceil() as u32));
    pts.extend([c, -c]);

    let magnitude = pts
        .iter()
        .filter(|p| p.abs() <= 10.0 * scale)
        .map(|&p| f.value(p).abs())
        .fold(f.value(c).abs(), f64::max);
    let qopts = QuadOptions {
        rel_tol: opts.rel_tol,
        abs_tol: 1e-15 * magnitude.max(f64::MIN_POSITIVE),
        max_intervals: 20_000,
    };
    let r = quad::principal_value(|w| f.value(w), c, -cutoff, cutoff, &pts, &qopts)?;
    Ok(r.value)
}

/// `Δ_mod = P∫ ΔJ_s(ω)/(ω − ω_e) dω`.
pub fn delta_mod(delta_j_s: &SpectralDensity, omega_e: f64) -> Result<f64> {
    principal_value_integral(delta_j_s, omega_e, &PvOptions::default())
}

/// `γ_mod = 2π·ΔJ(ω_e)`, returned with its sign.
pub fn gamma_mod(delta_j: &SpectralDensity, omega_e: f64) -> Result<f64> {
    Ok(2.0 * PI * delta_j.evaluate(omega_e)?)
}

/// `(Δ̃_mod, γ̃_mod)` with `Δ̃_mod = −P∫ ΔJ_s(ω)/(ω + ω_e) dω` and
/// `γ̃_mod = 2π·ΔJ(−ω_e)`.
pub fn tilde_params(delta_j_s: &SpectralDensity, delta_j: &SpectralDensity, omega_e: f64) -> Result<(f64, f64)> {
    let shift = -principal_value_integral(delta_j_s, -omega_e, &PvOptions::default())?;
    let rate = 2.0 * PI * delta_j.evaluate(-omega_e)?;
    Ok((shift, rate))
}

pub fn markov_params(delta_j_s: &SpectralDensity, delta_j: &SpectralDensity, omega_e: f64) -> Result<MarkovParams> {
    let (delta_mod_tilde, gamma_mod_tilde) = tilde_params(delta_j_s, delta_j, omega_e)?;
    Ok(MarkovParams {
        delta_mod: delta_mod(delta_j_s, omega_e)?,
        gamma_mod: gamma_mod(delta_j, omega_e)?,
        delta_mod_tilde,
        gamma_mod_tilde,
    })
}

/// Markov parameters of `physical − J_fit`. Shifts use the scattered part
/// only; a free-space Lamb shift is taken as already absorbed into `ω_e`.
pub fn correct(physical: &SpectralDensity, model: &FewModeModel, omega_e: f64) -> Result<MarkovParams> {
    let delta_j = residual(physical, model);
    let delta_j_s = residual(&physical.scattered(), model);
    markov_params(&delta_j_s, &delta_j, omega_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFlag {
    /// `g²` vanishes: no residual weight, effective frequency undefined.
    Degenerate,
    /// `g² < 0`: the residual is net negative and β is undefined.
    NetNegative,
}

/// Reaction-mode summary of ΔJ on one side of the emitter frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
    pub g2: f64,
    pub omega: Option<f64>,
    pub beta: Option<f64>,
    pub flag: Option<RegionFlag>,
    /// `|g²|/(ω − ω_e)²`, defined also for net-negative regions. A
    /// supplementary magnitude, not the β of the validity condition.
    pub beta_magnitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub omega_e: f64,
    pub minus: Region,
    pub plus: Region,
}

impl ValidityReport {
    pub fn beta_minus(&self) -> Option<f64> {
        self.minus.beta
    }
    pub fn beta_plus(&self) -> Option<f64> {
        self.plus.beta
    }
    pub fn g2_minus(&self) -> f64 {
        self.minus.g2
    }
    pub fn g2_plus(&self) -> f64 {
        self.plus.g2
    }
    pub fn omega_minus(&self) -> Option<f64> {
        self.minus.omega
    }
    pub fn omega_plus(&self) -> Option<f64> {
        self.plus.omega
    }

    /// Largest β over both regions, `None` if either is undefined.
    pub fn max_beta(&self) -> Option<f64> {
        Some(self.minus.beta?.max(self.plus.beta?))
    }
}

fn region(delta_j: &SpectralDensity, omega_e: f64, lo: f64, hi: f64) -> Result<Region> {
    let pts = delta_j.feature_points();
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_intervals: 20_000,
    };
    let g2 = quad::integrate_with_points(|w| delta_j.value(w), lo, hi, &pts, &opts)?.value;
    let first = quad::integrate_with_points(|w| w * delta_j.value(w), lo, hi, &pts, &opts)?.value;
    let (omega, beta, flag) = if g2 == 0.0 {
        (None, Some(0.0), Some(RegionFlag::Degenerate))
    } else if g2 < 0.0 {
        (Some(first / g2), None, Some(RegionFlag::NetNegative))
    } else {
        let w = first / g2;
        let detuning = w - omega_e;
        if detuning == 0.0 {
            (Some(w), None, Some(RegionFlag::Degenerate))
        } else {
            (Some(w), Some(g2 / (detuning * detuning)), None)
        }
    };
    let beta_magnitude = omega
        .map(|w| (w - omega_e).powi(2))
        .filter(|&d2| d2 > 0.0)
        .map(|d2| g2.abs() / d2)
        .or(if g2 == 0.0 { Some(0.0) } else { None });
    Ok(Region {
        lo,
        hi,
        g2,
        omega,
        beta,
        flag,
        beta_magnitude,
    })
}

/// `β± = g±²/(ω± − ω_e)²` with `g±² = ∫ ΔJ` and `ω± = ∫ ω ΔJ / g±²` over
/// `A₋ = (a, ω_e)` and `A₊ = (ω_e, b)`.
pub fn validity_beta(delta_j: &SpectralDensity, omega_e: f64, bounds: (f64, f64)) -> Result<ValidityReport> {
    let (a, b) = bounds;
    if !(a < omega_e && omega_e < b) {
        return Err(Error::invalid(format!(
            "validity bounds ({a}, {b}) must bracket omega_e = {omega_e}"
        )));
    }
    Ok(ValidityReport {
        omega_e,
        minus: region(delta_j, omega_e, a, omega_e)?,
        plus: region(delta_j, omega_e, omega_e, b)?,
    })
}

/// Default β bounds `(0, 3ω_e)`.
pub fn default_beta_bounds(omega_e: f64) -> (f64, f64) {
    (0.0, 3.0 * omega_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specdens::{CoupledOhmic, LorentzianMode};
    use approx::assert_relative_eq;

    fn zero() -> SpectralDensity {
        SpectralDensity::lorentzians(vec![])
    }

    #[test]
    fn zero_residual_gives_zero_params() {
        let z = zero();
        assert_eq!(delta_mod(&z, 1.0).unwrap(), 0.0);
        assert_eq!(gamma_mod(&z, 1.0).unwrap(), 0.0);
        assert_eq!(tilde_params(&z, &z, 1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn residual_of_own_model_vanishes() {
        let m = FewModeModel::new(vec![1.0, 0.1, 0.1, 1.5], vec![0.1, 0.2], vec![0.2, 0.3]).unwrap();
        let dj = residual(&SpectralDensity::Fitted(m.clone()), &m);
        for k in 0..200 {
            let w = -2.0 + 0.03 * k as f64;
            assert!(dj.evaluate(w).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn residual_of_two_lines_is_the_other_line() {
        let a = LorentzianMode::new(0.1, 1.0, 0.05).unwrap();
        let b = LorentzianMode::new(0.07, 1.6, 0.08).unwrap();
        let physical = SpectralDensity::lorentzians(vec![a, b]);
        let model = FewModeModel::from_lorentzians(&[a]).unwrap();
        let dj = residual(&physical, &model);
        for k in 0..100 {
            let w = 0.5 + 0.02 * k as f64;
            assert!((dj.evaluate(w).unwrap() - b.value(w)).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_below_zero_frequency_is_minus_fit() {
        let physical = SpectralDensity::CoupledOhmic(CoupledOhmic::new(0.25, 0.58, 0.1).unwrap());
        let model = FewModeModel::new(vec![0.58], vec![0.1], vec![0.25]).unwrap();
        let dj = residual(&physical, &model);
        for w in [-0.1, -0.58, -3.0] {
            let v = dj.evaluate(w).unwrap();
            assert!(v <= 0.0);
            assert_eq!(v, -model.eval(w).unwrap());
        }
    }

    #[test]
    fn gamma_passes_sign_through() {
        let t = SpectralDensity::Tabulated(crate::specdens::Tabulated::new(vec![0.0, 2.0], vec![0.001, 0.001]).unwrap());
        assert_relative_eq!(gamma_mod(&t, 1.0).unwrap(), 2.0 * PI * 0.001, max_relative = 1e-15);
        let neg = SpectralDensity::difference(zero(), t);
        assert_relative_eq!(gamma_mod(&neg, 1.0).unwrap(), -2.0 * PI * 0.001, max_relative = 1e-15);
    }

    #[test]
    fn tabulated_shift_includes_window_edges() {
        // Flat J = c on [a, b]: P∫ c/(ω − ω_e) = c·ln((b − ω_e)/(ω_e − a)).
        let t = SpectralDensity::Tabulated(crate::specdens::Tabulated::new(vec![0.0, 3.0], vec![0.01, 0.01]).unwrap());
        let v = delta_mod(&t, 1.0).unwrap();
        assert_relative_eq!(v, 0.01 * 2f64.ln(), max_relative = 1e-8);
    }

    #[test]
    fn free_space_is_rejected_in_shift() {
        let fs = SpectralDensity::FreeSpace(crate::specdens::FreeSpace {
            dipole_e_nm: 0.5,
            unit: crate::units::EnergyUnit::Ev,
        });
        assert!(matches!(delta_mod(&fs, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_residual_is_degenerate_for_beta() {
        let r = validity_beta(&zero(), 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(r.beta_minus(), Some(0.0));
        assert_eq!(r.beta_plus(), Some(0.0));
        assert_eq!(r.minus.flag, Some(RegionFlag::Degenerate));
        assert_eq!(r.omega_plus(), None);
    }

    #[test]
    fn negative_region_has_no_beta() {
        let l = LorentzianMode::new(0.1, 2.0, 0.1).unwrap();
        let dj = SpectralDensity::difference(zero(), SpectralDensity::lorentzians(vec![l]));
        let r = validity_beta(&dj, 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(r.plus.flag, Some(RegionFlag::NetNegative));
        assert!(r.beta_plus().is_none());
        assert!(r.max_beta().is_none());
        let m = r.plus.beta_magnitude.unwrap();
        let w = r.omega_plus().unwrap();
        assert!((m - r.g2_plus().abs() / (w - 1.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn bounds_must_bracket_emitter() {
        assert!(validity_beta(&zero(), 1.0, (1.5, 3.0)).is_err());
    }
}
