//! Spectral densities J(ω): evaluation, ingestion and integration.

use std::f64::consts::PI;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitmodel::FewModeModel;
use crate::quad::{self, QuadOptions};
use crate::units::EnergyUnit;

/// One Lorentzian line `(g²/π)(κ/2)/((ω − ω₀)² + (κ/2)²)`, normalized so that
/// its integral over the real line is `g²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianMode {
    pub g: f64,
    pub omega0: f64,
    pub kappa: f64,
}

impl LorentzianMode {
    pub fn new(g: f64, omega0: f64, kappa: f64) -> Result<Self> {
        let m = LorentzianMode { g, omega0, kappa };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.omega0.is_finite() && self.kappa.is_finite()) {
            return Err(Error::invalid("Lorentzian parameters must be finite"));
        }
        if self.g < 0.0 {
            return Err(Error::invalid(format!("Lorentzian coupling g = {} is negative", self.g)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::invalid(format!("Lorentzian width kappa = {} must be positive", self.kappa)));
        }
        Ok(())
    }

    pub fn value(&self, omega: f64) -> f64 {
        let hw = 0.5 * self.kappa;
        let d = omega - self.omega0;
        self.g * self.g / PI * hw / (d * d + hw * hw)
    }

    /// Peak height `2g²/(πκ)`.
    pub fn peak(&self) -> f64 {
        2.0 * self.g * self.g / (PI * self.kappa)
    }
}

/// A single oscillator at `ω_c` damped by an Ohmic background,
/// `θ(ω)·(2g²/π)·κω_cω/((ω² − ω_c²)² + κ²ω²)`.
///
/// For `κ ≪ ω_c` this reduces to a Lorentzian of weight `g²` and width `κ`
/// around `ω_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOhmic {
    pub g: f64,
    pub omega_c: f64,
    pub kappa: f64,
}

impl CoupledOhmic {
    pub fn new(g: f64, omega_c: f64, kappa: f64) -> Result<Self> {
        let m = CoupledOhmic { g, omega_c, kappa };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.omega_c.is_finite() && self.kappa.is_finite()) {
            return Err(Error::invalid("coupled-Ohmic parameters must be finite"));
        }
        if self.g < 0.0 || self.omega_c <= 0.0 || self.kappa <= 0.0 {
            return Err(Error::invalid(format!(
                "coupled-Ohmic needs g >= 0, omega_c > 0, kappa > 0 (got g={}, omega_c={}, kappa={})",
                self.g, self.omega_c, self.kappa
            )));
        }
        Ok(())
    }

    pub fn value(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        let w2 = omega * omega;
        let wc2 = self.omega_c * self.omega_c;
        let den = (w2 - wc2) * (w2 - wc2) + self.kappa * self.kappa * w2;
        2.0 * self.g * self.g / PI * self.kappa * self.omega_c * omega / den
    }

    /// Closed-form `∫₀^∞ J dω`.
    pub fn total_weight(&self) -> f64 {
        let (k, wc) = (self.kappa, self.omega_c);
        let a = wc * wc - 0.5 * k * k;
        let b = (k * k * wc * wc - 0.25 * k.powi(4)).sqrt();
        self.g * self.g / PI * k * wc / b * (0.5 * PI + (a / b).atan())
    }
}

/// Piecewise-linear J(ω) on a strictly ascending grid; zero outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRaw")]
pub struct Tabulated {
    grid: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct TabulatedRaw {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<TabulatedRaw> for Tabulated {
    type Error = Error;
    fn try_from(raw: TabulatedRaw) -> Result<Self> {
        Tabulated::new(raw.grid, raw.values)
    }
}

impl Tabulated {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "tabulated grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::invalid("tabulated spectral density needs at least 2 points"));
        }
        for (i, (x, v)) in grid.iter().zip(&values).enumerate() {
            if !x.is_finite() || !v.is_finite() {
                return Err(Error::invalid(format!("tabulated row {i} is not finite")));
            }
            if *v < 0.0 {
                return Err(Error::invalid(format!("tabulated row {i} has negative J = {v}")));
            }
            if i > 0 && grid[i - 1] >= *x {
                return Err(Error::invalid(format!("tabulated grid not strictly ascending at row {i}")));
            }
        }
        Ok(Tabulated { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, omega: f64) -> f64 {
        let n = self.grid.len();
        if omega < self.grid[0] || omega > self.grid[n - 1] {
            return 0.0;
        }
        let i = self.grid.partition_point(|&x| x <= omega);
        if i == 0 {
            return self.values[0];
        }
        let (x0, v0) = (self.grid[i - 1], self.values[i - 1]);
        if omega == x0 || i == n {
            return v0;
        }
        let (x1, v1) = (self.grid[i], self.values[i]);
        v0 + (v1 - v0) * (omega - x0) / (x1 - x0)
    }
}

// CODATA 2018 exact/recommended values.
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const HBAR_SI: f64 = 1.054_571_817e-34;

/// Free-space emitter spectral density `d²ω³/(6π²ε₀c³)` for a dipole moment
/// given in e·nm, evaluated in the chosen energy unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeSpace {
    pub dipole_e_nm: f64,
    pub unit: EnergyUnit,
}

impl FreeSpace {
    /// Coefficient `C` such that `J(E) = C·E³` with energies in `unit`.
    pub fn coefficient(&self) -> f64 {
        let d = self.dipole_e_nm * ELEMENTARY_CHARGE * 1e-9;
        // J in joules for ħω = 1 eV
        let omega = ELEMENTARY_CHARGE / HBAR_SI;
        let joules = d * d * omega.powi(3) / (6.0 * PI * PI * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT.powi(3));
        let per_ev = joules / ELEMENTARY_CHARGE;
        per_ev * self.unit.in_ev().powi(2)
    }

    pub fn value(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            0.0
        } else {
            self.coefficient() * omega.powi(3)
        }
    }
}

/// `J₀(ω)` for a dipole `d` (e·nm) at energy `omega` (in `unit`).
pub fn free_space_j(dipole_e_nm: f64, omega: f64, unit: EnergyUnit) -> Result<f64> {
    if !omega.is_finite() || !dipole_e_nm.is_finite() {
        return Err(Error::invalid("free-space J needs finite inputs"));
    }
    if omega < 0.0 {
        return Err(Error::invalid(format!("free-space J is defined for omega >= 0, got {omega}")));
    }
    Ok(FreeSpace { dipole_e_nm, unit }.value(omega))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SpectralDensity {
    LorentzianSum { modes: Vec<LorentzianMode> },
    CoupledOhmic(CoupledOhmic),
    Tabulated(Tabulated),
    FreeSpace(FreeSpace),
    /// The closed-form spectral density of a few-mode model.
    Fitted(FewModeModel),
    /// `left − right`; the only variant allowed to go negative.
    Difference {
        left: Box<SpectralDensity>,
        right: Box<SpectralDensity>,
    },
    Sum { terms: Vec<SpectralDensity> },
}

impl SpectralDensity {
    pub fn lorentzians(modes: Vec<LorentzianMode>) -> Self {
        SpectralDensity::LorentzianSum { modes }
    }

    pub fn difference(left: SpectralDensity, right: SpectralDensity) -> Self {
        SpectralDensity::Difference {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn sum(terms: Vec<SpectralDensity>) -> Self {
        SpectralDensity::Sum { terms }
    }

    /// Re-checks type invariants, e.g. after deserialization of inline data.
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::LorentzianSum { modes } => modes.iter().try_for_each(LorentzianMode::validate),
            SpectralDensity::CoupledOhmic(c) => c.validate(),
            SpectralDensity::Tabulated(_) | SpectralDensity::Fitted(_) => Ok(()),
            SpectralDensity::FreeSpace(f) => {
                if f.dipole_e_nm.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("free-space dipole must be finite"))
                }
            }
            SpectralDensity::Difference { left, right } => {
                left.validate()?;
                right.validate()
            }
            SpectralDensity::Sum { terms } => terms.iter().try_for_each(SpectralDensity::validate),
        }
    }

    /// False if any `Difference` appears in the expression.
    pub fn is_physical(&self) -> bool {
        match self {
            SpectralDensity::Difference { .. } => false,
            SpectralDensity::Sum { terms } => terms.iter().all(SpectralDensity::is_physical),
            _ => true,
        }
    }

    /// True if some component grows without bound (free-space ω³).
    pub fn has_unbounded_tail(&self) -> bool {
        match self {
            SpectralDensity::FreeSpace(_) => true,
            SpectralDensity::Difference { left, right } => left.has_unbounded_tail() || right.has_unbounded_tail(),
            SpectralDensity::Sum { terms } => terms.iter().any(SpectralDensity::has_unbounded_tail),
            _ => false,
        }
    }

    /// The same expression with every free-space term removed. Its
    /// principal-value integrals converge, unlike those of the full J.
    pub fn scattered(&self) -> SpectralDensity {
        match self {
            SpectralDensity::FreeSpace(_) => SpectralDensity::Sum { terms: vec![] },
            SpectralDensity::Difference { left, right } => SpectralDensity::difference(left.scattered(), right.scattered()),
            SpectralDensity::Sum { terms } => SpectralDensity::Sum {
                terms: terms
                    .iter()
                    .filter(|t| !matches!(t, SpectralDensity::FreeSpace(_)))
                    .map(SpectralDensity::scattered)
                    .collect(),
            },
            other => other.clone(),
        }
    }

    /// Raw evaluation used inside quadrature loops. Returns NaN at a pole of
    /// a loss-free fitted model.
    pub fn value(&self, omega: f64) -> f64 {
        match self {
            SpectralDensity::LorentzianSum { modes } => modes.iter().map(|m| m.value(omega)).sum(),
            SpectralDensity::CoupledOhmic(c) => c.value(omega),
            SpectralDensity::Tabulated(t) => t.value(omega),
            SpectralDensity::FreeSpace(f) => f.value(omega),
            SpectralDensity::Fitted(m) => m.eval(omega).unwrap_or(f64::NAN),
            SpectralDensity::Difference { left, right } => left.value(omega) - right.value(omega),
            SpectralDensity::Sum { terms } => terms.iter().map(|t| t.value(omega)).sum(),
        }
    }

    pub fn evaluate(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::invalid(format!("cannot evaluate J at omega = {omega}")));
        }
        let v = self.value(omega);
        if v.is_nan() {
            return Err(Error::Pole(omega));
        }
        Ok(v)
    }

    /// Frequencies where the density has peaks or kinks, used as quadrature
    /// breakpoints.
    pub fn feature_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        self.collect_features(&mut pts);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn collect_features(&self, pts: &mut Vec<f64>) {
        match self {
            SpectralDensity::LorentzianSum { modes } => {
                for m in modes {
                    pts.extend([m.omega0 - m.kappa, m.omega0, m.omega0 + m.kappa]);
                }
            }
            SpectralDensity::CoupledOhmic(c) => {
                pts.extend([0.0, c.omega_c - c.kappa, c.omega_c, c.omega_c + c.kappa]);
            }
            SpectralDensity::Tabulated(t) => {
                let g = t.grid();
                if g.len() <= 64 {
                    pts.extend_from_slice(g);
                } else {
                    pts.extend([g[0], g[g.len() - 1]]);
                }
            }
            SpectralDensity::FreeSpace(_) => pts.push(0.0),
            SpectralDensity::Fitted(m) => pts.extend(m.feature_points()),
            SpectralDensity::Difference { left, right } => {
                left.collect_features(pts);
                right.collect_features(pts);
            }
            SpectralDensity::Sum { terms } => terms.iter().for_each(|t| t.collect_features(pts)),
        }
    }

    /// A characteristic energy scale (largest feature position or width).
    pub fn scale(&self) -> f64 {
        let mut s = self.feature_points().iter().map(|x| x.abs()).fold(0.0, f64::max);
        if let SpectralDensity::Tabulated(t) = self {
            s = s.max(t.grid()[t.grid().len() - 1].abs());
        }
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// `∫ₐᵇ J dω` to the default relative tolerance of 1e-9.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        self.integrate_with(a, b, &QuadOptions::default())
    }

    pub fn integrate_with(&self, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::invalid(format!("integration needs finite a < b, got ({a}, {b})")));
        }
        let pts = self.feature_points();
        Ok(quad::integrate_with_points(|w| self.value(w), a, b, &pts, opts)?.value)
    }
}

/// Reads a two-column `omega,J` CSV (comment lines start with `#`).
pub fn load_tabulated<R: BufRead>(reader: R) -> Result<SpectralDensity> {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if grid.is_empty() && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("omega")) {
            continue;
        }
        let row = grid.len();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row {row}: expected 2 columns, found {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("row {row}: {what} `{s}` is not a finite number"),
                })
        };
        let w = parse(fields[0], "omega")?;
        let j = parse(fields[1], "J")?;
        if j < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row {row}: negative J = {j}"),
            });
        }
        if let Some(&prev) = grid.last() {
            if w <= prev {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("row {row}: omega = {w} is not above the previous value {prev}"),
                });
            }
        }
        grid.push(w);
        values.push(j);
    }
    if grid.len() < 2 {
        return Err(Error::Parse {
            line: last_line,
            message: format!("need at least 2 data rows for interpolation, found {}", grid.len()),
        });
    }
    Ok(SpectralDensity::Tabulated(Tabulated::new(grid, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn usc() -> CoupledOhmic {
        CoupledOhmic::new(0.25, 0.58, 0.1).unwrap()
    }

    #[test]
    fn coupled_ohmic_vanishes_at_negative_frequency() {
        let j = SpectralDensity::CoupledOhmic(usc());
        assert_eq!(j.evaluate(-0.1).unwrap(), 0.0);
        assert_eq!(j.evaluate(0.0).unwrap(), 0.0);
    }

    #[test]
    fn coupled_ohmic_peak_at_omega_c() {
        // at ω = ω_c: (2g²/π)·κω_c²/(κ²ω_c²) = 2g²/(πκ)
        let j = SpectralDensity::CoupledOhmic(usc());
        let expected = 2.0 * 0.0625 / (PI * 0.1);
        assert_relative_eq!(j.evaluate(0.58).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn lorentzian_peak() {
        let m = LorentzianMode::new(0.1, 1.4, 0.05).unwrap();
        let j = SpectralDensity::lorentzians(vec![m]);
        assert_relative_eq!(j.evaluate(1.4).unwrap(), 2.0 * 0.01 / (PI * 0.05), max_relative = 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(LorentzianMode::new(-0.1, 1.0, 0.1).is_err());
        assert!(LorentzianMode::new(0.1, 1.0, 0.0).is_err());
        assert!(CoupledOhmic::new(0.1, -1.0, 0.1).is_err());
    }

    #[test]
    fn non_finite_omega_is_invalid() {
        let j = SpectralDensity::CoupledOhmic(usc());
        assert!(matches!(j.evaluate(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(matches!(j.evaluate(f64::INFINITY), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn scattered_part_drops_free_space() {
        let l = SpectralDensity::lorentzians(vec![LorentzianMode::new(0.1, 1.0, 0.2).unwrap()]);
        let fs = SpectralDensity::FreeSpace(FreeSpace {
            dipole_e_nm: 0.5,
            unit: EnergyUnit::Ev,
        });
        let j = SpectralDensity::sum(vec![l.clone(), fs.clone()]);
        let s = j.scattered();
        assert!(!s.has_unbounded_tail());
        assert_eq!(s.value(1.3), l.value(1.3));
        assert_eq!(fs.scattered().value(2.0), 0.0);
    }

    #[test]
    fn free_space_scaling() {
        assert_eq!(free_space_j(0.55, 0.0, EnergyUnit::Ev).unwrap(), 0.0);
        let a = free_space_j(0.3, 1.2, EnergyUnit::Ev).unwrap();
        let b = free_space_j(0.6, 1.2, EnergyUnit::Ev).unwrap();
        assert_relative_eq!(b, 4.0 * a, max_relative = 1e-14);
        assert!(free_space_j(0.3, -1.0, EnergyUnit::Ev).is_err());
    }

    #[test]
    fn free_space_quantum_dot_value() {
        // Independent route via the fine-structure constant:
        // J = α·(2/3π)·(d/e)²·E³/(ħc)², with ħc = 197.3269804 eV·nm.
        let alpha = 7.297_352_569_3e-3;
        let hbar_c = 197.326_980_4;
        let (d, e) = (0.55f64, 1.1445f64);
        let oracle = alpha * 2.0 / (3.0 * PI) * d * d * e.powi(3) / (hbar_c * hbar_c);
        let j = free_space_j(d, e, EnergyUnit::Ev).unwrap();
        assert_relative_eq!(j, oracle, max_relative = 1e-8);
        assert_relative_eq!(j, 1.8035e-8, max_relative = 1e-3);
        // meV: J scales like energy, E³ like energy³.
        let jm = free_space_j(d, e * 1e3, EnergyUnit::Mev).unwrap();
        assert_relative_eq!(jm, j * 1e3, max_relative = 1e-12);
    }

    #[test]
    fn tabulated_midpoint_and_outside() {
        let csv = "# test\n1.0,0.5\n2.0,0.7\n";
        let j = load_tabulated(csv.as_bytes()).unwrap();
        assert_relative_eq!(j.evaluate(1.5).unwrap(), 0.6, max_relative = 1e-15);
        assert_eq!(j.evaluate(0.5).unwrap(), 0.0);
        assert_eq!(j.evaluate(2.5).unwrap(), 0.0);
        assert_eq!(j.evaluate(2.0).unwrap(), 0.7);
    }

    #[test]
    fn tabulated_errors_name_the_line() {
        let err = load_tabulated("1.0,0.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));

        let err = load_tabulated("omega,J\n1.0,0.5\n3.0,0.1\n2.0,0.2\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("row 2"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }

        let err = load_tabulated("1.0,0.5\n2.0,-0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let err = load_tabulated("1.0,0.5\n2.0;0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let err = load_tabulated("1.0,0.5\n2.0,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn zero_density_integrates_to_zero() {
        let j = SpectralDensity::lorentzians(vec![]);
        assert_eq!(j.integrate(0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn lorentzian_weight_over_fifty_widths() {
        // ∫ over ±50κ of the unit-normalized line: (2/π)·atan(100) of g²
        let m = LorentzianMode::new(0.1, 2.0, 0.05).unwrap();
        let j = SpectralDensity::lorentzians(vec![m]);
        let v = j.integrate(2.0 - 50.0 * 0.05, 2.0 + 50.0 * 0.05).unwrap();
        let oracle = 0.01 * 2.0 / PI * (100.0f64).atan();
        assert_relative_eq!(v, oracle, max_relative = 1e-9);
        assert_relative_eq!(v, 0.01, max_relative = 0.01);
    }

    #[test]
    fn coupled_ohmic_weight_matches_riemann_sum_and_closed_form() {
        let c = usc();
        let j = SpectralDensity::CoupledOhmic(c);
        let b = 20.0 * c.omega_c;
        let v = j.integrate(0.0, b).unwrap();
        let n = 2_000_000;
        let h = b / n as f64;
        let riemann: f64 = (0..n).map(|i| c.value((i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert_relative_eq!(v, riemann, max_relative = 1e-6);
        let full = j.integrate(0.0, 1e4).unwrap();
        assert_relative_eq!(full, c.total_weight(), max_relative = 1e-6);
        // The Ohmic tail keeps about 5% of g² away from the peak region.
        assert_relative_eq!(c.total_weight() / (c.g * c.g), 0.9486, max_relative = 1e-3);
    }

    #[test]
    fn serde_uses_variant_names() {
        let j = SpectralDensity::CoupledOhmic(usc());
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"type\":\"CoupledOhmic\""), "{s}");
        let back: SpectralDensity = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
        let bad = r#"{"type":"Tabulated","grid":[2.0,1.0],"values":[0.1,0.2]}"#;
        assert!(serde_json::from_str::<SpectralDensity>(bad).is_err());
    }
}
