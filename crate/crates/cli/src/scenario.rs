//! Scenario files: one JSON document per run.
//!
//! All energies are in `units.energy` and all times in `units.time`; the only
//! conversion applied is ħ.

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use pseudomode::lindblad::{time_grid, EmitterParams, Equation};
use pseudomode::specdens::load_tabulated;
use pseudomode::{FitOptions, FitWindow, SpectralDensity, Units};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub units: Units,
    pub emitter: EmitterParams,
    pub spectral_density: SpectralSource,
    #[serde(default)]
    pub fit: Option<FitSpec>,
    #[serde(default = "yes")]
    pub markov_enabled: bool,
    #[serde(default)]
    pub equation: Equation,
    /// Drop the counter-rotating terms of the emitter–mode coupling.
    #[serde(default = "yes")]
    pub rwa: bool,
    pub truncation: Truncation,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    pub times: Times,
    /// Integration limits `(a, b)` for the β± reaction-mode estimate.
    #[serde(default)]
    pub beta_bounds: Option<(f64, f64)>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

/// Either an inline spectral density (`{"type": "LorentzianSum", ...}`) or
/// `{"file": "path.csv"}` holding a two-column `omega,J` table.
#[derive(Debug, Clone)]
pub enum SpectralSource {
    Inline(SpectralDensity),
    File(PathBuf),
}

impl<'de> Deserialize<'de> for SpectralSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = serde_json::Value::deserialize(d)?;
        if let Some(file) = value.get("file") {
            let path = file
                .as_str()
                .ok_or_else(|| D::Error::custom("`file` must be a string path"))?;
            if value.as_object().is_some_and(|o| o.len() > 1) {
                return Err(D::Error::custom("a file source takes no other fields"));
            }
            return Ok(SpectralSource::File(PathBuf::from(path)));
        }
        serde_path_to_error::deserialize(value)
            .map(SpectralSource::Inline)
            .map_err(|e| {
                let path = e.path().to_string();
                if path == "." {
                    D::Error::custom(e.inner())
                } else {
                    D::Error::custom(format!("{path}: {}", e.inner()))
                }
            })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub window: FitWindow,
    pub n_modes: usize,
    #[serde(default)]
    pub options: FitSettings,
}

/// The serializable part of [`FitOptions`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub max_restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = FitOptions::default();
        FitSettings {
            max_restarts: d.max_restarts,
            seed: d.seed,
            tol: d.tol,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Single-excitation amplitude equations.
    Rwa,
    /// Full Hamiltonian on at most `max_excitations` quanta.
    Truncated,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    pub range: (f64, f64),
    pub m: usize,
    #[serde(default = "two")]
    pub max_excitations: usize,
    /// Run the oracle only up to this time (default: `times.t_max`).
    #[serde(default)]
    pub t_max: Option<f64>,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Times {
    pub t_max: f64,
    pub n_points: usize,
}

/// A parsed and checked scenario with its spectral density resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub j: SpectralDensity,
    /// Hex SHA-256 of the scenario file bytes.
    pub hash: String,
    pub path: PathBuf,
}

impl Loaded {
    pub fn hbar(&self) -> f64 {
        self.scenario.units.hbar()
    }

    pub fn times(&self) -> Vec<f64> {
        time_grid(self.scenario.times.t_max, self.scenario.times.n_points).expect("validated at load")
    }

    /// The model time grid cut at the oracle's `t_max`.
    pub fn oracle_times(&self) -> Vec<f64> {
        let cut = self.scenario.oracle.and_then(|o| o.t_max).unwrap_or(f64::INFINITY);
        self.times().into_iter().filter(|&t| t <= cut * (1.0 + 1e-12)).collect()
    }

    pub fn fit_options(&self, seed: Option<u64>) -> Option<FitOptions> {
        let spec = self.scenario.fit.as_ref()?;
        let s = &spec.options;
        Some(FitOptions {
            max_restarts: s.max_restarts,
            seed: seed.unwrap_or(s.seed),
            tol: s.tol,
            max_iterations: s.max_iterations,
            ..FitOptions::default()
        })
    }

    /// Seed actually used: the override if given, else the scenario's.
    pub fn seed(&self, over: Option<u64>) -> u64 {
        over.or(self.scenario.fit.as_ref().map(|f| f.options.seed)).unwrap_or(0)
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let scenario = parse(&bytes).map_err(|e| CliError::config(format!("{}:{e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let j = match &scenario.spectral_density {
        SpectralSource::Inline(j) => j.clone(),
        SpectralSource::File(f) => {
            let full = if f.is_absolute() { f.clone() } else { base.join(f) };
            let file = fs::File::open(&full).map_err(|e| {
                CliError::config(format!("spectral_density.file: cannot open {}: {e}", full.display()))
            })?;
            load_tabulated(BufReader::new(file))
                .map_err(|e| CliError::config(format!("spectral_density.file {}: {e}", full.display())))?
        }
    };
    let loaded = Loaded {
        scenario,
        j,
        hash,
        path: path.to_path_buf(),
    };
    validate(&loaded)?;
    Ok(loaded)
}

/// Position and field of a parse error.
#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        if !self.field.is_empty() {
            write!(f, "field `{}`: ", self.field)?;
        }
        f.write_str(&self.message)
    }
}

pub fn parse(bytes: &[u8]) -> Result<Scenario, ParseError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        if field == "." {
            field.clear();
        }
        let inner = e.into_inner();
        let full = inner.to_string();
        // serde_json appends " at line L column C"
        let message = match full.rfind(" at line ") {
            Some(k) => full[..k].to_string(),
            None => full,
        };
        // A missing field is reported against its parent.
        if let Some(name) = message.strip_prefix("missing field `").and_then(|r| r.strip_suffix('`')) {
            field = if field.is_empty() { name.to_string() } else { format!("{field}.{name}") };
        }
        ParseError {
            line: inner.line(),
            column: inner.column(),
            field,
            message,
        }
    })
}

fn validate(l: &Loaded) -> Result<(), CliError> {
    let s = &l.scenario;
    let bad = |field: &str, msg: String| Err(CliError::config(format!("{}: field `{field}`: {msg}", l.path.display())));
    if s.name.trim().is_empty() {
        return bad("name", "must not be empty".into());
    }
    if let Err(e) = s.emitter.validate() {
        return bad("emitter", e.to_string());
    }
    if let Err(e) = l.j.validate() {
        return bad("spectral_density", e.to_string());
    }
    if !(s.times.t_max > 0.0 && s.times.t_max.is_finite()) {
        return bad("times.t_max", format!("must be positive, got {}", s.times.t_max));
    }
    if s.times.n_points < 2 {
        return bad("times.n_points", "needs at least 2 points".into());
    }
    if let Some(fit) = &s.fit {
        if fit.n_modes == 0 {
            return bad("fit.n_modes", "must be at least 1".into());
        }
        if let Err(e) = fit.window.validate(fit.n_modes) {
            return bad("fit.window", e.to_string());
        }
        if fit.options.tol.is_nan() || fit.options.tol <= 0.0 {
            return bad("fit.options.tol", "must be positive".into());
        }
    }
    if s.truncation.n_max == 0 && s.fit.is_some() {
        return bad("truncation.n_max", "must be at least 1".into());
    }
    if let Some(o) = &s.oracle {
        if !(o.range.0 < o.range.1 && o.range.0.is_finite() && o.range.1.is_finite()) {
            return bad("oracle.range", format!("needs finite lo < hi, got {:?}", o.range));
        }
        if o.m == 0 {
            return bad("oracle.m", "must be at least 1".into());
        }
        if o.kind == OracleKind::Truncated && !(1..=3).contains(&o.max_excitations) {
            return bad("oracle.max_excitations", format!("must be 1, 2 or 3, got {}", o.max_excitations));
        }
        if let Some(t) = o.t_max {
            if t.is_nan() || t <= 0.0 {
                return bad("oracle.t_max", format!("must be positive, got {t}"));
            }
        }
    }
    if let Some((a, b)) = s.beta_bounds {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return bad("beta_bounds", format!("needs finite lo < hi, got ({a}, {b})"));
        }
    }
    Ok(())
}
