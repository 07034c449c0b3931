//! The stages behind each subcommand: fit → correct → simulate → oracle →
//! compare. Every stage writes its own files into the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pseudomode::io::{read_trajectory_csv, write_bath_csv, write_error_csv, write_trajectory_csv};
use pseudomode::lindblad::{build_hs, Equation, MasterEquation, PropagateOptions, Trajectory};
use pseudomode::markov::{self, default_beta_bounds, residual, validity_beta};
use pseudomode::oracle::{self, DiscretizedBath, ErrorSeries, ErrorSummary, TruncatedOptions};
use pseudomode::{fitmodel, Exec, FewModeModel, FitReport, MarkovParams, Units, ValidityReport};

use crate::error::{CliError, Stage};
use crate::scenario::{Loaded, OracleKind};

pub const FIT_REPORT: &str = "fit_report.json";
pub const CORRECTION: &str = "correction.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const TRAJECTORY_FIT_ONLY: &str = "trajectory_fit_only.csv";
pub const TRAJECTORY_ORACLE: &str = "trajectory_oracle.csv";
pub const ORACLE_BATH: &str = "oracle_bath.csv";
pub const ERROR: &str = "error.csv";
pub const ERROR_FIT_ONLY: &str = "error_fit_only.csv";
pub const COMPARE: &str = "compare.csv";
pub const SUMMARY: &str = "summary.json";
pub const GNUPLOT: &str = "plot.gp";

/// One invocation: a loaded scenario plus command-line overrides.
pub struct Run<'a> {
    pub loaded: &'a Loaded,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub exec: Exec,
}

#[derive(Debug, Clone, Serialize)]
struct Stamped<'a, T: Serialize> {
    scenario: &'a str,
    scenario_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

impl Run<'_> {
    pub fn seed(&self) -> u64 {
        self.loaded.seed(self.seed)
    }

    fn meta(&self, stage: &str) -> Vec<(String, String)> {
        let u = self.loaded.scenario.units;
        vec![
            ("scenario".into(), self.loaded.scenario.name.clone()),
            ("scenario_sha256".into(), self.loaded.hash.clone()),
            ("seed".into(), self.seed().to_string()),
            ("stage".into(), stage.into()),
            ("units".into(), units_label(u)),
        ]
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, e))?;
        let path = self.out.join(name);
        Ok(BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<(), CliError> {
        let stamped = Stamped {
            scenario: &self.loaded.scenario.name,
            scenario_sha256: &self.loaded.hash,
            seed: self.seed(),
            body,
        };
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &stamped).map_err(|e| CliError::at(Stage::Write)(e.into()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| io_error(&self.out.join(name), e))
    }

    fn write_trajectory(
        &self,
        name: &str,
        stage: &str,
        traj: &Trajectory,
        markov: Option<&MarkovParams>,
    ) -> Result<(), CliError> {
        let mut meta = self.meta(stage);
        if let Some(m) = markov {
            for (k, v) in [
                ("delta_mod", m.delta_mod),
                ("gamma_mod", m.gamma_mod),
                ("delta_mod_tilde", m.delta_mod_tilde),
                ("gamma_mod_tilde", m.gamma_mod_tilde),
            ] {
                meta.push((k.into(), format!("{v:e}")));
            }
        }
        let mut w = self.create(name)?;
        write_trajectory_csv(&mut w, traj, &meta).map_err(CliError::at(Stage::Write))?;
        w.flush().map_err(|e| io_error(&self.out.join(name), e))
    }

    fn write_error(&self, name: &str, stage: &str, series: &ErrorSeries) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        write_error_csv(&mut w, series, &self.meta(stage)).map_err(CliError::at(Stage::Write))?;
        w.flush().map_err(|e| io_error(&self.out.join(name), e))
    }
}

fn units_label(u: Units) -> String {
    let e = serde_json::to_value(u.energy).ok().and_then(|v| v.as_str().map(String::from));
    let t = serde_json::to_value(u.time).ok().and_then(|v| v.as_str().map(String::from));
    format!("{}/{}", e.unwrap_or_default(), t.unwrap_or_default())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}

/// Fits the scenario's model; `None` when the scenario has no `fit` section,
/// in which case the whole spectral density is treated perturbatively.
pub fn fit(run: &Run) -> Result<Option<FitReport>, CliError> {
    let l = run.loaded;
    let Some(spec) = &l.scenario.fit else {
        return Ok(None);
    };
    let mut opts = l.fit_options(run.seed).expect("fit section present");
    opts.exec = run.exec;
    let report = fitmodel::fit(&l.j, &spec.window, spec.n_modes, &opts).map_err(CliError::at(Stage::Fit))?;
    Ok(Some(report))
}

pub fn write_fit(run: &Run, report: &FitReport) -> Result<(), CliError> {
    run.write_json(FIT_REPORT, report)
}

fn model_of(report: Option<&FitReport>) -> FewModeModel {
    report.map_or_else(FewModeModel::empty, |r| r.model.clone())
}

fn require_converged(report: Option<&FitReport>) -> Result<(), CliError> {
    match report {
        Some(r) if !r.converged => Err(CliError::NotConverged(format!(
            "residual norm {:e} after {} restarts",
            r.residual_norm, r.n_restarts_used
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Correction {
    /// `None` when `markov_enabled` is false.
    pub markov: Option<MarkovParams>,
    pub validity: ValidityReport,
    /// The signed `γ̃_mod D[σ⁺]` term is part of the propagated equation.
    pub anti_lindblad_active: bool,
}

impl Correction {
    /// Parameters actually propagated.
    pub fn applied(&self) -> MarkovParams {
        self.markov.unwrap_or_default()
    }
}

pub fn correct(run: &Run, model: &FewModeModel) -> Result<Correction, CliError> {
    let s = &run.loaded.scenario;
    let we = s.emitter.omega_e;
    let delta_j = residual(&run.loaded.j, model);
    let bounds = s.beta_bounds.unwrap_or_else(|| default_beta_bounds(we));
    let validity = validity_beta(&delta_j, we, bounds).map_err(CliError::at(Stage::Correct))?;
    let markov = if s.markov_enabled {
        Some(markov::correct(&run.loaded.j, model, we).map_err(CliError::at(Stage::Correct))?)
    } else {
        None
    };
    let anti_lindblad_active =
        s.equation == Equation::UscEq && markov.is_some_and(|m| m.gamma_mod_tilde < 0.0);
    Ok(Correction {
        markov,
        validity,
        anti_lindblad_active,
    })
}

pub fn simulate(run: &Run, model: &FewModeModel, markov: &MarkovParams) -> Result<Trajectory, CliError> {
    let l = run.loaded;
    let s = &l.scenario;
    let me = if model.n_modes() == 0 {
        MasterEquation::emitter_only(&s.emitter, markov, s.equation, l.hbar())
    } else {
        build_hs(&s.emitter, model, s.rwa, s.truncation.n_max)
            .and_then(|h| MasterEquation::new(&h, model, markov, s.equation, l.hbar()))
    }
    .map_err(CliError::at(Stage::Simulate))?;
    me.propagate(&s.emitter, &l.times(), &PropagateOptions::default())
        .map_err(CliError::at(Stage::Simulate))
}

/// Runs the reference solver, if the scenario requests one.
pub fn oracle(run: &Run) -> Result<Option<(DiscretizedBath, Trajectory)>, CliError> {
    let l = run.loaded;
    let Some(spec) = l.scenario.oracle else {
        return Ok(None);
    };
    let err = CliError::at(Stage::Oracle);
    let bath = oracle::discretize_with(&l.j, spec.range, spec.m, run.exec).map_err(err)?;
    let times = l.oracle_times();
    let emitter = &l.scenario.emitter;
    let traj = match spec.kind {
        OracleKind::Rwa => oracle::exact_rwa(emitter, &bath, &times, l.hbar()),
        OracleKind::Truncated => {
            let opts = TruncatedOptions {
                exec: run.exec,
                ..TruncatedOptions::default()
            };
            oracle::exact_truncated(emitter, &bath, spec.max_excitations, &times, l.hbar(), &opts)
        }
    }
    .map_err(CliError::at(Stage::Oracle))?;
    Ok(Some((bath, traj)))
}

pub fn write_oracle(run: &Run, bath: &DiscretizedBath, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = run.create(ORACLE_BATH)?;
    write_bath_csv(&mut w, bath, &run.meta("oracle")).map_err(CliError::at(Stage::Write))?;
    w.flush().map_err(|e| io_error(&run.out.join(ORACLE_BATH), e))?;
    run.write_trajectory(TRAJECTORY_ORACLE, "oracle", traj, None)
}

/// ε_r of `test` against `reference`. Fails when the reference extends
/// beyond the test grid, where no interpolation is possible.
pub fn compare(test: &Trajectory, reference: &Trajectory) -> Result<ErrorSeries, CliError> {
    let err = CliError::at(Stage::Compare);
    if test.is_empty() || reference.is_empty() {
        return Err(err(pseudomode::Error::InvalidInput("cannot compare empty trajectories".into())));
    }
    let (lo, hi) = (test.times[0], test.times[test.len() - 1]);
    let (rlo, rhi) = (reference.times[0], reference.times[reference.len() - 1]);
    let tol = 1e-9 * (hi - lo).abs().max(1.0);
    if rlo < lo - tol || rhi > hi + tol {
        return Err(err(pseudomode::Error::InvalidInput(format!(
            "grid mismatch: reference covers [{rlo}, {rhi}] but the test series only [{lo}, {hi}]"
        ))));
    }
    oracle::relative_error(test, reference).map_err(err)
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    read_trajectory_csv(BufReader::new(f))
        .map(|(t, _)| t)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Standalone comparison of two trajectory files; writes [`COMPARE`] into
/// `out` and returns the statistics.
pub fn compare_files(test: &Path, reference: &Path, out: &Path) -> Result<ErrorSummary, CliError> {
    let series = compare(&read_trajectory(test)?, &read_trajectory(reference)?)?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let path = out.join(COMPARE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?);
    let meta = vec![
        ("test".to_string(), file_name(test)),
        ("reference".to_string(), file_name(reference)),
    ];
    write_error_csv(&mut w, &series, &meta).map_err(CliError::at(Stage::Write))?;
    w.flush().map_err(|e| io_error(&path, e))?;
    Ok(series.summary())
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryInfo {
    pub file: String,
    pub final_population: Option<f64>,
    pub max_trace_drift: f64,
    pub warnings: Vec<String>,
}

impl TrajectoryInfo {
    fn new(file: &str, t: &Trajectory) -> Self {
        TrajectoryInfo {
            file: file.into(),
            final_population: t.final_population(),
            max_trace_drift: t.max_trace_drift(),
            warnings: t.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub corrected: ErrorSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_only: Option<ErrorSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub units: Units,
    pub hbar: f64,
    pub equation: Equation,
    pub rwa: bool,
    pub markov_enabled: bool,
    pub fit: Option<FitReport>,
    #[serde(flatten)]
    pub correction: Correction,
    pub trajectories: BTreeMap<String, TrajectoryInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
}

/// Everything the model side produces.
struct ModelRun {
    report: Option<FitReport>,
    correction: Correction,
    corrected: Trajectory,
    fit_only: Option<Trajectory>,
}

fn model_side(run: &Run) -> Result<ModelRun, CliError> {
    let report = fit(run)?;
    require_converged(report.as_ref())?;
    let model = model_of(report.as_ref());
    let correction = correct(run, &model)?;
    let corrected = simulate(run, &model, &correction.applied())?;
    let fit_only = match correction.markov {
        Some(_) => Some(simulate(run, &model, &MarkovParams::default())?),
        None => None,
    };
    Ok(ModelRun {
        report,
        correction,
        corrected,
        fit_only,
    })
}

/// Full pipeline. The oracle and the model side are independent and run on
/// separate threads when `run.exec` is parallel.
pub fn pipeline(run: &Run) -> Result<Summary, CliError> {
    let (model, reference) = if run.exec.is_parallel() {
        std::thread::scope(|s| {
            let handle = s.spawn(|| oracle(run));
            let model = model_side(run);
            let reference = handle.join().expect("oracle thread panicked");
            (model, reference)
        })
    } else {
        (model_side(run), oracle(run))
    };
    let model = model?;
    let reference = reference?;

    if let Some(r) = &model.report {
        write_fit(run, r)?;
    }
    run.write_json(CORRECTION, &model.correction)?;
    run.write_trajectory(TRAJECTORY, "simulate", &model.corrected, Some(&model.correction.applied()))?;
    let mut trajectories = BTreeMap::new();
    trajectories.insert("corrected".to_string(), TrajectoryInfo::new(TRAJECTORY, &model.corrected));
    if let Some(t) = &model.fit_only {
        run.write_trajectory(TRAJECTORY_FIT_ONLY, "simulate_fit_only", t, Some(&MarkovParams::default()))?;
        trajectories.insert("fit_only".to_string(), TrajectoryInfo::new(TRAJECTORY_FIT_ONLY, t));
    }

    let mut error = None;
    if let Some((bath, traj)) = &reference {
        write_oracle(run, bath, traj)?;
        trajectories.insert("oracle".to_string(), TrajectoryInfo::new(TRAJECTORY_ORACLE, traj));
        let series = compare(&model.corrected, traj)?;
        run.write_error(ERROR, "compare", &series)?;
        let fit_only = match &model.fit_only {
            Some(t) => {
                let s = compare(t, traj)?;
                run.write_error(ERROR_FIT_ONLY, "compare_fit_only", &s)?;
                Some(s.summary())
            }
            None => None,
        };
        error = Some(ErrorReport {
            corrected: series.summary(),
            fit_only,
        });
    }

    let s = &run.loaded.scenario;
    let summary = Summary {
        units: s.units,
        hbar: run.loaded.hbar(),
        equation: s.equation,
        rwa: s.rwa,
        markov_enabled: s.markov_enabled,
        fit: model.report,
        correction: model.correction,
        trajectories,
        error,
    };
    run.write_json(SUMMARY, &summary)?;
    Ok(summary)
}

/// gnuplot script plotting every trajectory written by the pipeline.
pub fn write_gnuplot(run: &Run, summary: &Summary) -> Result<(), CliError> {
    let mut w = run.create(GNUPLOT)?;
    let plots: Vec<String> = summary
        .trajectories
        .iter()
        .map(|(label, info)| format!("'{}' using 1:2 with lines title '{label}'", info.file))
        .collect();
    let t_unit = units_label(summary.units);
    let script = format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set xlabel 'time ({})'\nset ylabel 'emitter population'\nplot {}\n",
        t_unit.rsplit('/').next().unwrap_or(""),
        plots.join(", \\\n     ")
    );
    w.write_all(script.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&run.out.join(GNUPLOT), e))
}

/// `fit` subcommand body: writes the report, then fails with exit code 2 if
/// the fit did not converge.
pub fn run_fit(run: &Run) -> Result<Option<FitReport>, CliError> {
    let report = fit(run)?;
    match &report {
        Some(r) => write_fit(run, r)?,
        None => return Err(CliError::config("scenario has no `fit` section")),
    }
    require_converged(report.as_ref())?;
    Ok(report)
}

pub fn run_correct(run: &Run) -> Result<Correction, CliError> {
    let report = fit(run)?;
    if let Some(r) = &report {
        write_fit(run, r)?;
    }
    require_converged(report.as_ref())?;
    let c = correct(run, &model_of(report.as_ref()))?;
    run.write_json(CORRECTION, &c)?;
    Ok(c)
}

pub fn run_simulate(run: &Run) -> Result<Trajectory, CliError> {
    let m = model_side(run)?;
    if let Some(r) = &m.report {
        write_fit(run, r)?;
    }
    run.write_json(CORRECTION, &m.correction)?;
    run.write_trajectory(TRAJECTORY, "simulate", &m.corrected, Some(&m.correction.applied()))?;
    if let Some(t) = &m.fit_only {
        run.write_trajectory(TRAJECTORY_FIT_ONLY, "simulate_fit_only", t, Some(&MarkovParams::default()))?;
    }
    Ok(m.corrected)
}

pub fn run_oracle(run: &Run) -> Result<Trajectory, CliError> {
    let Some((bath, traj)) = oracle(run)? else {
        return Err(CliError::config("scenario has no `oracle` section"));
    };
    write_oracle(run, &bath, &traj)?;
    Ok(traj)
}
