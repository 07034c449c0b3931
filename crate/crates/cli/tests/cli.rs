use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudomode"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Loads a shipped scenario, lets `edit` change it and writes it into `dir`.
fn scenario_with(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v = read_json(&scenarios().join(name));
    edit(&mut v);
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

/// Short, cheap version of the five-Lorentzian scenario.
fn short_lorentzian(v: &mut Value) {
    v["times"] = json!({"t_max": 60.0, "n_points": 61});
    v["oracle"]["m"] = json!(3000);
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_of_usc_scenario_converges() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = run(&["fit", "--quiet", "--scenario", s(&scenarios().join("usc_ohmic.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&out.join("fit_report.json"));
    assert_eq!(r["n_modes"], 1);
    assert_eq!(r["converged"], true);
    assert_eq!(r["scenario"], "usc_ohmic");
    assert_eq!(r["scenario_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_window_names_the_field() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "usc_ohmic.json", |v| {
        v["fit"].as_object_mut().unwrap().remove("window");
    });
    let o = run(&["fit", "--scenario", s(&p), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("fit.window"), "{}", stderr(&o));
}

#[test]
fn zero_modes_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "usc_ohmic.json", |v| v["fit"]["n_modes"] = json!(0));
    let o = run(&["fit", "--scenario", s(&p), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("fit.n_modes"), "{}", stderr(&o));
}

#[test]
fn malformed_json_reports_line() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"name\": \"x\",\n  \"emitter\": {\"omega_e\": }\n}\n").unwrap();
    let o = run(&["fit", "--scenario", s(&p)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn missing_scenario_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["fit"])), 1);
}

#[test]
fn non_converged_fit_exits_with_2_and_still_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "usc_ohmic.json", |v| {
        v["fit"]["options"] = json!({"max_restarts": 0, "max_iterations": 1});
    });
    let out = dir.path().join("o");
    let o = run(&["fit", "--scenario", s(&p), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(read_json(&out.join("fit_report.json"))["converged"], false);
}

fn write_traj(path: &Path, pops: &[(f64, f64)]) {
    let mut text = String::from("# made by hand\nt,pop_emitter,trace_drift\n");
    for (t, p) in pops {
        text += &format!("{t},{p},0\n");
    }
    fs::write(path, text).unwrap();
}

fn compare_max(dir: &Path) -> f64 {
    let text = fs::read_to_string(dir.join("compare.csv")).unwrap();
    let line = text.lines().find(|l| l.starts_with("# max_eps:")).unwrap();
    line["# max_eps:".len()..].trim().parse().unwrap()
}

#[test]
fn compare_with_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    write_traj(&a, &[(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]);
    let o = run(&["compare", s(&a), s(&a), "--out", s(dir.path()), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(compare_max(dir.path()), 0.0);
}

#[test]
fn compare_detects_five_percent_offset() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let pts: Vec<(f64, f64)> = (0..11).map(|k| (k as f64, (-0.1 * k as f64).exp())).collect();
    write_traj(&a, &pts.iter().map(|&(t, p)| (t, 1.05 * p)).collect::<Vec<_>>());
    write_traj(&b, &pts);
    let o = run(&["compare", s(&a), s(&b), "--out", s(dir.path()), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((compare_max(dir.path()) - 0.05).abs() < 1e-12);
}

#[test]
fn compare_rejects_reference_outside_test_grid() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_traj(&a, &[(0.0, 1.0), (1.0, 0.5)]);
    write_traj(&b, &[(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]);
    let o = run(&["compare", s(&a), s(&b), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid mismatch"), "{}", stderr(&o));
}

fn pipeline(scenario: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["pipeline", "--quiet", "--scenario", s(scenario), "--out", s(out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    read_json(&out.join("summary.json"))
}

#[test]
fn markov_disabled_run_is_the_fit_only_baseline() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "lorentzian5.json", short_lorentzian);
    let on = pipeline(&p, &dir.path().join("on"), &[]);
    let off_p = scenario_with(dir.path(), "lorentzian5.json", |v| {
        short_lorentzian(v);
        v["markov_enabled"] = json!(false);
    });
    let off = pipeline(&off_p, &dir.path().join("off"), &[]);
    assert!(off["markov"].is_null());
    assert!(off["error"].get("fit_only").is_none());
    assert!(!dir.path().join("off/trajectory_fit_only.csv").exists());
    assert_eq!(on["error"]["fit_only"], off["error"]["corrected"]);
}

#[test]
fn markov_correction_lowers_the_error_over_the_full_run() {
    let dir = TempDir::new().unwrap();
    let sum = pipeline(&scenarios().join("lorentzian5.json"), dir.path(), &[]);
    let e = &sum["error"];
    let (corr, fit_only) = (e["corrected"]["max"].as_f64().unwrap(), e["fit_only"]["max"].as_f64().unwrap());
    assert!(corr < fit_only, "{corr} vs {fit_only}");
}

#[test]
fn usc_summary_shows_anti_lindblad_term() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "usc_ohmic.json", |v| {
        v["times"] = json!({"t_max": 10.0, "n_points": 21});
        v.as_object_mut().unwrap().remove("oracle");
    });
    let sum = pipeline(&p, &dir.path().join("o"), &["--gnuplot"]);
    assert!(sum["markov"]["gamma_mod_tilde"].as_f64().unwrap() < 0.0);
    assert_eq!(sum["anti_lindblad_active"], true);
    assert!(sum.get("error").is_none(), "oracle disabled: no error section");
    assert!(dir.path().join("o/plot.gp").exists());
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[test]
fn outputs_are_reproducible_and_stamped() {
    let dir = TempDir::new().unwrap();
    let p = scenario_with(dir.path(), "lorentzian5.json", short_lorentzian);
    let hash = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(fs::read(&p).unwrap()))
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&p, &a, &["--seed", "3"]);
    pipeline(&p, &b, &["--seed", "3", "--sequential"]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for n in names {
        let (fa, fb) = (a.join(&n), b.join(&n));
        assert_eq!(data_lines(&fa), data_lines(&fb), "{n:?}");
        assert!(fs::read_to_string(&fa).unwrap().contains(&hash), "{n:?} lacks the scenario hash");
    }
}
