use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pseudomode::Exec;
use pseudomode_cli::pipeline::{self, Summary};
use pseudomode_cli::{load, CliError, Run};

#[derive(Parser)]
#[command(name = "pseudomode", version, about = "Few-mode fitting, Markov corrections and exact references for emitter dynamics")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; defaults to the scenario's `outputs`, resolved
    /// against the scenario file's directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the fit seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
    /// Run every data-parallel kernel on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the few-mode model and write the fit report.
    Fit,
    /// Fit, then derive the Markov parameters and β± of the residual.
    Correct,
    /// Fit, correct and propagate the master equation.
    Simulate,
    /// Propagate the discretized-bath reference.
    Oracle,
    /// ε_r of one trajectory file against a reference trajectory file.
    Compare { test: PathBuf, reference: PathBuf },
    /// All stages, with the oracle run alongside the model.
    Pipeline {
        /// Also write a gnuplot script for the trajectories.
        #[arg(long)]
        gnuplot: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    if let Command::Compare { test, reference } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let s = pipeline::compare_files(test, reference, &out)?;
        if !cli.quiet {
            println!(
                "max eps_r {:.4e} at t = {}, mean {:.4e}, flagged {:.1}%",
                s.max,
                s.t_at_max,
                s.mean,
                100.0 * s.flagged_fraction
            );
        }
        return Ok(());
    }

    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::config("--scenario <path> is required"))?;
    let loaded = load(path)?;
    let out = cli.out.clone().unwrap_or_else(|| {
        let base = path.parent().unwrap_or(std::path::Path::new("."));
        base.join(&loaded.scenario.outputs)
    });
    let run = Run {
        loaded: &loaded,
        out,
        seed: cli.seed,
        exec,
    };
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };

    match &cli.command {
        Command::Fit => {
            if let Some(r) = pipeline::run_fit(&run)? {
                say(format!("fit: {} modes, residual {:.3e}, converged", r.model.n_modes(), r.residual_norm));
            }
        }
        Command::Correct => {
            let c = pipeline::run_correct(&run)?;
            if let Some(m) = c.markov {
                say(markov_line(&m));
            }
            say(beta_line(&c.validity));
        }
        Command::Simulate => {
            let t = pipeline::run_simulate(&run)?;
            say(format!(
                "simulate: final population {:.6}, max trace drift {:.1e}",
                t.final_population().unwrap_or(f64::NAN),
                t.max_trace_drift()
            ));
        }
        Command::Oracle => {
            let t = pipeline::run_oracle(&run)?;
            say(format!("oracle: final population {:.6}", t.final_population().unwrap_or(f64::NAN)));
        }
        Command::Pipeline { gnuplot } => {
            let s = pipeline::pipeline(&run)?;
            if *gnuplot {
                pipeline::write_gnuplot(&run, &s)?;
            }
            if !cli.quiet {
                print_summary(&s);
            }
        }
        Command::Compare { .. } => unreachable!(),
    }
    Ok(())
}

fn markov_line(m: &pseudomode::MarkovParams) -> String {
    format!(
        "markov: delta_mod {:.6e}, gamma_mod {:.6e}, delta_mod_tilde {:.6e}, gamma_mod_tilde {:.6e}",
        m.delta_mod, m.gamma_mod, m.delta_mod_tilde, m.gamma_mod_tilde
    )
}

fn beta_line(v: &pseudomode::ValidityReport) -> String {
    let show = |r: &pseudomode::markov::Region| match (r.beta, r.flag) {
        (Some(b), _) => format!("{b:.4}"),
        (None, Some(f)) => format!("undefined ({f:?})"),
        (None, None) => "undefined".into(),
    };
    format!("beta: minus {}, plus {}", show(&v.minus), show(&v.plus))
}

fn print_summary(s: &Summary) {
    if let Some(r) = &s.fit {
        println!("fit: {} modes, residual {:.3e}", r.model.n_modes(), r.residual_norm);
    }
    if let Some(m) = &s.correction.markov {
        println!("{}", markov_line(m));
    }
    println!("{}", beta_line(&s.correction.validity));
    if s.correction.anti_lindblad_active {
        println!("anti-Lindblad term active (gamma_mod_tilde < 0)");
    }
    for (label, t) in &s.trajectories {
        println!(
            "{label}: final population {:.6}, max trace drift {:.1e}",
            t.final_population.unwrap_or(f64::NAN),
            t.max_trace_drift
        );
        for w in &t.warnings {
            println!("  warning: {w}");
        }
    }
    if let Some(e) = &s.error {
        println!("max eps_r (corrected) {:.4e} at t = {}", e.corrected.max, e.corrected.t_at_max);
        if let Some(f) = &e.fit_only {
            println!("max eps_r (fit only)  {:.4e} at t = {}", f.max, f.t_at_max);
        }
    }
}
