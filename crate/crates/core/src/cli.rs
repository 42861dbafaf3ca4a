//! Command-line front end.
//!
//! ```text
//! clms theory   --config net.cfg [--out DIR]
//! clms simulate --config net.cfg [--out DIR] [--seed N] [--trials N] [--iters N]
//! clms compare  --config net.cfg ...
//! clms sweep    --config net.cfg ...
//! ```
//!
//! Exit codes: 0 success, 1 tolerance failure, 2 invalid input or I/O
//! failure, 3 numerical failure (unstable step, divergence, singular system).
//! The config grammar is documented in [`crate::config`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, Config};
use crate::experiments::{compare_with_theory, run_ensemble, run_sweep, to_db, ExperimentResult};
use crate::report::{self, Provenance};
use crate::theory::TheoryReport;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Theory,
    Simulate,
    Compare,
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub iters: Option<usize>,
    /// Suppress the stdout summary.
    pub quiet: bool,
}

#[derive(Parser, Debug)]
#[command(name = "clms", version, about = "Centralized LMS over fading wireless links")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Evaluate the closed-form predictions, write theory_report.csv.
    Theory(Common),
    /// Run the Monte Carlo ensemble, write msd_trajectory.csv and mean_error.csv.
    Simulate(Common),
    /// Ensemble vs theory, write comparison.csv, fail on tolerance misses.
    Compare(Common),
    /// Grid over step size, estimation-error variance and fading correlation.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, short)]
    quiet: bool,
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        let (command, c) = match cli.command {
            Sub::Theory(c) => (Command::Theory, c),
            Sub::Simulate(c) => (Command::Simulate, c),
            Sub::Compare(c) => (Command::Compare, c),
            Sub::Sweep(c) => (Command::Sweep, c),
        };
        RunConfig {
            command,
            config_path: c.config,
            out_dir: c.out,
            seed: c.seed,
            trials: c.trials,
            iters: c.iters,
            quiet: c.quiet,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_TOLERANCE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NotPositiveDefinite
        | Error::Singular(_)
        | Error::Unstable { .. }
        | Error::AllDiverged { .. }
        | Error::FailedFrame => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { EXIT_OK });
        }
    };
    match run(&cli.into()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load(rc: &RunConfig) -> Result<(Config, String)> {
    let text = fs::read_to_string(&rc.config_path)?;
    let mut config = parse_config(&text)?;
    let ex = &mut config.experiment;
    if let Some(s) = rc.seed {
        ex.seed = s;
    }
    if let Some(t) = rc.trials {
        ex.trials = t;
    }
    if let Some(i) = rc.iters {
        ex.iterations = i;
        ex.window = ex.window.min(i);
    }
    ex.validate()?;
    Ok((config, text))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs one subcommand and returns the process exit code. Errors map to
/// codes through [`exit_code_for`].
pub fn run(rc: &RunConfig) -> Result<u8> {
    let (config, text) = load(rc)?;
    fs::create_dir_all(&rc.out_dir)?;
    let prov = Provenance::new(config.experiment.seed, &text);
    let sc = &config.scenario;
    let ex = &config.experiment;
    let say = |s: String| {
        if !rc.quiet {
            println!("{s}");
        }
    };

    match rc.command {
        Command::Theory => {
            let t = TheoryReport::compute(sc, ex.bc_step_size, config.beta)?;
            report::write_theory_report(create(&rc.out_dir, "theory_report.csv")?, &prov, &t)?;
            say(format!("success probabilities: {:?}", t.success_probs));
            say(format!("clms bias: {:?}", t.bias));
            say(format!("mu_max: clms {:.6}, bc_clms {:.6}", t.clms_mu_max, t.bc_mu_max));
            say(format!("bc_clms steady-state msd: {:.3} dB", t.steady_msd_db()));
            Ok(EXIT_OK)
        }
        Command::Simulate => {
            let r = run_ensemble(sc, ex)?;
            report::write_msd_trajectory(create(&rc.out_dir, "msd_trajectory.csv")?, &prov, &r)?;
            report::write_mean_error(create(&rc.out_dir, "mean_error.csv")?, &prov, &r)?;
            summarize(&r, &say);
            Ok(if r.any_diverged() { EXIT_NUMERICAL } else { EXIT_OK })
        }
        Command::Compare => {
            let t = TheoryReport::compute(sc, ex.bc_step_size, config.beta)?;
            let r = run_ensemble(sc, ex)?;
            let c = compare_with_theory(&r, &t, &config.tolerances);
            report::write_comparison(create(&rc.out_dir, "comparison.csv")?, &prov, &c)?;
            summarize(&r, &say);
            for row in &c.rows {
                say(format!(
                    "{} {}: simulated {:.6e}, predicted {:.6e}, |delta| {:.3e}",
                    if row.pass { "PASS" } else { "FAIL" },
                    row.quantity,
                    row.simulated,
                    row.predicted,
                    row.abs_delta
                ));
            }
            Ok(if c.all_pass() { EXIT_OK } else { EXIT_TOLERANCE })
        }
        Command::Sweep => {
            let rows = run_sweep(sc, ex, config.beta)?;
            report::write_sweep(create(&rc.out_dir, "sweep.csv")?, &prov, &rows)?;
            for row in &rows {
                let parts: Vec<String> =
                    row.outcomes.iter().map(|(a, db, d)| format!("{a} {db:.2} dB ({d} diverged)")).collect();
                say(format!(
                    "mu={} est_var={} corr={}: {}",
                    row.step_size,
                    row.est_error_var,
                    row.fading_corr,
                    parts.join(", ")
                ));
            }
            Ok(EXIT_OK)
        }
    }
}

fn summarize(r: &ExperimentResult, say: &impl Fn(String)) {
    for a in &r.algorithms {
        say(format!(
            "{}: steady-state msd {:.3} dB over {} trials ({} diverged), bias norm {:.4e}",
            a.algorithm,
            to_db(a.steady_msd),
            a.completed_trials,
            a.diverged_trials,
            crate::linalg::norm(&a.empirical_bias)
        ));
    }
}
