//! `lmqn`: runs the random-data spectrum experiments and prints relative
//! errors against the dense reference.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use log::{error, info};

use lmqn::experiment::{
    self, ExperimentConfig, ExperimentReport, Session, DEFAULT_GAMMA, DEFAULT_PHI,
};
use lmqn::pair_store::{load_pairs, DEFAULT_MEMORY};
use lmqn::UpdateFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Bfgs,
    Dfp,
    Sr1,
    Broyden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

#[derive(Debug, Parser)]
#[command(
    name = "lmqn",
    version,
    about = "Spectra of limited-memory quasi-Newton matrices on random data"
)]
struct Args {
    /// Update family; repeat for several. Defaults to all four.
    #[arg(long, value_enum)]
    family: Vec<FamilyArg>,

    /// Broyden class parameter.
    #[arg(long, default_value_t = DEFAULT_PHI)]
    phi: f64,

    /// Problem dimension; repeat for several.
    #[arg(long = "n", default_values_t = [100usize, 500, 1000])]
    n: Vec<usize>,

    /// Number of stored pairs.
    #[arg(long, default_value_t = DEFAULT_MEMORY)]
    m: usize,

    /// Initial matrix scale.
    #[arg(long, default_value_t = DEFAULT_GAMMA, allow_negative_numbers = true)]
    gamma: f64,

    /// Seed for the random pairs.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Report on step 1, 2, 3 or all of them.
    #[arg(long, value_enum, default_value = "all")]
    experiment: ExperimentArg,

    /// Also write results as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Skip the dense reference.
    #[arg(long)]
    no_oracle: bool,

    /// Largest relative error that counts as a pass.
    #[arg(long, default_value_t = 1e-13)]
    re_gate: f64,

    /// Load S from a matrix file instead of generating the first pairs.
    #[arg(long, requires = "load_y")]
    load_s: Option<PathBuf>,

    /// Load Y from a matrix file; required with --load-s.
    #[arg(long, requires = "load_s")]
    load_y: Option<PathBuf>,
}

impl Args {
    fn families(&self) -> anyhow::Result<Vec<UpdateFamily>> {
        let chosen = if self.family.is_empty() {
            vec![
                FamilyArg::Sr1,
                FamilyArg::Bfgs,
                FamilyArg::Dfp,
                FamilyArg::Broyden,
            ]
        } else {
            self.family.clone()
        };
        chosen
            .into_iter()
            .map(|f| {
                Ok(match f {
                    FamilyArg::Bfgs => UpdateFamily::Bfgs,
                    FamilyArg::Dfp => UpdateFamily::Dfp,
                    FamilyArg::Sr1 => UpdateFamily::Sr1,
                    FamilyArg::Broyden => UpdateFamily::broyden(self.phi)?,
                })
            })
            .collect()
    }

    fn last_experiment(&self) -> u8 {
        match self.experiment {
            ExperimentArg::One => 1,
            ExperimentArg::Two => 2,
            ExperimentArg::Three | ExperimentArg::All => 3,
        }
    }

    fn keep(&self, experiment: u8) -> bool {
        self.experiment == ExperimentArg::All || experiment == self.last_experiment()
    }
}

fn run_generated(
    args: &Args,
    family: UpdateFamily,
    n: usize,
) -> lmqn::Result<Vec<ExperimentReport>> {
    let cfg = ExperimentConfig {
        n,
        m: args.m,
        gamma: args.gamma,
        family,
        seed: args.seed,
        experiment: args.last_experiment(),
        oracle: !args.no_oracle,
    };
    let mut session = Session::new(cfg)?;
    let mut out = Vec::new();
    for _ in 0..args.last_experiment() {
        out.push(session.advance()?);
    }
    Ok(out)
}

fn run_loaded(args: &Args, family: UpdateFamily) -> lmqn::Result<Vec<ExperimentReport>> {
    let (s_path, y_path) = (args.load_s.as_ref().unwrap(), args.load_y.as_ref().unwrap());
    let buf = load_pairs(s_path, y_path, args.m)?;
    let n = buf.dim();
    let cfg = ExperimentConfig {
        n,
        m: args.m,
        gamma: args.gamma,
        family,
        seed: args.seed,
        experiment: 1,
        oracle: !args.no_oracle,
    };
    let (mut session, first) = Session::from_buffer(cfg, buf)?;
    let mut out = vec![first];
    for _ in 1..args.last_experiment() {
        out.push(session.advance()?);
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> anyhow::Result<bool> {
    if args.re_gate.is_nan() || args.re_gate < 0.0 {
        bail!("--re-gate must be nonnegative");
    }
    let families = args.families()?;
    let mut reports = Vec::new();
    let mut ok = true;
    for &family in &families {
        let batches: Vec<(String, lmqn::Result<Vec<ExperimentReport>>)> = if args.load_s.is_some() {
            vec![("loaded pairs".to_string(), run_loaded(&args, family))]
        } else {
            args.n
                .iter()
                .map(|&n| (format!("n = {n}"), run_generated(&args, family, n)))
                .collect()
        };
        for (label, result) in batches {
            match result {
                Ok(batch) => {
                    for r in batch.into_iter().filter(|r| args.keep(r.config.experiment)) {
                        if let Some(gap) = r.incremental_gap {
                            info!(
                                "{family} {label} exp {}: incremental vs fresh QR gap {gap:e}",
                                r.config.experiment
                            );
                        }
                        if r.rebuilt {
                            info!(
                                "{family} {label} exp {}: QR factor rebuilt",
                                r.config.experiment
                            );
                        }
                        if !r.passes(args.re_gate) {
                            error!(
                                "{family} {label} exp {}: RE {:?} above gate {:e}",
                                r.config.experiment, r.re, args.re_gate
                            );
                            ok = false;
                        }
                        reports.push(r);
                    }
                }
                Err(err) => {
                    error!("{family} {label}: {err}");
                    ok = false;
                }
            }
        }
    }

    print!("{}", experiment::format_table(&reports));
    if let Some(path) = &args.csv {
        fs::write(path, experiment::to_csv(&reports))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{}",
        if ok {
            "all runs passed"
        } else {
            "some runs failed"
        }
    );
    Ok(ok)
}
