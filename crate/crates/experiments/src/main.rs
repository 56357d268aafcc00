// Range checks are written as negations so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smtm_core::scaling::{optimize_ell, EllGrid, LimitGeometry, LimitModel};
use smtm_core::WeightKind;
use smtm_experiments::{acceptance, config, runner, ExperimentError};

#[derive(Parser)]
#[command(name = "smtm", version, about = "Stereographic multiple-try Metropolis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file.
    Run {
        /// Preset name or path to a TOML config.
        source: String,
        /// Base seed; seeds are `seed, seed + 1, ..`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set iterations=5000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// ESJD-optimal step scale of the limit law with f = N(m, 1 - m^2).
    Scaling {
        #[arg(long, default_value = "gb")]
        weight: WeightKind,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        m: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the acceptance criteria.
    Selftest {
        /// Only these criterion numbers.
        #[arg(long = "only", value_name = "ID")]
        only: Vec<u8>,
    },
}

fn scaling(weight: WeightKind, n: usize, lambda: f64, m: f64, samples: usize, seed: u64) -> Result<(), ExperimentError> {
    if !(m.abs() < 1.0) || !(lambda > 0.0) || n == 0 {
        return Err(ExperimentError::Config("need |m| < 1, lambda > 0 and n >= 1".into()));
    }
    let model = LimitModel {
        geometry: LimitGeometry::Sphere { lambda },
        fisher: 1.0 / (1.0 - m * m),
        weight,
    };
    let grid = EllGrid::new(0.2, 10.0, 50).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let pool = runner::worker_pool()?;
    let opt = pool
        .install(|| optimize_ell(&model, n, &grid, samples, seed))
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    println!("ell,esjd,acceptance");
    for (l, e, a) in &opt.curve {
        println!("{l},{e},{a}");
    }
    println!(
        "# {weight} N={n} lambda={lambda} m={m}: l* = {}, esjd {} (se {}), acceptance {} (se {})",
        opt.ell, opt.esjd.mean, opt.esjd.std_error, opt.acceptance.mean, opt.acceptance.std_error
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            source,
            seed,
            out,
            mut overrides,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            config::load(&source, &overrides).and_then(|cfg| {
                let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
                let m = runner::run(&cfg, &dir)?;
                println!("{}: {} files in {}", m.name, m.files.len() + 1, dir.display());
                for c in &m.checks {
                    println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
                }
                Ok(())
            })
        }
        Command::Scaling {
            weight,
            n,
            lambda,
            m,
            samples,
            seed,
        } => scaling(weight, n, lambda, m, samples, seed),
        Command::Selftest { only } => {
            let mut all_passed = true;
            for c in acceptance::CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
                let o = acceptance::evaluate(c);
                println!("{}", o.line());
                all_passed &= o.passed;
            }
            if all_passed {
                Ok(())
            } else {
                Err(ExperimentError::Runtime("some criteria failed".into()))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smtm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
