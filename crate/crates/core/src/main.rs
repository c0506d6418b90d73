use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coagfrag::config::{fixture, load_config, ScenarioConfig, FIXTURES};
use coagfrag::error::{Error, Result};
use coagfrag::observables::moment_ladder;
use coagfrag::oracles::OracleCase;
use coagfrag::runner;

/// Sectional solver and verification suite for coagulation with multiple fragmentation.
#[derive(Debug, Parser)]
#[command(name = "coagfrag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Source {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "fixture")]
    config: Option<PathBuf>,
    /// Built-in scenario name (see `oracles`).
    #[arg(long)]
    fixture: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig> {
        match (&self.config, &self.fixture) {
            (Some(path), _) => Ok(load_config(path)?),
            (None, Some(name)) => Ok(fixture(name)?),
            (None, None) => Err(Error::Config(coagfrag::config::ConfigError::Invalid(vec![
                "one of --config or --fixture is required".into(),
            ]))),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit, assemble and evolve a scenario; write moments, densities and report.json.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop with exit status 3 when any hypothesis fails.
        #[arg(long)]
        strict_hypotheses: bool,
    },
    /// Audit the kernel hypotheses and print the report as JSON.
    CheckHypotheses {
        #[command(flatten)]
        source: Source,
        /// Also write audit.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute moments from the density CSVs of a finished run.
    Moments {
        /// Directory holding snapshots.csv.
        #[arg(long)]
        out: PathBuf,
        /// Extra moment orders, comma separated.
        #[arg(long, value_delimiter = ',')]
        orders: Vec<f64>,
    },
    /// Two-solution Gronwall check and optional grid refinement study.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cell counts for the refinement study, e.g. 128,256,512.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Print the moment-integrability ladder as JSON.
    Ladder {
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        rho0: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// List the built-in scenarios and closed-form fixtures.
    Oracles,
}

fn out_dir(cli: Option<PathBuf>, config: &ScenarioConfig) -> PathBuf {
    cli.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            source,
            out,
            strict_hypotheses,
        } => {
            let config = source.load()?;
            let out = out_dir(out, &config);
            let outcome = runner::run(&config, &out, strict_hypotheses)?;
            if outcome.audit.failed {
                eprintln!("warning: {}", runner::summarize_audit(&outcome.audit));
            }
            if let Some(r) = &outcome.report {
                println!(
                    "{} snapshots, {} steps ({} rejected), max mass residual {:e}; artifacts in {}",
                    r.snapshots.len(),
                    r.steps.accepted,
                    r.steps.rejected,
                    r.mass_balance.max_residual,
                    out.display()
                );
            }
            Ok(0)
        }
        Command::CheckHypotheses { source, out } => {
            let config = source.load()?;
            let section = runner::check_hypotheses(&config, out.as_deref())?;
            print_json(&section);
            Ok(if section.failed { 3 } else { 0 })
        }
        Command::Moments { out, orders } => {
            let (series, _) = runner::recompute_moments(Path::new(&out), &orders)?;
            println!(
                "recomputed {} snapshots into {}",
                series.len(),
                out.join("moments_recomputed.csv").display()
            );
            Ok(0)
        }
        Command::Compare { source, out, levels } => {
            let config = source.load()?;
            let out = out_dir(out, &config);
            let outcome = runner::compare(&config, &out, levels.as_deref())?;
            let g = &outcome.gronwall;
            println!(
                "gronwall: {} samples, {} violations (tau_disc = {})",
                g.samples.len(),
                g.violations(),
                g.tau_disc
            );
            if let Some(r) = &outcome.refinement {
                for p in &r.pairs {
                    let order = p.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
                    println!("refinement {} -> {}: distance {:e}, order {order}", p.coarse, p.fine, p.distance);
                }
            }
            Ok(if outcome.passed() { 0 } else { 3 })
        }
        Command::Ladder { mu, nu, rho0, delta } => {
            print_json(&moment_ladder(mu, nu, rho0, delta)?);
            Ok(0)
        }
        Command::Oracles => {
            for case in OracleCase::ALL {
                println!("{:<24} {}", case.name(), case.description());
            }
            for name in FIXTURES {
                if OracleCase::from_name(name).is_none() {
                    println!("{name:<24} scenario without closed form (used by `compare`)");
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
