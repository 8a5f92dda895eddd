use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use relot::harness::{self, ExperimentConfig, ReportFormat};
use relot::solver::{self, DEFAULT_BAND};
use relot::{
    chain_decompose, check_certificate, CostModel, CostSpec, DiscreteMeasure, OtInstance,
    TransportPlan,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INVALID: u8 = 3;

/// Exact optimal transport under relativistic costs.
#[derive(Parser)]
#[command(name = "relot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal plan, value and dual potentials at time t.
    Solve {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        t: f64,
        /// JSON output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least time with a finite-cost coupling.
    CriticalTime {
        #[command(flatten)]
        problem: Problem,
    },
    /// Cost curve on an even grid plus the critical time.
    Curve {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        t_min: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long)]
        steps: usize,
        /// `.json` for JSON, anything else CSV (stdout CSV when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary-band and infinite-slope mass of an optimal plan.
    ThetaMass {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = DEFAULT_BAND)]
        band: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alternating-chain decomposition of two plans around a sub-plan.
    ChainCheck {
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        gamma_prime: PathBuf,
        #[arg(long)]
        gamma0: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refinement experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// `.csv` for CSV, anything else JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Problem {
    /// Built-in cost: brenier, quadratic_ball or finite_slope_demo.
    #[arg(long, required_unless_present = "cost_spec")]
    cost: Option<String>,
    /// JSON cost specification, instead of --cost.
    #[arg(long, conflicts_with = "cost")]
    cost_spec: Option<PathBuf>,
    /// Source atoms, CSV with header `x_1,...,x_d,weight`.
    #[arg(long)]
    mu: PathBuf,
    /// Target atoms, same format.
    #[arg(long)]
    nu: PathBuf,
}

enum Failure {
    Invalid(anyhow::Error),
    Infeasible(f64),
    Other(anyhow::Error),
}

impl From<relot::Error> for Failure {
    fn from(e: relot::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Invalid(e.into())
}

fn other<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Other(e.into())
}

impl Problem {
    fn instance(&self) -> Result<OtInstance, Failure> {
        let load = |p: &Path| {
            DiscreteMeasure::load_csv(p).with_context(|| format!("reading {}", p.display()))
        };
        let mu = load(&self.mu).map_err(invalid)?;
        let nu = load(&self.nu).map_err(invalid)?;
        let cost = match (&self.cost, &self.cost_spec) {
            (_, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(invalid)?;
                serde_json::from_str::<CostSpec>(&text)
                    .map_err(invalid)?
                    .build()?
            }
            (Some(name), None) => CostModel::named(name, mu.dim())?,
            (None, None) => {
                return Err(invalid(anyhow!("one of --cost or --cost-spec is required")))
            }
        };
        Ok(OtInstance::new(Arc::new(mu), Arc::new(nu), cost)?)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(other),
        None => io::stdout().write_all(text.as_bytes()).map_err(other),
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value).map_err(other)? + "\n")
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve { problem, t, out } => {
            let inst = problem.instance()?;
            let result = solver::solve(&inst, t)?;
            emit(out.as_deref(), &json(&result)?)?;
            if !result.is_finite() {
                return Err(Failure::Infeasible(t));
            }
        }
        Command::CriticalTime { problem } => {
            let inst = problem.instance()?;
            println!("{}", solver::critical_time(&inst));
        }
        Command::Curve {
            problem,
            t_min,
            t_max,
            steps,
            out,
        } => {
            let inst = problem.instance()?;
            let curve = solver::cost_curve(&inst, t_min, t_max, steps)?;
            let as_json = out
                .as_deref()
                .and_then(|p| p.extension())
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let text = if as_json {
                json(&curve)?
            } else {
                let mut buf = Vec::new();
                curve.write_csv(&mut buf).map_err(other)?;
                String::from_utf8(buf).map_err(other)?
            };
            emit(out.as_deref(), &text)?;
        }
        Command::ThetaMass {
            problem,
            t,
            band,
            out,
        } => {
            let inst = problem.instance()?;
            let result = solver::solve(&inst, t)?;
            if !result.is_finite() {
                return Err(Failure::Infeasible(t));
            }
            let tm = solver::theta_mass(&result, inst.cost(), band)?;
            emit(out.as_deref(), &json(&tm)?)?;
        }
        Command::ChainCheck {
            gamma,
            gamma_prime,
            gamma0,
            eps,
            out,
        } => {
            let load = |p: &Path| -> Result<TransportPlan, Failure> {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))
                    .map_err(invalid)?;
                Ok(TransportPlan::from_json(&text)?)
            };
            let (g, gp, g0) = (load(&gamma)?, load(&gamma_prime)?, load(&gamma0)?);
            let outcome = chain_decompose(&g, &gp, &g0, eps)?;
            let violations = outcome
                .certificate()
                .map(|c| check_certificate(&g, &gp, &g0, c, 1e-9))
                .unwrap_or_default();
            let report = serde_json::json!({ "outcome": outcome, "violations": violations });
            emit(out.as_deref(), &json(&report)?)?;
            if !violations.is_empty() {
                return Err(other(anyhow!(
                    "certificate violates {} relation(s)",
                    violations.len()
                )));
            }
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))
                .map_err(invalid)?;
            let report = harness::run_experiment(&cfg).map_err(other)?;
            harness::emit_report(&report, ReportFormat::from_path(&out), &out).map_err(other)?;
        }
    }
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("RELOT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("RELOT_THREADS={raw:?} is not a thread count"))?;
    if n == 0 {
        return Err(anyhow!("RELOT_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INVALID);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(t)) => {
            eprintln!("infeasible: no finite-cost coupling at t = {t}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
