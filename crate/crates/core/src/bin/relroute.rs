use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use relroute::experiment::{self, SweepSpec};
use relroute::nn::Mlp;
use relroute::scenario::{PolicyKind, ScenarioConfig};
use relroute::Error;

/// Packet routing simulator with shortest-path, backpressure and learned
/// policies.
#[derive(Parser)]
#[command(name = "relroute", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Preset name or path to a config file.
    #[arg(long)]
    scenario: String,
    /// Number of devices (comma-separated list for sweep).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Timesteps to run, overriding the scenario budget.
    #[arg(long)]
    timesteps: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a routing agent and write the model and training metrics.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run one policy and write its per-round metrics.
    Test {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a grid over device counts, seeds and policies.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, counting up from --seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        policy: Vec<PolicyKind>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print a scenario's full configuration.
    ShowPreset {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: Option<usize>,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownScenario { .. } | Error::Config { .. } | Error::InvalidParameter(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other),
        }
    }
}

fn scenario(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::resolve(&common.scenario)?;
    match common.n.as_slice() {
        [] => {}
        [n] => cfg.n_devices = *n,
        _ => return Err(Failure::Usage("--n takes a single value here".into())),
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: Option<&PathBuf>) -> Result<Option<Arc<Mlp>>, Failure> {
    path.map(|p| Mlp::load(p).map(Arc::new))
        .transpose()
        .map_err(Failure::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { common } => {
            let cfg = scenario(&common)?;
            let t = common.timesteps.unwrap_or(cfg.t_train);
            let (outcome, paths) = experiment::train_to_dir(&cfg, t, &common.out)?;
            if let Some(last) = outcome.metrics.last() {
                println!(
                    "trained {} rounds, final pct_delivered {:.4}",
                    outcome.metrics.len(),
                    last.pct_delivered
                );
            }
            println!("model: {}", paths.model.display());
            println!("metrics: {}", paths.metrics.display());
            println!("trace: {}", paths.trace.display());
        }
        Command::Test {
            common,
            policy,
            model,
        } => {
            let cfg = scenario(&common)?;
            let t = common.timesteps.unwrap_or(cfg.t_test);
            let model = load_model(model.as_ref())?;
            let (records, path) = experiment::test_to_dir(&cfg, policy, model, t, &common.out)?;
            if let Some(last) = records.last() {
                println!(
                    "pct_delivered {:.4} delay_per_packet {:.2} avg_queue_len {:.3}",
                    last.pct_delivered, last.delay_per_packet, last.avg_queue_len
                );
            }
            println!("metrics: {}", path.display());
        }
        Command::Sweep {
            common,
            seeds,
            policy,
            model,
        } => {
            let base = ScenarioConfig::resolve(&common.scenario)?;
            let ns = if common.n.is_empty() {
                vec![base.n_devices]
            } else {
                common.n.clone()
            };
            if seeds == 0 {
                return Err(Failure::Usage("--seeds must be at least 1".into()));
            }
            let first = common.seed.unwrap_or(base.seed);
            let spec = SweepSpec {
                ns,
                seeds: (first..first + seeds).collect(),
                policies: policy,
                t_test: common.timesteps.unwrap_or(base.t_test),
                model: load_model(model.as_ref())?,
            };
            let report = experiment::sweep(&base, &spec);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&common.out)
                .map_err(|e| Failure::Runtime(Error::Io {
                    path: common.out.clone(),
                    source: e,
                }))?;
            let path = common.out.join(format!("{}_sweep.csv", base.name));
            let provenance = format!(
                "relroute sweep scenario={} seeds={}..{}",
                base.name,
                first,
                first + seeds - 1
            );
            std::fs::write(&path, report.to_csv(&provenance)).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: path.clone(),
                    source: e,
                })
            })?;
            println!("sweep: {}", path.display());
        }
        Command::ShowPreset { scenario, n } => {
            let mut cfg = ScenarioConfig::resolve(&scenario)?;
            if let Some(n) = n {
                cfg.n_devices = n;
            }
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
