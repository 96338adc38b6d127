//! Train, test and sweep orchestration with CSV and model artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::{Backpressure, ShortestPath};
use crate::drl::{train_round, DrlPolicy, RoundTrace};
use crate::error::{Error, Result};
use crate::features::INPUT_LEN;
use crate::nn::{standard_shape, Mlp};
use crate::scenario::{PolicyKind, ScenarioConfig};
use crate::sim::{metrics_csv, stream_rng, MetricsRecord, RoutingPolicy, Simulation};
use crate::util::write_atomic;

const TRAINING_STREAM: u64 = 4;

pub const TRACE_HEADER: &str = "round,rows_total,pairs_trained,mean_loss,mean_target";

pub fn build_simulation(cfg: &ScenarioConfig, policy: PolicyKind, seed: u64) -> Result<Simulation> {
    cfg.validate()?;
    let topo = Arc::new(cfg.build_topology(seed)?);
    Simulation::new(
        topo,
        cfg.alpha,
        cfg.beta,
        cfg.traffic(),
        cfg.sim_params(policy),
        seed,
    )
}

/// Output of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub metrics: Vec<MetricsRecord>,
    pub traces: Vec<RoundTrace>,
}

/// Alternates data-collection rounds with fitted Q-iteration. Round 0 is
/// driven by a freshly initialized network; after every round the behavior
/// network is replaced by the one trained on all experience so far.
pub fn train(cfg: &ScenarioConfig, t_train: u64) -> Result<TrainOutcome> {
    train_with_progress(cfg, t_train, |_, _| {})
}

/// [`train`], calling `on_round` after each round is trained.
pub fn train_with_progress(
    cfg: &ScenarioConfig,
    t_train: u64,
    mut on_round: impl FnMut(&MetricsRecord, &RoundTrace),
) -> Result<TrainOutcome> {
    let seed = cfg.seed;
    let mut sim = build_simulation(cfg, PolicyKind::Drl, seed)?;
    if t_train == 0 || t_train % cfg.t_round != 0 {
        return Err(Error::InvalidParameter(format!(
            "training length {t_train} must be a positive multiple of {}",
            cfg.t_round
        )));
    }
    let mut rng = stream_rng(seed, TRAINING_STREAM);
    let initial = Mlp::with_rng(&standard_shape(INPUT_LEN), &mut rng);
    let mut policy =
        DrlPolicy::recording(Arc::new(initial), cfg.drl.epsilon_train).with_stay_mode(cfg.drl.stay);
    let rounds = (t_train / cfg.t_round) as usize;
    let mut metrics = Vec::with_capacity(rounds);
    let mut traces = Vec::with_capacity(rounds);
    for round in 0..rounds {
        metrics.push(sim.run_round(&mut policy, round, cfg.t_round));
        let store = policy.store().expect("recording policy");
        if store.is_empty() {
            traces.push(RoundTrace {
                rows_total: 0,
                pairs_trained: 0,
                mean_loss: 0.0,
                mean_target: 0.0,
            });
            on_round(&metrics[round], &traces[round]);
            continue;
        }
        let (mlp, trace) = train_round(store, &cfg.drl, &mut rng)
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("round {round}: {msg}")),
                other => other,
            })?;
        policy.set_model(Arc::new(mlp));
        traces.push(trace);
        on_round(&metrics[round], &traces[round]);
    }
    let mut model = Mlp::clone(policy.model());
    model.set_metadata(cfg.provenance("drl", seed));
    Ok(TrainOutcome {
        model,
        metrics,
        traces,
    })
}

pub fn trace_csv(provenance: &str, traces: &[RoundTrace]) -> String {
    let mut s = format!("# {provenance}\n{TRACE_HEADER}\n");
    for (round, t) in traces.iter().enumerate() {
        let _ = writeln!(
            s,
            "{round},{},{},{},{}",
            t.rows_total, t.pairs_trained, t.mean_loss, t.mean_target
        );
    }
    s
}

pub fn artifact_name(cfg: &ScenarioConfig, policy: &str, seed: u64, ext: &str) -> String {
    format!("{}_{policy}_{}_{seed}.{ext}", cfg.name, cfg.n_devices)
}

/// Paths written by [`train_to_dir`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub model: PathBuf,
    pub metrics: PathBuf,
    pub trace: PathBuf,
}

pub fn train_to_dir(
    cfg: &ScenarioConfig,
    t_train: u64,
    out: &Path,
) -> Result<(TrainOutcome, TrainArtifacts)> {
    let outcome = train(cfg, t_train)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seed = cfg.seed;
    let provenance = cfg.provenance("drl-train", seed);
    let paths = TrainArtifacts {
        model: out.join(artifact_name(cfg, "drl", seed, "model")),
        metrics: out.join(artifact_name(cfg, "drl-train", seed, "csv")),
        trace: out.join(artifact_name(cfg, "drl-trace", seed, "csv")),
    };
    outcome.model.save(&paths.model)?;
    write_atomic(
        &paths.metrics,
        metrics_csv(&provenance, &outcome.metrics).as_bytes(),
    )?;
    write_atomic(
        &paths.trace,
        trace_csv(&provenance, &outcome.traces).as_bytes(),
    )?;
    let config_path = out.join(artifact_name(cfg, "drl", seed, "cfg"));
    write_atomic(&config_path, cfg.to_text().as_bytes())?;
    Ok((outcome, paths))
}

/// Checks a loaded network against the feature layout.
pub fn check_model(model: &Mlp) -> Result<()> {
    let sizes = model.sizes();
    if sizes.first() != Some(&INPUT_LEN) || sizes.last() != Some(&1) {
        return Err(Error::Incompatible(format!(
            "model shape {sizes:?} does not take {INPUT_LEN} inputs to 1 output"
        )));
    }
    Ok(())
}

/// Runs `t_test` steps of `policy` from a fresh simulation. DRL requires a
/// model and acts with `epsilon_test`.
pub fn test(
    cfg: &ScenarioConfig,
    policy: PolicyKind,
    model: Option<Arc<Mlp>>,
    t_test: u64,
) -> Result<Vec<MetricsRecord>> {
    let seed = cfg.seed;
    let mut sim = build_simulation(cfg, policy, seed)?;
    let mut runner: Box<dyn RoutingPolicy> = match policy {
        PolicyKind::Sp => Box::new(ShortestPath),
        PolicyKind::Bp => Box::new(Backpressure),
        PolicyKind::Drl => {
            let model = model.ok_or_else(|| {
                Error::InvalidParameter("the drl policy needs a model file".into())
            })?;
            check_model(&model)?;
            Box::new(DrlPolicy::new(model, cfg.drl.epsilon_test))
        }
    };
    let records = sim.run(&mut runner, t_test, cfg.t_round)?;
    if policy == PolicyKind::Bp {
        if let Some(r) = records.iter().find(|r| r.dropped_full > 0) {
            return Err(Error::InvalidParameter(format!(
                "backpressure overflowed its {}-packet queues: {} drops by round {}",
                cfg.capacity_for(policy),
                r.dropped_full,
                r.round
            )));
        }
    }
    Ok(records)
}

pub fn test_to_dir(
    cfg: &ScenarioConfig,
    policy: PolicyKind,
    model: Option<Arc<Mlp>>,
    t_test: u64,
    out: &Path,
) -> Result<(Vec<MetricsRecord>, PathBuf)> {
    let records = test(cfg, policy, model, t_test)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(artifact_name(cfg, policy.as_str(), cfg.seed, "csv"));
    let csv = metrics_csv(&cfg.provenance(policy.as_str(), cfg.seed), &records);
    write_atomic(&path, csv.as_bytes())?;
    Ok((records, path))
}

/// Mean and 95% Student-t half-width. The half-width is `None` with fewer
/// than two samples.
pub fn mean_ci95(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * (var / n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub n: usize,
    pub policy: PolicyKind,
    pub runs: usize,
    pub failures: Vec<(u64, String)>,
    /// `(mean, ci half-width)` for pct_delivered, delay_per_packet,
    /// avg_queue_len and alg_connectivity, in that order.
    pub stats: [(f64, Option<f64>); 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub warnings: Vec<String>,
}

pub const SWEEP_HEADER: &str = "n,policy,runs,failed,pct_delivered_mean,pct_delivered_ci95,delay_per_packet_mean,delay_per_packet_ci95,avg_queue_len_mean,avg_queue_len_ci95,alg_connectivity_mean,alg_connectivity_ci95";

impl SweepReport {
    pub fn to_csv(&self, provenance: &str) -> String {
        let mut s = format!("# {provenance}\n");
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        let _ = writeln!(s, "{SWEEP_HEADER}");
        for c in &self.cells {
            let _ = write!(s, "{},{},{},{}", c.n, c.policy, c.runs, c.failures.len());
            for (mean, ci) in c.stats {
                let ci = ci.map(|x| x.to_string()).unwrap_or_default();
                let _ = write!(s, ",{mean},{ci}");
            }
            s.push('\n');
        }
        s
    }
}

/// Sweep grid description.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub t_test: u64,
    pub model: Option<Arc<Mlp>>,
}

/// Runs every (N, policy, seed) cell in parallel and aggregates the
/// final-round metrics per (N, policy). Failed runs are reported in their
/// cell and left out of the statistics.
pub fn sweep(base: &ScenarioConfig, spec: &SweepSpec) -> SweepReport {
    let jobs: Vec<(usize, PolicyKind, u64)> = spec
        .ns
        .iter()
        .flat_map(|&n| {
            spec.policies
                .iter()
                .flat_map(move |&p| spec.seeds.iter().map(move |&s| (n, p, s)))
        })
        .collect();
    let results: Vec<Result<MetricsRecord>> = jobs
        .par_iter()
        .map(|&(n, policy, seed)| {
            let cfg = base.clone().with_n(n).with_seed(seed);
            let records = test(&cfg, policy, spec.model.clone(), spec.t_test)?;
            records
                .last()
                .cloned()
                .ok_or_else(|| Error::InvalidParameter("run produced no rounds".into()))
        })
        .collect();

    let mut warnings = Vec::new();
    if spec.seeds.len() < 2 {
        warnings.push("fewer than two seeds; confidence intervals are undefined".to_string());
    }
    let mut cells = Vec::new();
    for &n in &spec.ns {
        for &policy in &spec.policies {
            let mut finals = Vec::new();
            let mut failures = Vec::new();
            for (job, res) in jobs.iter().zip(&results) {
                if job.0 != n || job.1 != policy {
                    continue;
                }
                match res {
                    Ok(r) => finals.push(r.clone()),
                    Err(e) => failures.push((job.2, e.to_string())),
                }
            }
            let column = |f: fn(&MetricsRecord) -> f64| {
                mean_ci95(&finals.iter().map(f).collect::<Vec<_>>())
            };
            let stats = [
                column(|r| r.pct_delivered),
                column(|r| r.delay_per_packet),
                column(|r| r.avg_queue_len),
                column(|r| r.alg_connectivity),
            ];
            for (seed, msg) in &failures {
                warnings.push(format!("n={n} policy={policy} seed={seed}: {msg}"));
            }
            cells.push(SweepCell {
                n,
                policy,
                runs: finals.len(),
                failures,
                stats,
            });
        }
    }
    SweepReport { cells, warnings }
}
