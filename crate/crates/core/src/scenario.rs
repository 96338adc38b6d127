//! Scenario configuration and the named presets.
//!
//! A scenario fixes the topology family and size, the link dynamics, the
//! traffic model, queue/TTL limits, the timestep budgets and the learning
//! parameters. Configs round-trip through a flat `key = value` text format
//! with `[section]` headers:
//!
//! ```text
//! name = static-lattice-low
//!
//! [topology]
//! kind = lattice
//! n = 25
//!
//! [links]
//! alpha = 1
//! beta = 0
//!
//! [traffic]
//! lambda_f = 0.002*N/25
//! lambda_d = 5000
//! lambda_p = 0.05
//! ...
//! ```
//!
//! Keys that are omitted keep their defaults.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::drl::DrlConfig;
use crate::error::{Error, Result};
use crate::nn::Optimizer;
use crate::sim::{stream_rng, SimParams};
use crate::topology::{make_lattice, make_random_geometric, steady_state_prob, Topology};
use crate::traffic::TrafficConfig;

const TOPOLOGY_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, clap::ValueEnum)]
pub enum PolicyKind {
    Sp,
    Bp,
    Drl,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Sp => "sp",
            PolicyKind::Bp => "bp",
            PolicyKind::Drl => "drl",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" => Ok(PolicyKind::Sp),
            "bp" => Ok(PolicyKind::Bp),
            "drl" => Ok(PolicyKind::Drl),
            other => Err(Error::InvalidParameter(format!(
                "unknown policy `{other}` (expected sp, bp or drl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologySpec {
    Lattice,
    RandomGeometric { radius: f64 },
}

/// New-flow rate, either fixed or scaled with the device count as
/// `coef * N / reference_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowRate {
    Fixed(f64),
    PerDevice { coef: f64, reference_n: f64 },
}

impl FlowRate {
    pub fn eval(&self, n: usize) -> f64 {
        match *self {
            FlowRate::Fixed(x) => x,
            FlowRate::PerDevice { coef, reference_n } => coef * n as f64 / reference_n,
        }
    }
}

impl fmt::Display for FlowRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowRate::Fixed(x) => write!(f, "{x}"),
            FlowRate::PerDevice { coef, reference_n } => write!(f, "{coef}*N/{reference_n}"),
        }
    }
}

impl FromStr for FlowRate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some((coef, rest)) = compact.split_once("*N") {
            let coef = coef.parse::<f64>().map_err(|_| format!("bad coefficient in `{s}`"))?;
            let reference_n = match rest.strip_prefix('/') {
                Some(d) => d.parse::<f64>().map_err(|_| format!("bad divisor in `{s}`"))?,
                None if rest.is_empty() => 1.0,
                None => return Err(format!("cannot parse rate `{s}`")),
            };
            if reference_n <= 0.0 {
                return Err(format!("divisor must be positive in `{s}`"));
            }
            Ok(FlowRate::PerDevice { coef, reference_n })
        } else {
            compact
                .parse::<f64>()
                .map(FlowRate::Fixed)
                .map_err(|_| format!("cannot parse rate `{s}`"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologySpec,
    pub n_devices: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_f: FlowRate,
    pub lambda_d: f64,
    pub lambda_p: f64,
    /// `B` for shortest path and DRL.
    pub queue_capacity: usize,
    /// Backpressure queue size per device, multiplied by `N`.
    pub bp_queue_per_device: usize,
    pub ttl: u32,
    pub t_train: u64,
    pub t_test: u64,
    pub t_round: u64,
    pub seed: u64,
    pub drl: DrlConfig,
}

pub const PRESET_NAMES: [&str; 6] = [
    "static-lattice-low",
    "static-lattice-high",
    "dynamic-lattice-high",
    "delay-tolerant-lattice-high",
    "static-random-high",
    "delay-tolerant-random-high",
];

const LOW_PACKET_RATE: f64 = 0.05;
const HIGH_PACKET_RATE: f64 = 0.2;

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "custom".into(),
            topology: TopologySpec::Lattice,
            n_devices: 25,
            alpha: 1.0,
            beta: 0.0,
            lambda_f: FlowRate::PerDevice {
                coef: 0.002,
                reference_n: 25.0,
            },
            lambda_d: 5000.0,
            lambda_p: LOW_PACKET_RATE,
            queue_capacity: 50,
            bp_queue_per_device: 50,
            ttl: 200,
            t_train: 30_000,
            t_test: 100_000,
            t_round: 1000,
            seed: 1,
            drl: DrlConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = ScenarioConfig {
            name: name.to_string(),
            ..ScenarioConfig::default()
        };
        let cfg = match name {
            "static-lattice-low" => base,
            "static-lattice-high" => ScenarioConfig {
                lambda_p: HIGH_PACKET_RATE,
                ..base
            },
            "dynamic-lattice-high" => ScenarioConfig {
                alpha: 0.8,
                beta: 0.2,
                lambda_p: HIGH_PACKET_RATE,
                t_train: 49_000,
                ..base
            },
            "delay-tolerant-lattice-high" => ScenarioConfig {
                alpha: 0.5,
                beta: 0.4,
                lambda_p: HIGH_PACKET_RATE,
                t_train: 49_000,
                ..base
            },
            "static-random-high" => ScenarioConfig {
                topology: TopologySpec::RandomGeometric { radius: 0.5 },
                lambda_p: HIGH_PACKET_RATE,
                ..base
            },
            "delay-tolerant-random-high" => ScenarioConfig {
                topology: TopologySpec::RandomGeometric { radius: 0.3 },
                alpha: 0.5,
                beta: 0.4,
                lambda_p: HIGH_PACKET_RATE,
                ..base
            },
            other => {
                return Err(Error::UnknownScenario {
                    name: other.to_string(),
                    available: PRESET_NAMES.join(", "),
                })
            }
        };
        Ok(cfg)
    }

    /// A preset name, or else a path to a config file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESET_NAMES.contains(&name_or_path) {
            return Self::preset(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::load(path);
        }
        Err(Error::UnknownScenario {
            name: name_or_path.to_string(),
            available: PRESET_NAMES.join(", "),
        })
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n_devices = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f.eval(self.n_devices)
    }

    pub fn traffic(&self) -> TrafficConfig {
        TrafficConfig {
            lambda_f: self.lambda_f(),
            lambda_d: self.lambda_d,
            lambda_p: self.lambda_p,
        }
    }

    pub fn steady_state(&self) -> Result<f64> {
        steady_state_prob(self.alpha, self.beta)
    }

    /// Queue capacity for `policy`: `bp_queue_per_device * N` for
    /// backpressure, `queue_capacity` otherwise.
    pub fn capacity_for(&self, policy: PolicyKind) -> usize {
        match policy {
            PolicyKind::Bp => self.bp_queue_per_device * self.n_devices,
            _ => self.queue_capacity,
        }
    }

    pub fn sim_params(&self, policy: PolicyKind) -> SimParams {
        SimParams {
            ttl: self.ttl,
            queue_capacity: self.capacity_for(policy),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_devices < 2 {
            return bad(format!("n must be >= 2, got {}", self.n_devices));
        }
        if self.topology == TopologySpec::Lattice {
            let side = lattice_side(self.n_devices);
            if side * side != self.n_devices {
                return bad(format!(
                    "lattice needs a square device count, got {}",
                    self.n_devices
                ));
            }
        }
        self.steady_state()?;
        if self.t_round == 0 || self.t_train % self.t_round != 0 || self.t_test % self.t_round != 0
        {
            return bad(format!(
                "t_train ({}) and t_test ({}) must be multiples of t_round ({})",
                self.t_train, self.t_test, self.t_round
            ));
        }
        if self.lambda_f() < 0.0 || self.lambda_d < 0.0 || self.lambda_p < 0.0 {
            return bad("traffic rates must be nonnegative".into());
        }
        if self.queue_capacity == 0 || self.bp_queue_per_device == 0 || self.ttl == 0 {
            return bad("queue sizes and ttl must be positive".into());
        }
        let g = self.drl.reward.gamma;
        if !(0.0..1.0).contains(&g) {
            return bad(format!("gamma must lie in [0, 1), got {g}"));
        }
        if !(0.0..=1.0).contains(&self.drl.epsilon_train)
            || !(0.0..=1.0).contains(&self.drl.epsilon_test)
        {
            return bad("epsilons must lie in [0, 1]".into());
        }
        if self.drl.fit.batch_size == 0 || self.drl.fit.epochs == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        Ok(())
    }

    /// Builds the potential-link graph. Random geometric placements are
    /// drawn from a stream of `seed` independent of the simulation streams.
    pub fn build_topology(&self, seed: u64) -> Result<Topology> {
        match self.topology {
            TopologySpec::Lattice => make_lattice(lattice_side(self.n_devices)),
            TopologySpec::RandomGeometric { radius } => {
                let mut rng = stream_rng(seed, TOPOLOGY_STREAM);
                make_random_geometric(self.n_devices, radius, &mut rng)
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.drl;
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "\n[topology]");
        match self.topology {
            TopologySpec::Lattice => {
                let _ = writeln!(s, "kind = lattice");
            }
            TopologySpec::RandomGeometric { radius } => {
                let _ = writeln!(s, "kind = random-geometric");
                let _ = writeln!(s, "radius = {radius}");
            }
        }
        let _ = writeln!(s, "n = {}", self.n_devices);
        let _ = writeln!(s, "\n[links]");
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        if let Ok(pi) = self.steady_state() {
            let _ = writeln!(s, "# pi = {pi}");
        }
        let _ = writeln!(s, "\n[traffic]");
        let _ = writeln!(s, "lambda_f = {}", self.lambda_f);
        let _ = writeln!(s, "lambda_d = {}", self.lambda_d);
        let _ = writeln!(s, "lambda_p = {}", self.lambda_p);
        let _ = writeln!(s, "\n[sim]");
        let _ = writeln!(s, "queue_capacity = {}", self.queue_capacity);
        let _ = writeln!(s, "bp_queue_capacity = {}*N", self.bp_queue_per_device);
        let _ = writeln!(s, "ttl = {}", self.ttl);
        let _ = writeln!(s, "t_train = {}", self.t_train);
        let _ = writeln!(s, "t_test = {}", self.t_test);
        let _ = writeln!(s, "t_round = {}", self.t_round);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[rl]");
        let _ = writeln!(s, "gamma = {}", d.reward.gamma);
        let _ = writeln!(s, "r_transition = {}", d.reward.r_transition);
        let _ = writeln!(s, "r_delivery = {}", d.reward.r_delivery);
        let _ = writeln!(s, "r_drop = {}", d.reward.r_drop());
        let _ = writeln!(s, "epsilon_train = {}", d.epsilon_train);
        let _ = writeln!(s, "epsilon_test = {}", d.epsilon_test);
        let _ = writeln!(s, "k_iterations = {}", d.k_iterations);
        let _ = writeln!(s, "stay = {}", d.stay.as_str());
        let _ = writeln!(s, "epochs = {}", d.fit.epochs);
        let _ = writeln!(s, "batch_size = {}", d.fit.batch_size);
        let _ = writeln!(s, "learning_rate = {}", d.fit.learning_rate);
        let _ = writeln!(
            s,
            "optimizer = {}",
            match d.fit.optimizer {
                Optimizer::Adam => "adam",
                Optimizer::Sgd => "sgd",
            }
        );
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut kind: Option<String> = None;
        let mut radius: Option<f64> = None;
        let mut r_drop: Option<(usize, f64)> = None;
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config { line: line_no, msg };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            fn num<T: FromStr>(v: &str, line: usize) -> Result<T> {
                v.parse().map_err(|_| Error::Config {
                    line,
                    msg: format!("cannot parse `{v}`"),
                })
            }
            match (section.as_str(), key) {
                ("", "name") => cfg.name = value.to_string(),
                ("topology", "kind") => kind = Some(value.to_string()),
                ("topology", "radius") => radius = Some(num(value, line_no)?),
                ("topology", "n") => cfg.n_devices = num(value, line_no)?,
                ("links", "alpha") => cfg.alpha = num(value, line_no)?,
                ("links", "beta") => cfg.beta = num(value, line_no)?,
                ("traffic", "lambda_f") => cfg.lambda_f = value.parse().map_err(err)?,
                ("traffic", "lambda_d") => cfg.lambda_d = num(value, line_no)?,
                ("traffic", "lambda_p") => cfg.lambda_p = num(value, line_no)?,
                ("sim", "queue_capacity") => cfg.queue_capacity = num(value, line_no)?,
                ("sim", "bp_queue_capacity") => {
                    let per = value
                        .replace(' ', "")
                        .strip_suffix("*N")
                        .map(str::to_string)
                        .ok_or_else(|| err("bp_queue_capacity must read `<k>*N`".into()))?;
                    cfg.bp_queue_per_device = num(&per, line_no)?;
                }
                ("sim", "ttl") => cfg.ttl = num(value, line_no)?,
                ("sim", "t_train") => cfg.t_train = num(value, line_no)?,
                ("sim", "t_test") => cfg.t_test = num(value, line_no)?,
                ("sim", "t_round") => cfg.t_round = num(value, line_no)?,
                ("sim", "seed") => cfg.seed = num(value, line_no)?,
                ("rl", "gamma") => cfg.drl.reward.gamma = num(value, line_no)?,
                ("rl", "r_transition") => cfg.drl.reward.r_transition = num(value, line_no)?,
                ("rl", "r_delivery") => cfg.drl.reward.r_delivery = num(value, line_no)?,
                ("rl", "r_drop") => r_drop = Some((line_no, num(value, line_no)?)),
                ("rl", "epsilon_train") => cfg.drl.epsilon_train = num(value, line_no)?,
                ("rl", "epsilon_test") => cfg.drl.epsilon_test = num(value, line_no)?,
                ("rl", "k_iterations") => cfg.drl.k_iterations = num(value, line_no)?,
                ("rl", "stay") => cfg.drl.stay = num(value, line_no)?,
                ("rl", "epochs") => cfg.drl.fit.epochs = num(value, line_no)?,
                ("rl", "batch_size") => cfg.drl.fit.batch_size = num(value, line_no)?,
                ("rl", "learning_rate") => cfg.drl.fit.learning_rate = num(value, line_no)?,
                ("rl", "optimizer") => {
                    cfg.drl.fit.optimizer = match value {
                        "adam" => Optimizer::Adam,
                        "sgd" => Optimizer::Sgd,
                        other => return Err(err(format!("unknown optimizer `{other}`"))),
                    }
                }
                (sec, key) => {
                    return Err(err(format!("unknown key `{key}` in section [{sec}]")));
                }
            }
        }
        cfg.topology = match kind.as_deref() {
            None | Some("lattice") => TopologySpec::Lattice,
            Some("random-geometric") => TopologySpec::RandomGeometric {
                radius: radius.ok_or(Error::Config {
                    line: 0,
                    msg: "random-geometric topology needs a radius".into(),
                })?,
            },
            Some(other) => {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("unknown topology kind `{other}`"),
                })
            }
        };
        if let Some((line, value)) = r_drop {
            let derived = cfg.drl.reward.r_drop();
            if (value - derived).abs() > 1e-9 * derived.abs().max(1.0) {
                return Err(Error::Config {
                    line,
                    msg: format!("r_drop is derived as r_transition/(1-gamma) = {derived}"),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// One-line provenance string for artifact headers.
    pub fn provenance(&self, policy: &str, seed: u64) -> String {
        format!(
            "relroute scenario={} policy={policy} n={} seed={seed}",
            self.name, self.n_devices
        )
    }
}

pub fn lattice_side(n: usize) -> usize {
    let mut side = (n as f64).sqrt().round() as usize;
    while side * side > n {
        side -= 1;
    }
    side
}
