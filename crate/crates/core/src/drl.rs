//! Packet-centric deep Q-learning with options.
//!
//! Every time the head packet of a queue makes a routing decision, one row
//! per candidate action is stored. A packet's residence at a device is one
//! option that ends at its next decision; its sample return uses the
//! closed-form discounted sum of a constant per-step reward. Rows of the same
//! packet are chained by matching a decision time at the previous device
//! with the arrival time at the next one, and a fresh network is regressed
//! onto the bootstrapped targets each round (fitted Q-iteration).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{join, ActionFeatures, DecisionFeatures, StateFeatures, INPUT_LEN};
use crate::nn::{standard_shape, FitConfig, Mlp};
use crate::sim::{Decision, EnqueueOutcome, HopEvent, NetworkView, RoutingPolicy, SimRng};
use crate::topology::DeviceId;
use crate::traffic::{PacketId, Timestep};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub gamma: f64,
    pub r_transition: f64,
    pub r_delivery: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            gamma: 0.99,
            r_transition: -1.0,
            r_delivery: 0.0,
        }
    }
}

impl RewardSpec {
    /// Receiving `r_transition` forever: `r_transition / (1 - gamma)`,
    /// rounded to 12 significant digits so that decimal gammas give the
    /// decimal result (0.99 gives exactly -100).
    pub fn r_drop(&self) -> f64 {
        round_significant(self.r_transition / (1.0 - self.gamma), 12)
    }
}

fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - x.abs().log10().ceil() as i32);
    (x * scale).round() / scale
}

/// Discounted sum of a constant reward `r_c` over `delta` steps,
/// `r_c * (1 - gamma^delta) / (1 - gamma)`.
pub fn option_return(delta: u64, r_c: f64, gamma: f64) -> f64 {
    assert!(delta >= 1, "an option lasts at least one timestep");
    if gamma == 1.0 {
        return r_c * delta as f64;
    }
    r_c * (1.0 - gamma.powi(delta as i32)) / (1.0 - gamma)
}

/// Option target `R(delta, r_c) + gamma^delta * max_q`.
pub fn option_target(delta: u64, r_c: f64, gamma: f64, max_q: f64) -> f64 {
    option_return(delta, r_c, gamma) + gamma.powi(delta as i32) * max_q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardClass {
    Transition,
    Delivery,
    Drop,
}

impl RewardClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardClass::Transition => "transition",
            RewardClass::Delivery => "delivery",
            RewardClass::Drop => "drop",
        }
    }
}

/// One routing decision and all its candidate actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub packet_id: PacketId,
    pub device: DeviceId,
    /// Start of the residence that ends with this decision.
    pub t_i: Timestep,
    /// Decision timestep.
    pub t_j: Timestep,
    pub state: StateFeatures,
    /// Offset of this decision's candidates in the store's candidate arrays.
    first_candidate: usize,
    n_candidates: usize,
    /// Index of the chosen candidate within this decision.
    pub chosen: usize,
    /// Class of the option started by the chosen action; `None` until the
    /// outcome is observed.
    pub outcome: Option<RewardClass>,
}

impl DecisionRecord {
    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }
}

/// A flat row with one candidate action of one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceRow {
    pub packet_id: PacketId,
    pub device_id: DeviceId,
    pub t_i: Timestep,
    pub t_j: Timestep,
    pub state_feats: StateFeatures,
    pub action_feats: ActionFeatures,
    pub reward_class: Option<RewardClass>,
    pub chosen: bool,
    pub action_device_id: DeviceId,
}

/// Append-only decision log accumulated from time zero.
#[derive(Debug, Clone, Default)]
pub struct ExperienceStore {
    decisions: Vec<DecisionRecord>,
    cand_devices: Vec<DeviceId>,
    cand_actions: Vec<ActionFeatures>,
    // (packet, arrival time) -> decision ending that residence
    by_arrival: HashMap<(PacketId, Timestep), usize>,
    // packet -> latest decision whose outcome is not yet known
    pending: HashMap<PacketId, usize>,
}

impl ExperienceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn n_decisions(&self) -> usize {
        self.decisions.len()
    }

    /// Total candidate rows.
    pub fn n_rows(&self) -> usize {
        self.cand_actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn candidate_devices(&self, d: &DecisionRecord) -> &[DeviceId] {
        &self.cand_devices[d.first_candidate..d.first_candidate + d.n_candidates]
    }

    pub fn candidate_actions(&self, d: &DecisionRecord) -> &[ActionFeatures] {
        &self.cand_actions[d.first_candidate..d.first_candidate + d.n_candidates]
    }

    /// Stores the decision of packet `packet_id` at `device`, whose residence
    /// began at `t_i`, taken at `t_j`. Returns the rows it produced.
    pub fn record_decision(
        &mut self,
        packet_id: PacketId,
        device: DeviceId,
        t_i: Timestep,
        t_j: Timestep,
        features: &DecisionFeatures,
        chosen: usize,
    ) -> Vec<ExperienceRow> {
        assert!(chosen < features.len(), "chosen candidate out of range");
        assert!(t_j >= t_i, "decision precedes arrival");
        let idx = self.decisions.len();
        let first = self.cand_actions.len();
        self.cand_devices.extend_from_slice(&features.candidates);
        self.cand_actions.extend_from_slice(&features.actions);
        self.decisions.push(DecisionRecord {
            packet_id,
            device,
            t_i,
            t_j,
            state: features.state,
            first_candidate: first,
            n_candidates: features.len(),
            chosen,
            outcome: None,
        });
        self.by_arrival.insert((packet_id, t_i), idx);
        self.pending.insert(packet_id, idx);
        self.rows_of(idx).collect()
    }

    /// Sets the class of the option started by the packet's latest decision.
    /// Returns false if the packet has no decision awaiting an outcome.
    pub fn finalize_option(&mut self, packet_id: PacketId, class: RewardClass) -> bool {
        match self.pending.remove(&packet_id) {
            Some(idx) => {
                self.decisions[idx].outcome = Some(class);
                true
            }
            None => false,
        }
    }

    /// Leaves the packet's latest decision without an outcome, so it is
    /// never trained on.
    pub fn abandon_option(&mut self, packet_id: PacketId) {
        self.pending.remove(&packet_id);
    }

    /// The decision that ends the residence started when `d`'s chosen action
    /// completed, if it has happened.
    pub fn successor(&self, d: &DecisionRecord) -> Option<&DecisionRecord> {
        self.by_arrival
            .get(&(d.packet_id, d.t_j))
            .map(|&i| &self.decisions[i])
    }

    fn rows_of(&self, idx: usize) -> impl Iterator<Item = ExperienceRow> + '_ {
        let d = &self.decisions[idx];
        (0..d.n_candidates).map(move |c| ExperienceRow {
            packet_id: d.packet_id,
            device_id: d.device,
            t_i: d.t_i,
            t_j: d.t_j,
            state_feats: d.state,
            action_feats: self.cand_actions[d.first_candidate + c],
            reward_class: if c == d.chosen { d.outcome } else { None },
            chosen: c == d.chosen,
            action_device_id: self.cand_devices[d.first_candidate + c],
        })
    }

    /// Every stored candidate row in insertion order.
    pub fn rows(&self) -> impl Iterator<Item = ExperienceRow> + '_ {
        (0..self.decisions.len()).flat_map(|i| self.rows_of(i))
    }

    /// CSV dump of all rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("packet_id,device_id,t_i,t_j");
        for i in 0..crate::features::STATE_LEN {
            let _ = write!(out, ",fs{i}");
        }
        for i in 0..crate::features::ACTION_LEN {
            let _ = write!(out, ",fa{i}");
        }
        out.push_str(",reward,b,action_device_id\n");
        for row in self.rows() {
            let _ = write!(
                out,
                "{},{},{},{}",
                row.packet_id, row.device_id, row.t_i, row.t_j
            );
            for x in row.state_feats.iter().chain(&row.action_feats) {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                row.reward_class.map(RewardClass::as_str).unwrap_or(""),
                u8::from(row.chosen),
                row.action_device_id
            );
        }
        out
    }
}

/// `max_u Q((p, v), u, t_j)` for every stored decision.
pub fn max_q_values(store: &ExperienceStore, mlp: &Mlp) -> Vec<f64> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(store.n_decisions());
    let mut xs = Vec::with_capacity(CHUNK * 8 * INPUT_LEN);
    for chunk in store.decisions.chunks(CHUNK) {
        xs.clear();
        for d in chunk {
            for a in store.candidate_actions(d) {
                xs.extend_from_slice(&join(&d.state, a));
            }
        }
        let q = mlp.forward_batch(&xs);
        let mut at = 0;
        for d in chunk {
            let best = q[at..at + d.n_candidates]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(best);
            at += d.n_candidates;
        }
    }
    out
}

/// Per-decision bootstrapped value of reaching that decision:
/// `R(t_j - t_i, r_transition) + gamma^(t_j - t_i) * max_u Q` using `mlp`.
/// This is the target handed back to the predecessor decision.
pub fn compute_targets(store: &ExperienceStore, mlp: &Mlp, reward: &RewardSpec) -> Vec<f64> {
    max_q_values(store, mlp)
        .into_iter()
        .zip(&store.decisions)
        .map(|(q, d)| {
            let delta = (d.t_j - d.t_i).max(1);
            option_target(delta, reward.r_transition, reward.gamma, q)
        })
        .collect()
}

/// Training pairs: inputs are row-major `INPUT_LEN` vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Index of the predecessor decision behind each pair.
    pub sources: Vec<usize>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Chains each finished option to its target. Terminal options
/// (delivery/drop) take their reward directly; transitions take the
/// successor decision's target from `targets`. Options whose outcome or
/// successor is still missing are left out.
pub fn chain_join(store: &ExperienceStore, targets: &[f64], reward: &RewardSpec) -> TrainingSet {
    assert_eq!(targets.len(), store.n_decisions());
    let mut set = TrainingSet::default();
    for (idx, d) in store.decisions.iter().enumerate() {
        let y = match d.outcome {
            None => continue,
            Some(RewardClass::Delivery) => option_return(1, reward.r_delivery, reward.gamma),
            Some(RewardClass::Drop) => option_return(1, reward.r_drop(), reward.gamma),
            Some(RewardClass::Transition) => match store.by_arrival.get(&(d.packet_id, d.t_j)) {
                Some(&s) => targets[s],
                None => continue,
            },
        };
        let action = &store.candidate_actions(d)[d.chosen];
        set.inputs.extend_from_slice(&join(&d.state, action));
        set.targets.push(y);
        set.sources.push(idx);
    }
    set
}

/// How a "stay" decision enters the experience chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StayMode {
    /// A stay leaves the option open: the residence keeps its arrival time,
    /// the hop into the device is valued by the decision that finally
    /// ends the residence, and stay rows receive no target of their own.
    #[default]
    Hold,
    /// A stay closes the option after one step and opens a new one at the
    /// same device.
    Restart,
}

impl StayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StayMode::Hold => "hold",
            StayMode::Restart => "restart",
        }
    }
}

impl std::str::FromStr for StayMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hold" => Ok(StayMode::Hold),
            "restart" => Ok(StayMode::Restart),
            other => Err(format!("unknown stay mode {other:?} (expected hold or restart)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrlConfig {
    pub reward: RewardSpec,
    pub stay: StayMode,
    pub fit: FitConfig,
    /// Q-learning sweeps per round.
    pub k_iterations: usize,
    pub epsilon_train: f64,
    pub epsilon_test: f64,
}

impl Default for DrlConfig {
    fn default() -> Self {
        DrlConfig {
            reward: RewardSpec::default(),
            stay: StayMode::default(),
            fit: FitConfig::default(),
            k_iterations: 10,
            epsilon_train: 0.1,
            epsilon_test: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub rows_total: usize,
    pub pairs_trained: usize,
    /// Mean loss over the last epoch of the last sweep.
    pub mean_loss: f64,
    /// Mean target of the last sweep.
    pub mean_target: f64,
}

/// One round of fitted Q-iteration: a fresh network, then `k_iterations`
/// sweeps of target computation, chaining and fitting.
pub fn train_round<R: Rng + ?Sized>(
    store: &ExperienceStore,
    cfg: &DrlConfig,
    rng: &mut R,
) -> Result<(Mlp, RoundTrace)> {
    let mut mlp = Mlp::with_rng(&standard_shape(INPUT_LEN), rng);
    let mut trace = RoundTrace {
        rows_total: store.n_rows(),
        pairs_trained: 0,
        mean_loss: 0.0,
        mean_target: 0.0,
    };
    if store.is_empty() {
        return Err(Error::InvalidParameter("no experience to train on".into()));
    }
    for k in 0..cfg.k_iterations {
        let targets = compute_targets(store, &mlp, &cfg.reward);
        let set = chain_join(store, &targets, &cfg.reward);
        if set.is_empty() {
            break;
        }
        let losses = mlp
            .fit(&set.inputs, &set.targets, &cfg.fit, rng)
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("sweep {k}: {msg}")),
                other => other,
            })?;
        trace.pairs_trained = set.len();
        trace.mean_loss = losses.last().copied().unwrap_or(0.0);
        trace.mean_target = set.targets.iter().sum::<f64>() / set.len() as f64;
    }
    Ok((mlp, trace))
}

/// Epsilon-greedy choice among the decision's candidates; greedy ties go to
/// the lowest index.
pub fn select_action<R: Rng + ?Sized>(
    mlp: &Mlp,
    features: &DecisionFeatures,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    let n = features.len();
    assert!(n > 0, "at least the stay action is available");
    if n == 1 {
        return 0;
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..n);
    }
    greedy(&candidate_q_values(mlp, features))
}

pub fn candidate_q_values(mlp: &Mlp, features: &DecisionFeatures) -> Vec<f64> {
    let mut xs = Vec::with_capacity(features.len() * INPUT_LEN);
    for i in 0..features.len() {
        xs.extend_from_slice(&features.input(i));
    }
    mlp.forward_batch(&xs)
}

/// Index of the largest value, lowest index on ties.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Routing policy driven by a frozen value network, optionally recording
/// experience.
#[derive(Debug, Clone)]
pub struct DrlPolicy {
    model: Arc<Mlp>,
    epsilon: f64,
    stay: StayMode,
    store: Option<ExperienceStore>,
    // packet -> time of its latest stay, for restarted residences
    restarted: HashMap<PacketId, Timestep>,
}

impl DrlPolicy {
    /// Greedy-with-exploration policy that does not record.
    pub fn new(model: Arc<Mlp>, epsilon: f64) -> Self {
        DrlPolicy {
            model,
            epsilon,
            stay: StayMode::default(),
            store: None,
            restarted: HashMap::new(),
        }
    }

    /// Policy that records every decision into an experience store.
    pub fn recording(model: Arc<Mlp>, epsilon: f64) -> Self {
        DrlPolicy {
            store: Some(ExperienceStore::new()),
            ..Self::new(model, epsilon)
        }
    }

    pub fn with_stay_mode(mut self, stay: StayMode) -> Self {
        self.stay = stay;
        self
    }

    pub fn model(&self) -> &Arc<Mlp> {
        &self.model
    }

    pub fn set_model(&mut self, model: Arc<Mlp>) {
        self.model = model;
    }

    pub fn store(&self) -> Option<&ExperienceStore> {
        self.store.as_ref()
    }

    pub fn take_store(&mut self) -> Option<ExperienceStore> {
        self.store.take()
    }
}

impl RoutingPolicy for DrlPolicy {
    fn name(&self) -> &str {
        "drl"
    }

    fn decide(&mut self, view: &NetworkView<'_>, v: DeviceId, rng: &mut SimRng) -> Decision {
        let packet = view.queues[v].head().expect("decide called on empty queue");
        let features = DecisionFeatures::compute(view, v, packet, 0);
        let choice = select_action(&self.model, &features, self.epsilon, rng);
        if let Some(store) = &mut self.store {
            let t_i = match self.restarted.get(&packet.id) {
                Some(&t) => t.max(packet.arrived_at_current),
                None => packet.arrived_at_current,
            };
            store.record_decision(
                packet.id,
                v,
                t_i,
                view.t,
                &features,
                choice,
            );
        }
        let next = features.candidates[choice];
        if next == v {
            Decision::Stay
        } else {
            Decision::Forward {
                slot: 0,
                next_hop: next,
            }
        }
    }

    fn observe(&mut self, event: &HopEvent) {
        let Some(store) = &mut self.store else {
            return;
        };
        match *event {
            HopEvent::Stayed { packet_id, t, .. } => match self.stay {
                StayMode::Hold => store.abandon_option(packet_id),
                StayMode::Restart => {
                    self.restarted.insert(packet_id, t);
                    store.finalize_option(packet_id, RewardClass::Transition);
                }
            },
            HopEvent::Forwarded {
                packet_id, outcome, ..
            } => {
                self.restarted.remove(&packet_id);
                let class = match outcome {
                    EnqueueOutcome::Delivered => RewardClass::Delivery,
                    EnqueueOutcome::Dropped(_) => RewardClass::Drop,
                    EnqueueOutcome::Queued => RewardClass::Transition,
                };
                store.finalize_option(packet_id, class);
            }
            HopEvent::Generated { .. } => {}
        }
    }
}
