//! The discrete-time simulation engine.
//!
//! Each timestep runs three phases in a fixed order: the link process
//! advances, traffic is injected at the sources, then every device (visited
//! in a fresh random order) gets one transmission opportunity decided by the
//! routing policy. A packet received or generated at `t` is first eligible
//! for transmission at `t + 1`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distance::DistanceTable;
use crate::error::{Error, Result};
use crate::topology::{algebraic_connectivity, DeviceId, LinkState, Topology};
use crate::traffic::{Packet, PacketId, Timestep, TrafficConfig, TrafficSource};

pub type SimRng = ChaCha8Rng;

const LINK_STREAM: u64 = 1;
const TRAFFIC_STREAM: u64 = 2;
const MAC_STREAM: u64 = 3;

/// Independent generator for one of the simulation's random processes.
/// Links, traffic and medium access draw from separate streams so that two
/// policies run with the same seed see the same link and traffic realization.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Bounded FIFO packet buffer with per-destination counts.
#[derive(Debug, Clone)]
pub struct DeviceQueue {
    buffer: VecDeque<Packet>,
    capacity: usize,
    per_dest: Vec<u32>,
}

impl DeviceQueue {
    pub fn new(capacity: usize, n_devices: usize) -> Self {
        DeviceQueue {
            buffer: VecDeque::new(),
            capacity,
            per_dest: vec![0; n_devices],
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of queued packets destined to `d`.
    pub fn count_for(&self, d: DeviceId) -> u32 {
        self.per_dest[d]
    }

    pub fn head(&self) -> Option<&Packet> {
        self.buffer.front()
    }

    pub fn get(&self, slot: usize) -> Option<&Packet> {
        self.buffer.get(slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.buffer.iter()
    }

    fn push(&mut self, packet: Packet) {
        debug_assert!(!self.is_full());
        self.per_dest[packet.dst] += 1;
        self.buffer.push_back(packet);
    }

    fn take(&mut self, slot: usize) -> Packet {
        let packet = self.buffer.remove(slot).expect("slot in range");
        self.per_dest[packet.dst] -= 1;
        packet
    }

    /// Recounts the buffer and compares against the cached per-destination
    /// counts.
    pub fn counts_consistent(&self) -> bool {
        let mut recount = vec![0u32; self.per_dest.len()];
        for p in &self.buffer {
            recount[p.dst] += 1;
        }
        recount == self.per_dest && self.buffer.len() <= self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropCause {
    QueueFull,
    TtlExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Delivered,
    Dropped(DropCause),
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Keep the packet (or, for backpressure, send nothing).
    Stay,
    /// Transmit the packet at `slot` of the deciding device's queue.
    Forward { slot: usize, next_hop: DeviceId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum HopEvent {
    Generated {
        packet_id: PacketId,
        device: DeviceId,
        t: Timestep,
        outcome: EnqueueOutcome,
    },
    Stayed {
        packet_id: PacketId,
        device: DeviceId,
        t: Timestep,
    },
    Forwarded {
        packet_id: PacketId,
        from: DeviceId,
        to: DeviceId,
        t: Timestep,
        outcome: EnqueueOutcome,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimParams {
    /// Initial packet time-to-live `L`.
    pub ttl: u32,
    /// Queue capacity `B`.
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub generated: u64,
    pub delivered: u64,
    /// Sum of `delivery time - creation time` over delivered packets.
    pub total_delay: u64,
    pub dropped_full: u64,
    pub dropped_ttl: u64,
}

impl Counters {
    pub fn dropped(&self) -> u64 {
        self.dropped_full + self.dropped_ttl
    }
}

/// Read-only snapshot handed to routing policies.
pub struct NetworkView<'a> {
    pub topo: &'a Topology,
    pub links: &'a LinkState,
    pub queues: &'a [DeviceQueue],
    pub distances: &'a DistanceTable,
    pub params: SimParams,
    pub t: Timestep,
}

impl NetworkView<'_> {
    pub fn neighbors(&self, v: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        crate::topology::neighbors(self.topo, self.links, v)
    }

    pub fn degree(&self, v: DeviceId) -> usize {
        crate::topology::degree(self.topo, self.links, v)
    }

    pub fn n_devices(&self) -> usize {
        self.topo.n_devices()
    }
}

pub trait RoutingPolicy {
    fn name(&self) -> &str;

    /// Whether only the head-of-queue packet may be transmitted. When true
    /// the engine only asks for a decision if the head packet is eligible.
    fn head_of_line_only(&self) -> bool {
        true
    }

    fn decide(&mut self, view: &NetworkView<'_>, v: DeviceId, rng: &mut SimRng) -> Decision;

    /// Called for every generation, stay and transmission as it happens.
    fn observe(&mut self, _event: &HopEvent) {}
}

impl<P: RoutingPolicy + ?Sized> RoutingPolicy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn head_of_line_only(&self) -> bool {
        (**self).head_of_line_only()
    }

    fn decide(&mut self, view: &NetworkView<'_>, v: DeviceId, rng: &mut SimRng) -> Decision {
        (**self).decide(view, v, rng)
    }

    fn observe(&mut self, event: &HopEvent) {
        (**self).observe(event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    pub pct_delivered: f64,
    pub delay_per_packet: f64,
    pub avg_queue_len: f64,
    pub alg_connectivity: f64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped_full: u64,
    pub dropped_ttl: u64,
    /// Packets sitting in queues at the end of the round.
    pub in_queue: u64,
}

impl MetricsRecord {
    pub fn conserves(&self) -> bool {
        self.generated == self.delivered + self.dropped_full + self.dropped_ttl + self.in_queue
    }
}

pub const METRICS_HEADER: &str = "round,pct_delivered,delay_per_packet,avg_queue_len,alg_connectivity,generated,delivered,dropped_full,dropped_ttl";

/// Renders records in the per-round metrics CSV format. `provenance` lines
/// are emitted first as `#` comments.
pub fn metrics_csv(provenance: &str, records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for line in provenance.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.round,
            r.pct_delivered,
            r.delay_per_packet,
            r.avg_queue_len,
            r.alg_connectivity,
            r.generated,
            r.delivered,
            r.dropped_full,
            r.dropped_ttl
        );
    }
    out
}

/// Parses a metrics CSV written by [`metrics_csv`]. `in_queue` is
/// reconstructed from the conservation identity.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut records = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != METRICS_HEADER {
                return Err(Error::Config {
                    line: i + 1,
                    msg: "unexpected metrics header".into(),
                });
            }
            header_seen = true;
            continue;
        }
        let bad = |msg: &str| Error::Config {
            line: i + 1,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(bad("expected 9 columns"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
        let u = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        let generated = u(cols[5])?;
        let delivered = u(cols[6])?;
        let dropped_full = u(cols[7])?;
        let dropped_ttl = u(cols[8])?;
        records.push(MetricsRecord {
            round: u(cols[0])? as usize,
            pct_delivered: f(cols[1])?,
            delay_per_packet: f(cols[2])?,
            avg_queue_len: f(cols[3])?,
            alg_connectivity: f(cols[4])?,
            generated,
            delivered,
            dropped_full,
            dropped_ttl,
            in_queue: generated.saturating_sub(delivered + dropped_full + dropped_ttl),
        });
    }
    Ok(records)
}

pub fn write_metrics_csv(
    path: &Path,
    provenance: &str,
    records: &[MetricsRecord],
) -> Result<()> {
    crate::util::write_atomic(path, metrics_csv(provenance, records).as_bytes())
}

/// One simulated network: topology, link process, queues, traffic and
/// counters, advanced by [`Simulation::step`].
#[derive(Debug, Clone)]
pub struct Simulation {
    topo: Arc<Topology>,
    links: LinkState,
    distances: DistanceTable,
    queues: Vec<DeviceQueue>,
    traffic: TrafficSource,
    params: SimParams,
    clock: Timestep,
    counters: Counters,
    link_rng: SimRng,
    traffic_rng: SimRng,
    mac_rng: SimRng,
    order: Vec<DeviceId>,
}

impl Simulation {
    /// Starts a simulation at `t = 0` with links drawn from the steady state
    /// of `(alpha, beta)` and the initial flow population.
    pub fn new(
        topo: Arc<Topology>,
        alpha: f64,
        beta: f64,
        traffic: TrafficConfig,
        params: SimParams,
        seed: u64,
    ) -> Result<Self> {
        let mut link_rng = stream_rng(seed, LINK_STREAM);
        let links = LinkState::init(&topo, alpha, beta, &mut link_rng)?;
        Self::assemble(topo, links, link_rng, traffic, params, seed)
    }

    /// Starts from an explicit link state.
    pub fn with_links(
        topo: Arc<Topology>,
        links: LinkState,
        traffic: TrafficConfig,
        params: SimParams,
        seed: u64,
    ) -> Result<Self> {
        let link_rng = stream_rng(seed, LINK_STREAM);
        Self::assemble(topo, links, link_rng, traffic, params, seed)
    }

    fn assemble(
        topo: Arc<Topology>,
        links: LinkState,
        link_rng: SimRng,
        traffic: TrafficConfig,
        params: SimParams,
        seed: u64,
    ) -> Result<Self> {
        let n = topo.n_devices();
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two devices".into()));
        }
        if links.up_flags().len() != topo.n_edges() {
            return Err(Error::InvalidParameter(
                "link state does not match topology".into(),
            ));
        }
        if params.queue_capacity == 0 || params.ttl == 0 {
            return Err(Error::InvalidParameter(
                "queue capacity and ttl must be positive".into(),
            ));
        }
        let mut traffic_rng = stream_rng(seed, TRAFFIC_STREAM);
        let traffic = TrafficSource::new(traffic, n, &mut traffic_rng);
        let mut distances = DistanceTable::new(&topo);
        distances.observe_and_relax(&topo, &links);
        Ok(Simulation {
            queues: (0..n).map(|_| DeviceQueue::new(params.queue_capacity, n)).collect(),
            order: (0..n).collect(),
            topo,
            links,
            distances,
            traffic,
            params,
            clock: 0,
            counters: Counters::default(),
            link_rng,
            traffic_rng,
            mac_rng: stream_rng(seed, MAC_STREAM),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn links(&self) -> &LinkState {
        &self.links
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.distances
    }

    pub fn queues(&self) -> &[DeviceQueue] {
        &self.queues
    }

    pub fn traffic(&self) -> &TrafficSource {
        &self.traffic
    }

    pub fn params(&self) -> SimParams {
        self.params
    }

    pub fn clock(&self) -> Timestep {
        self.clock
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn in_queue(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn avg_queue_len(&self) -> f64 {
        self.in_queue() as f64 / self.queues.len() as f64
    }

    pub fn view(&self) -> NetworkView<'_> {
        NetworkView {
            topo: &self.topo,
            links: &self.links,
            queues: &self.queues,
            distances: &self.distances,
            params: self.params,
            t: self.clock,
        }
    }

    /// Places a packet at `v` as if it had just been generated there. The
    /// packet counts toward the generated total.
    pub fn inject(&mut self, mut packet: Packet, v: DeviceId) -> EnqueueOutcome {
        packet.created_at = self.clock;
        packet.eligible_at = self.clock + 1;
        self.counters.generated += 1;
        enqueue(
            &mut self.queues,
            &mut self.counters,
            packet,
            v,
            self.clock,
        )
    }

    /// Delivers, drops or queues `packet` arriving at `v` at the current
    /// clock.
    pub fn enqueue(&mut self, packet: Packet, v: DeviceId) -> EnqueueOutcome {
        enqueue(
            &mut self.queues,
            &mut self.counters,
            packet,
            v,
            self.clock,
        )
    }

    pub fn set_links(&mut self, links: LinkState) {
        assert_eq!(links.up_flags().len(), self.topo.n_edges());
        self.links = links;
        self.distances.observe_and_relax(&self.topo, &self.links);
    }

    /// Advances one timestep and returns the events it produced.
    pub fn step<P: RoutingPolicy + ?Sized>(&mut self, policy: &mut P) -> Vec<HopEvent> {
        let t = self.clock;
        let mut events = Vec::new();

        if t > 0 {
            self.links.step(&mut self.link_rng);
            self.distances.observe_and_relax(&self.topo, &self.links);
            self.traffic.step_flows(t, &mut self.traffic_rng);
        }

        for packet in self
            .traffic
            .generate_packets(t, self.params.ttl, &mut self.traffic_rng)
        {
            let (id, src) = (packet.id, packet.src);
            self.counters.generated += 1;
            let outcome = enqueue(&mut self.queues, &mut self.counters, packet, src, t);
            let event = HopEvent::Generated {
                packet_id: id,
                device: src,
                t,
                outcome,
            };
            policy.observe(&event);
            events.push(event);
        }

        self.order.shuffle(&mut self.mac_rng);
        let hol = policy.head_of_line_only();
        for i in 0..self.order.len() {
            let v = self.order[i];
            match self.queues[v].head() {
                None => continue,
                Some(head) if hol && head.eligible_at > t => continue,
                Some(_) => {}
            }
            let view = NetworkView {
                topo: &self.topo,
                links: &self.links,
                queues: &self.queues,
                distances: &self.distances,
                params: self.params,
                t,
            };
            let decision = policy.decide(&view, v, &mut self.mac_rng);
            let event = match decision {
                Decision::Stay => {
                    if !hol {
                        continue;
                    }
                    let head = self.queues[v].head().expect("nonempty");
                    HopEvent::Stayed {
                        packet_id: head.id,
                        device: v,
                        t,
                    }
                }
                Decision::Forward { slot, next_hop } => {
                    assert!(
                        !hol || slot == 0,
                        "{} may only transmit the head of the queue",
                        policy.name()
                    );
                    let edge = self
                        .topo
                        .edge_index(v, next_hop)
                        .filter(|&e| self.links.is_up(e));
                    assert!(
                        edge.is_some(),
                        "{} forwarded over a missing or down link {v}->{next_hop}",
                        policy.name()
                    );
                    let mut packet = self.queues[v].take(slot);
                    assert!(packet.eligible_at <= t, "packet not yet eligible");
                    packet.ttl -= 1;
                    let packet_id = packet.id;
                    let outcome =
                        enqueue(&mut self.queues, &mut self.counters, packet, next_hop, t);
                    HopEvent::Forwarded {
                        packet_id,
                        from: v,
                        to: next_hop,
                        t,
                        outcome,
                    }
                }
            };
            policy.observe(&event);
            events.push(event);
        }

        self.clock += 1;
        events
    }

    /// Snapshot of the cumulative metrics as of the last completed step.
    pub fn snapshot(&self, round: usize) -> MetricsRecord {
        let c = self.counters;
        MetricsRecord {
            round,
            pct_delivered: if c.generated == 0 {
                1.0
            } else {
                c.delivered as f64 / c.generated as f64
            },
            delay_per_packet: if c.delivered == 0 {
                0.0
            } else {
                c.total_delay as f64 / c.delivered as f64
            },
            avg_queue_len: self.avg_queue_len(),
            alg_connectivity: algebraic_connectivity(&self.topo, &self.links),
            generated: c.generated,
            delivered: c.delivered,
            dropped_full: c.dropped_full,
            dropped_ttl: c.dropped_ttl,
            in_queue: self.in_queue(),
        }
    }

    /// Runs `t_round` steps and returns the end-of-round record.
    pub fn run_round<P: RoutingPolicy + ?Sized>(
        &mut self,
        policy: &mut P,
        round: usize,
        t_round: u64,
    ) -> MetricsRecord {
        for _ in 0..t_round {
            self.step(policy);
        }
        let record = self.snapshot(round);
        assert!(
            record.conserves(),
            "packet conservation violated at round {round}: {record:?}"
        );
        record
    }

    /// Runs `total` steps in rounds of `t_round`, one record per round.
    pub fn run<P: RoutingPolicy + ?Sized>(
        &mut self,
        policy: &mut P,
        total: u64,
        t_round: u64,
    ) -> Result<Vec<MetricsRecord>> {
        if t_round == 0 || total % t_round != 0 {
            return Err(Error::InvalidParameter(format!(
                "total timesteps {total} must be a positive multiple of the round length {t_round}"
            )));
        }
        Ok((0..(total / t_round) as usize)
            .map(|r| self.run_round(policy, r, t_round))
            .collect())
    }
}

fn enqueue(
    queues: &mut [DeviceQueue],
    counters: &mut Counters,
    mut packet: Packet,
    v: DeviceId,
    t: Timestep,
) -> EnqueueOutcome {
    if v == packet.dst {
        counters.delivered += 1;
        counters.total_delay += t - packet.created_at;
        EnqueueOutcome::Delivered
    } else if queues[v].is_full() {
        counters.dropped_full += 1;
        EnqueueOutcome::Dropped(DropCause::QueueFull)
    } else if packet.ttl == 0 {
        counters.dropped_ttl += 1;
        EnqueueOutcome::Dropped(DropCause::TtlExpired)
    } else {
        packet.arrived_at_current = t;
        packet.eligible_at = t + 1;
        queues[v].push(packet);
        EnqueueOutcome::Queued
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::make_lattice;

    fn quiet() -> TrafficConfig {
        TrafficConfig {
            lambda_f: 0.0,
            lambda_d: 0.0,
            lambda_p: 0.0,
        }
    }

    fn packet(id: PacketId, src: DeviceId, dst: DeviceId, ttl: u32) -> Packet {
        Packet {
            id,
            src,
            dst,
            ttl,
            created_at: 0,
            arrived_at_current: 0,
            eligible_at: 1,
        }
    }

    fn lattice_sim(k: usize, capacity: usize) -> Simulation {
        let topo = Arc::new(make_lattice(k).unwrap());
        let links = LinkState::all_up(&topo);
        Simulation::with_links(
            topo,
            links,
            quiet(),
            SimParams {
                ttl: 200,
                queue_capacity: capacity,
            },
            7,
        )
        .unwrap()
    }

    struct Idle;
    impl RoutingPolicy for Idle {
        fn name(&self) -> &str {
            "idle"
        }
        fn decide(&mut self, _: &NetworkView<'_>, _: DeviceId, _: &mut SimRng) -> Decision {
            Decision::Stay
        }
    }

    #[test]
    fn delivery_beats_full_queue() {
        let mut sim = lattice_sim(3, 1);
        assert_eq!(sim.inject(packet(0, 0, 2, 200), 1), EnqueueOutcome::Queued);
        assert!(sim.queues()[1].is_full());
        assert_eq!(sim.enqueue(packet(1, 0, 1, 5), 1), EnqueueOutcome::Delivered);
        assert_eq!(
            sim.enqueue(packet(2, 0, 2, 5), 1),
            EnqueueOutcome::Dropped(DropCause::QueueFull)
        );
    }

    #[test]
    fn full_queue_at_capacity_fifty() {
        let mut sim = lattice_sim(3, 50);
        for i in 0..50 {
            assert_eq!(sim.inject(packet(i, 0, 8, 200), 0), EnqueueOutcome::Queued);
        }
        assert_eq!(
            sim.inject(packet(50, 0, 8, 200), 0),
            EnqueueOutcome::Dropped(DropCause::QueueFull)
        );
        assert_eq!(sim.queues()[0].count_for(8), 50);
        assert!(sim.queues()[0].counts_consistent());
    }

    #[test]
    fn zero_ttl_is_dropped() {
        let mut sim = lattice_sim(3, 50);
        assert_eq!(
            sim.enqueue(packet(0, 0, 8, 0), 4),
            EnqueueOutcome::Dropped(DropCause::TtlExpired)
        );
        assert_eq!(sim.counters().dropped_ttl, 1);
    }

    #[test]
    fn empty_network_only_advances_clock() {
        let mut sim = lattice_sim(3, 50);
        let events = sim.step(&mut Idle);
        assert!(events.is_empty());
        assert_eq!(sim.clock(), 1);
        assert_eq!(sim.counters(), Counters::default());
    }

    #[test]
    fn zero_traffic_reports_full_delivery() {
        let mut sim = lattice_sim(3, 50);
        let records = sim.run(&mut Idle, 20, 10).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].pct_delivered, 1.0);
        assert_eq!(records[1].delay_per_packet, 0.0);
        assert!(sim.run(&mut Idle, 15, 10).is_err());
    }

    #[test]
    fn stay_keeps_arrival_time() {
        let mut sim = lattice_sim(3, 50);
        sim.inject(packet(0, 0, 8, 200), 0);
        sim.step(&mut Idle);
        sim.step(&mut Idle);
        assert_eq!(sim.queues()[0].head().unwrap().arrived_at_current, 0);
    }

    #[test]
    fn csv_round_trip() {
        let rec = MetricsRecord {
            round: 3,
            pct_delivered: 0.75,
            delay_per_packet: 4.5,
            avg_queue_len: 0.125,
            alg_connectivity: 0.0,
            generated: 8,
            delivered: 6,
            dropped_full: 1,
            dropped_ttl: 0,
            in_queue: 1,
        };
        let text = metrics_csv("scenario=x seed=1", &[rec.clone()]);
        assert!(text.starts_with("# scenario=x seed=1\n"));
        assert_eq!(parse_metrics_csv(&text).unwrap(), vec![rec]);
    }
}
