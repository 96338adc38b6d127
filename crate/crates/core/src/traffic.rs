//! Flow and packet generation.
//!
//! Flows arrive as a Poisson process, live for an exponentially distributed
//! number of timesteps and emit Poisson packet arrivals while active.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::topology::DeviceId;

pub type Timestep = u64;
pub type PacketId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficConfig {
    /// Mean new flows per timestep.
    pub lambda_f: f64,
    /// Mean flow duration in timesteps.
    pub lambda_d: f64,
    /// Mean packets per active flow per timestep.
    pub lambda_p: f64,
}

impl TrafficConfig {
    /// Number of flows present at time zero, `round(lambda_f * lambda_d)`.
    pub fn initial_flow_count(&self) -> usize {
        (self.lambda_f * self.lambda_d).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u64,
    pub src: DeviceId,
    pub dst: DeviceId,
    pub start_time: Timestep,
    pub end_time: Timestep,
    pub lambda_p: f64,
}

impl Flow {
    pub fn is_active(&self, t: Timestep) -> bool {
        self.start_time <= t && t <= self.end_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: DeviceId,
    pub dst: DeviceId,
    /// Remaining hops.
    pub ttl: u32,
    pub created_at: Timestep,
    /// Start of the packet's current residence at its device. A stay
    /// decision restarts it.
    pub arrived_at_current: Timestep,
    /// First timestep at which the packet may be transmitted.
    pub eligible_at: Timestep,
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .expect("positive finite rate")
        .sample(rng) as u64
}

/// Owns the active flow list and the flow/packet id counters.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    cfg: TrafficConfig,
    n_devices: usize,
    flows: Vec<Flow>,
    next_flow_id: u64,
    next_packet_id: PacketId,
    duration: Option<Exp<f64>>,
}

impl TrafficSource {
    /// Creates the source with its `round(lambda_f * lambda_d)` initial flows,
    /// all starting at time zero.
    pub fn new<R: Rng + ?Sized>(cfg: TrafficConfig, n_devices: usize, rng: &mut R) -> Self {
        assert!(n_devices >= 2, "traffic needs at least two devices");
        assert!(
            cfg.lambda_f >= 0.0 && cfg.lambda_d >= 0.0 && cfg.lambda_p >= 0.0,
            "traffic rates must be nonnegative"
        );
        let duration = (cfg.lambda_d > 0.0).then(|| Exp::new(1.0 / cfg.lambda_d).unwrap());
        let mut source = TrafficSource {
            cfg,
            n_devices,
            flows: Vec::new(),
            next_flow_id: 0,
            next_packet_id: 0,
            duration,
        };
        for _ in 0..cfg.initial_flow_count() {
            let flow = source.new_flow(0, rng);
            source.flows.push(flow);
        }
        source
    }

    fn new_flow<R: Rng + ?Sized>(&mut self, t: Timestep, rng: &mut R) -> Flow {
        let src = rng.random_range(0..self.n_devices);
        let mut dst = rng.random_range(0..self.n_devices - 1);
        if dst >= src {
            dst += 1;
        }
        let length = self
            .duration
            .map(|d| d.sample(rng).ceil() as Timestep)
            .unwrap_or(0);
        let id = self.next_flow_id;
        self.next_flow_id += 1;
        Flow {
            id,
            src,
            dst,
            start_time: t,
            end_time: t + length,
            lambda_p: self.cfg.lambda_p,
        }
    }

    /// Retires flows that ended before `t` and admits `Poisson(lambda_f)` new
    /// ones starting at `t`.
    pub fn step_flows<R: Rng + ?Sized>(&mut self, t: Timestep, rng: &mut R) {
        self.flows.retain(|f| f.end_time >= t);
        let arrivals = poisson_draw(self.cfg.lambda_f, rng);
        for _ in 0..arrivals {
            let flow = self.new_flow(t, rng);
            self.flows.push(flow);
        }
    }

    /// Draws `Poisson(lambda_p)` packets for every flow active at `t`.
    pub fn generate_packets<R: Rng + ?Sized>(
        &mut self,
        t: Timestep,
        ttl: u32,
        rng: &mut R,
    ) -> Vec<Packet> {
        let mut out = Vec::new();
        for flow in self.flows.iter().filter(|f| f.is_active(t)) {
            for _ in 0..poisson_draw(flow.lambda_p, rng) {
                out.push(Packet {
                    id: self.next_packet_id,
                    src: flow.src,
                    dst: flow.dst,
                    ttl,
                    created_at: t,
                    arrived_at_current: t,
                    eligible_at: t + 1,
                });
                self.next_packet_id += 1;
            }
        }
        out
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.cfg
    }

    /// Packets generated so far.
    pub fn packets_issued(&self) -> u64 {
        self.next_packet_id
    }
}
