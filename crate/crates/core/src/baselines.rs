//! Shortest-path and backpressure routing.

use crate::sim::{Decision, NetworkView, RoutingPolicy, SimRng};
use crate::topology::DeviceId;
use crate::traffic::Packet;

/// Next hop for `packet` at `v`: the currently-up neighbor with the smallest
/// estimated distance to the destination (lowest id on ties), provided it is
/// strictly closer than `v` itself. Otherwise the packet stays.
pub fn sp_next_hop(view: &NetworkView<'_>, v: DeviceId, packet: &Packet) -> Decision {
    let dst = packet.dst;
    let own = view.distances.distance(v, dst);
    let best = view
        .neighbors(v)
        .map(|u| (view.distances.distance(u, dst), u))
        .min();
    match best {
        Some((d, u)) if d < own => Decision::Forward {
            slot: 0,
            next_hop: u,
        },
        _ => Decision::Stay,
    }
}

/// Backpressure choice at `v`: the (destination, up neighbor) pair with the
/// largest positive differential backlog `b_d^v - b_d^u`, ties to the lowest
/// destination then lowest neighbor. Sends the oldest eligible packet for
/// that destination, or nothing when no differential is positive.
pub fn bp_select(view: &NetworkView<'_>, v: DeviceId) -> Decision {
    let queue = &view.queues[v];
    if queue.is_empty() {
        return Decision::Stay;
    }
    let n = view.n_devices();
    // packets that arrived this timestep sit at the tail and are not eligible
    let mut fresh = vec![0u32; n];
    for p in (0..queue.len()).rev().map(|i| queue.get(i).unwrap()) {
        if p.eligible_at <= view.t {
            break;
        }
        fresh[p.dst] += 1;
    }
    let nbrs: Vec<DeviceId> = view.neighbors(v).collect();
    let mut best: Option<(i64, DeviceId, DeviceId)> = None;
    for d in 0..n {
        let here = queue.count_for(d);
        if here <= fresh[d] {
            continue;
        }
        for &u in &nbrs {
            let diff = here as i64 - view.queues[u].count_for(d) as i64;
            if best.is_none_or(|(b, _, _)| diff > b) {
                best = Some((diff, d, u));
            }
        }
    }
    match best {
        Some((diff, d, u)) if diff > 0 => {
            let slot = queue
                .iter()
                .position(|p| p.dst == d && p.eligible_at <= view.t)
                .expect("eligible packet for chosen destination");
            Decision::Forward { slot, next_hop: u }
        }
        _ => Decision::Stay,
    }
}

#[derive(Debug, Clone, Default)]
pub struct ShortestPath;

impl RoutingPolicy for ShortestPath {
    fn name(&self) -> &str {
        "sp"
    }

    fn decide(&mut self, view: &NetworkView<'_>, v: DeviceId, _rng: &mut SimRng) -> Decision {
        let head = view.queues[v].head().expect("decide called on empty queue");
        sp_next_hop(view, v, head)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Backpressure;

impl RoutingPolicy for Backpressure {
    fn name(&self) -> &str {
        "bp"
    }

    fn head_of_line_only(&self) -> bool {
        false
    }

    fn decide(&mut self, view: &NetworkView<'_>, v: DeviceId, _rng: &mut SimRng) -> Decision {
        bp_select(view, v)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::sim::{SimParams, Simulation};
    use crate::topology::{make_lattice, LinkState, Topology};
    use crate::traffic::TrafficConfig;

    fn sim_on(topo: Topology, links: Option<LinkState>, capacity: usize) -> Simulation {
        let topo = Arc::new(topo);
        let links = links.unwrap_or_else(|| LinkState::all_up(&topo));
        Simulation::with_links(
            topo,
            links,
            TrafficConfig {
                lambda_f: 0.0,
                lambda_d: 0.0,
                lambda_p: 0.0,
            },
            SimParams {
                ttl: 200,
                queue_capacity: capacity,
            },
            1,
        )
        .unwrap()
    }

    fn pkt(id: u64, dst: DeviceId) -> Packet {
        Packet {
            id,
            src: 0,
            dst,
            ttl: 200,
            created_at: 0,
            arrived_at_current: 0,
            eligible_at: 0,
        }
    }

    #[test]
    fn sp_one_hop_from_destination() {
        let sim = sim_on(make_lattice(3).unwrap(), None, 50);
        let d = sp_next_hop(&sim.view(), 4, &pkt(0, 5));
        assert_eq!(d, Decision::Forward { slot: 0, next_hop: 5 });
    }

    #[test]
    fn sp_stays_when_links_down() {
        let topo = make_lattice(3).unwrap();
        let mut sim = sim_on(topo.clone(), None, 50);
        sim.set_links(LinkState::from_parts(vec![false; topo.n_edges()], 0.5, 0.5).unwrap());
        assert_eq!(sp_next_hop(&sim.view(), 4, &pkt(0, 8)), Decision::Stay);
    }

    #[test]
    fn sp_tie_goes_to_lowest_index() {
        let sim = sim_on(make_lattice(3).unwrap(), None, 50);
        // from 0 to 8: neighbors 1 and 3 are both at distance 3
        assert_eq!(
            sp_next_hop(&sim.view(), 0, &pkt(0, 8)),
            Decision::Forward { slot: 0, next_hop: 1 }
        );
    }

    #[test]
    fn bp_positive_differential() {
        // path 0 - 1 - 2, destination 2
        let topo = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut sim = sim_on(topo, None, 100);
        for i in 0..5 {
            sim.inject(pkt(i, 2), 0);
        }
        for i in 5..7 {
            sim.inject(pkt(i, 2), 1);
        }
        let mut view = sim.view();
        view.t = 1;
        assert_eq!(bp_select(&view, 0), Decision::Forward { slot: 0, next_hop: 1 });
    }

    #[test]
    fn bp_stays_without_gradient() {
        let topo = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut sim = sim_on(topo, None, 100);
        sim.inject(pkt(0, 2), 0);
        sim.inject(pkt(1, 2), 1);
        sim.inject(pkt(2, 2), 1);
        let mut view = sim.view();
        view.t = 1;
        assert_eq!(bp_select(&view, 0), Decision::Stay);
        assert_eq!(bp_select(&view, 2), Decision::Stay);
    }

    #[test]
    fn bp_ignores_fresh_arrivals() {
        let topo = Topology::from_edges(2, &[(0, 1)]).unwrap();
        let mut sim = sim_on(topo, None, 100);
        sim.inject(pkt(0, 1), 0);
        // injected at t = 0, eligible at t = 1
        assert_eq!(bp_select(&sim.view(), 0), Decision::Stay);
    }
}
