//! Relational features of one routing decision on a small lattice with a
//! few packets queued.

use std::sync::Arc;

use relroute::features::{raw_state, DecisionFeatures};
use relroute::sim::{SimParams, Simulation};
use relroute::topology::{make_lattice, LinkState};
use relroute::traffic::{Packet, TrafficConfig};

fn main() -> relroute::Result<()> {
    let topo = make_lattice(3)?;
    let links = LinkState::all_up(&topo);
    let quiet = TrafficConfig {
        lambda_f: 0.0,
        lambda_d: 0.0,
        lambda_p: 0.0,
    };
    let params = SimParams {
        ttl: 200,
        queue_capacity: 50,
    };
    let mut sim = Simulation::with_links(Arc::new(topo), links, quiet, params, 1)?;
    let packet = |id, dst| Packet {
        id,
        src: 4,
        dst,
        ttl: 200,
        created_at: 0,
        arrived_at_current: 0,
        eligible_at: 0,
    };
    sim.inject(packet(0, 8), 4);
    sim.inject(packet(1, 8), 5);
    sim.inject(packet(2, 0), 5);
    sim.inject(packet(3, 8), 7);

    let view = sim.view();
    let head = view.queues[4].head().expect("queued").clone();
    println!("raw state: {:?}", raw_state(&view, 4, &head, 0));
    let f = DecisionFeatures::compute(&view, 4, &head, 0);
    println!("state: {:.3?}", f.state);
    for (u, a) in f.candidates.iter().zip(&f.actions) {
        let label = if *u == 4 { "stay" } else { "forward" };
        println!("{label:>7} to {u}: {a:.3?}");
    }
    Ok(())
}
