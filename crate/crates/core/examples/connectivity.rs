//! Algebraic connectivity of lattices and random geometric graphs, with all
//! links up and under the dynamic link models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relroute::topology::{
    algebraic_connectivity, is_connected, make_lattice, make_random_geometric, LinkState,
};

fn main() -> relroute::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("topology              N  edges  lambda2(all up)  lambda2(0.8/0.2)  lambda2(0.5/0.4)");
    for side in [3, 5, 8] {
        let topo = make_lattice(side)?;
        let full = algebraic_connectivity(&topo, &LinkState::all_up(&topo));
        let dynamic = algebraic_connectivity(&topo, &LinkState::init(&topo, 0.8, 0.2, &mut rng)?);
        let dtn = algebraic_connectivity(&topo, &LinkState::init(&topo, 0.5, 0.4, &mut rng)?);
        println!(
            "lattice {side}x{side:<10} {:>3}  {:>5}  {full:>15.4}  {dynamic:>16.4}  {dtn:>16.4}",
            topo.n_devices(),
            topo.n_edges()
        );
    }
    for (n, radius) in [(25, 0.3), (25, 0.5), (64, 0.3)] {
        let topo = make_random_geometric(n, radius, &mut rng)?;
        let links = LinkState::all_up(&topo);
        println!(
            "random r={radius:<12} {n:>3}  {:>5}  {:>15.4}  connected: {}",
            topo.n_edges(),
            algebraic_connectivity(&topo, &links),
            is_connected(&topo, &links)
        );
    }
    Ok(())
}
