//! Empirical up-fraction of the two-state link model against its steady
//! state, for the static, dynamic and delay-tolerant settings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relroute::topology::{make_lattice, LinkState};

fn main() -> relroute::Result<()> {
    let topo = make_lattice(5)?;
    let steps = 100_000;
    for (alpha, beta) in [(1.0, 0.0), (0.8, 0.2), (0.5, 0.4)] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut links = LinkState::init(&topo, alpha, beta, &mut rng)?;
        let mut up = 0usize;
        for _ in 0..steps {
            links.step(&mut rng);
            up += links.up_count();
        }
        let frac = up as f64 / (steps * topo.n_edges()) as f64;
        println!(
            "alpha={alpha:.1} beta={beta:.1}  pi={:.4}  observed={frac:.4}",
            links.pi()
        );
    }
    Ok(())
}
