mod common;

use common::*;
use proptest::prelude::*;
use relroute::topology::*;

fn random_graph(n: usize, p: f64, seed: u64) -> Topology {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rand::Rng::random::<f64>(&mut r) < p {
                edges.push((a, b));
            }
        }
    }
    Topology::from_edges(n, &edges).unwrap()
}

#[test]
fn complete_graph_and_path() {
    let k4 = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    let lc = algebraic_connectivity(&k4, &LinkState::all_up(&k4));
    assert!((lc - 4.0 / 3.0).abs() < 1e-12);
    let p3 = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    assert!((algebraic_connectivity(&p3, &LinkState::all_up(&p3)) - 1.0).abs() < 1e-12);
}

#[test]
fn jacobi_oracle_on_known_spectrum() {
    // normalized Laplacian of the 4-cycle has eigenvalues 0, 1, 1, 2
    let c4 = Topology::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let ev = jacobi_eigenvalues(dense_normalized_laplacian(&up_adjacency(
        &c4,
        &LinkState::all_up(&c4),
    )));
    for (got, want) in ev.iter().zip([0.0, 1.0, 1.0, 2.0]) {
        assert!((got - want).abs() < 1e-10, "{ev:?}");
    }
}

#[test]
fn laplacian_matches_dense_construction() {
    for seed in 0..20 {
        let topo = random_graph(9, 0.35, seed);
        let links = LinkState::all_up(&topo);
        let ours = normalized_laplacian(&topo, &links);
        let oracle = dense_normalized_laplacian(&up_adjacency(&topo, &links));
        for i in 0..9 {
            for j in 0..9 {
                assert!((ours[(i, j)] - oracle[i][j]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn random_geometric_links_match_radius() {
    let mut r = rng(5);
    for radius in [0.2, 0.3, 0.5] {
        let topo = make_random_geometric(40, radius, &mut r).unwrap();
        let pos = topo.positions().unwrap();
        for a in 0..40 {
            for b in a + 1..40 {
                let d = ((pos[a].0 - pos[b].0).powi(2) + (pos[a].1 - pos[b].1).powi(2)).sqrt();
                assert_eq!(topo.edge_index(a, b).is_some(), d <= radius);
            }
        }
    }
}

#[test]
fn lattice_shape() {
    for side in 2..8 {
        let t = make_lattice(side).unwrap();
        assert_eq!(t.n_edges(), 2 * side * (side - 1));
        let links = LinkState::all_up(&t);
        let corner_deg = degree(&t, &links, 0);
        assert_eq!(corner_deg, 2);
        assert!(is_connected(&t, &links));
    }
    assert!(make_lattice(1).is_err());
}

#[test]
fn steady_state_values() {
    assert_eq!(steady_state_prob(1.0, 0.0).unwrap(), 1.0);
    assert!((steady_state_prob(0.8, 0.2).unwrap() - 0.8).abs() < 1e-12);
    assert!((steady_state_prob(0.5, 0.4).unwrap() - 0.6 / 1.1).abs() < 1e-12);
    assert!(steady_state_prob(1.0, 1.0).is_err());
    assert!(steady_state_prob(1.2, 0.0).is_err());
}

#[test]
fn short_run_transition_frequencies() {
    let topo = make_lattice(6).unwrap();
    let mut r = rng(11);
    let mut links = LinkState::init(&topo, 0.7, 0.6, &mut r).unwrap();
    let (mut up_up, mut up_total, mut down_down, mut down_total) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..20_000 {
        let before = links.up_flags().to_vec();
        links.step(&mut r);
        for (b, a) in before.iter().zip(links.up_flags()) {
            if *b {
                up_total += 1;
                up_up += *a as u64;
            } else {
                down_total += 1;
                down_down += !*a as u64;
            }
        }
    }
    assert!((up_up as f64 / up_total as f64 - 0.7).abs() < 0.01);
    assert!((down_down as f64 / down_total as f64 - 0.6).abs() < 0.01);
}

proptest! {
    #[test]
    fn connectivity_zero_iff_disconnected(n in 2usize..14, p in 0.05f64..0.9, seed in 0u64..1000) {
        let topo = random_graph(n, p, seed);
        let links = LinkState::all_up(&topo);
        let adj = up_adjacency(&topo, &links);
        let lc = algebraic_connectivity(&topo, &links);
        prop_assert_eq!(is_connected(&topo, &links), bfs_connected(&adj));
        prop_assert_eq!(lc == 0.0, !bfs_connected(&adj));
        prop_assert!((0.0..=2.0).contains(&lc));
    }

    #[test]
    fn links_never_leave_the_potential_graph(alpha in 0.0f64..1.0, beta in 0.0f64..1.0, seed in 0u64..200) {
        let topo = make_lattice(4).unwrap();
        let mut r = rng(seed);
        let mut links = LinkState::init(&topo, alpha, beta, &mut r).unwrap();
        for _ in 0..20 {
            links.step(&mut r);
            prop_assert_eq!(links.up_flags().len(), topo.n_edges());
            for v in 0..16 {
                for u in neighbors(&topo, &links, v) {
                    prop_assert!(topo.edge_index(u, v).is_some());
                }
            }
        }
    }

    #[test]
    fn random_geometric_is_reproducible(n in 2usize..40, seed in 0u64..500) {
        let a = make_random_geometric(n, 0.3, &mut rng(seed)).unwrap();
        let b = make_random_geometric(n, 0.3, &mut rng(seed)).unwrap();
        prop_assert_eq!(a.edges(), b.edges());
    }
}
