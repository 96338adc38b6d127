mod common;

use common::*;
use proptest::prelude::*;
use relroute::distance::DistanceTable;
use relroute::topology::*;

fn assert_matches_bfs(topo: &Topology, links: &LinkState) {
    let mut table = DistanceTable::new(topo);
    table.observe_and_relax(topo, links);
    let oracle = bfs_all_pairs(&up_adjacency(topo, links), table.unknown());
    for v in 0..topo.n_devices() {
        for d in 0..topo.n_devices() {
            assert_eq!(table.distance(v, d), oracle[v][d], "v={v} d={d}");
        }
    }
}

#[test]
fn lattice_distances_are_manhattan() {
    let topo = make_lattice(5).unwrap();
    let mut table = DistanceTable::new(&topo);
    table.observe_and_relax(&topo, &LinkState::all_up(&topo));
    for v in 0..25usize {
        for d in 0..25 {
            let manhattan = (v / 5).abs_diff(d / 5) + (v % 5).abs_diff(d % 5);
            assert_eq!(table.distance(v, d), manhattan as u32);
        }
    }
}

#[test]
fn unseen_links_leave_distances_unknown() {
    let topo = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
    let mut table = DistanceTable::new(&topo);
    table.observe_and_relax(&topo, &LinkState::all_up(&topo));
    assert_eq!(table.unknown(), 4);
    assert_eq!(table.distance(0, 3), 4);
    assert_eq!(table.distance(0, 1), 1);
}

#[test]
fn links_once_seen_are_remembered() {
    let topo = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let mut table = DistanceTable::new(&topo);
    let mut links = LinkState::from_parts(vec![true, false], 0.5, 0.5).unwrap();
    assert!(table.observe_and_relax(&topo, &links));
    assert_eq!(table.distance(0, 2), 3);
    links.set(0, false);
    links.set(1, true);
    assert!(table.observe_and_relax(&topo, &links));
    assert_eq!(table.distance(0, 2), 2);
    links.set(1, false);
    assert!(!table.observe_and_relax(&topo, &links));
    assert_eq!(table.distance(0, 2), 2);
}

proptest! {
    #[test]
    fn random_geometric_matches_bfs(n in 2usize..40, radius in 0.15f64..0.6, seed in 0u64..1000) {
        let topo = make_random_geometric(n, radius, &mut rng(seed)).unwrap();
        assert_matches_bfs(&topo, &LinkState::all_up(&topo));
    }

    #[test]
    fn partial_links_match_bfs(side in 2usize..7, seed in 0u64..1000) {
        let topo = make_lattice(side).unwrap();
        let links = LinkState::init(&topo, 0.5, 0.5, &mut rng(seed)).unwrap();
        assert_matches_bfs(&topo, &links);
    }

    #[test]
    fn triangle_inequality_and_symmetry(n in 3usize..30, seed in 0u64..1000) {
        let topo = make_random_geometric(n, 0.35, &mut rng(seed)).unwrap();
        let mut table = DistanceTable::new(&topo);
        table.observe_and_relax(&topo, &LinkState::all_up(&topo));
        let unknown = table.unknown();
        for a in 0..n {
            prop_assert_eq!(table.distance(a, a), 0);
            for b in 0..n {
                prop_assert_eq!(table.distance(a, b), table.distance(b, a));
                for c in 0..n {
                    let (ab, bc) = (table.distance(a, b), table.distance(b, c));
                    if ab < unknown && bc < unknown {
                        prop_assert!(table.distance(a, c) <= ab + bc);
                    }
                }
            }
        }
    }

    #[test]
    fn distances_never_increase_over_time(seed in 0u64..300) {
        let topo = make_lattice(4).unwrap();
        let mut r = rng(seed);
        let mut links = LinkState::init(&topo, 0.5, 0.4, &mut r).unwrap();
        let mut table = DistanceTable::new(&topo);
        table.observe_and_relax(&topo, &links);
        for _ in 0..30 {
            let before: Vec<u32> = (0..16).flat_map(|v| (0..16).map(move |d| (v, d))).map(|(v, d)| table.distance(v, d)).collect();
            links.step(&mut r);
            table.observe_and_relax(&topo, &links);
            let after: Vec<u32> = (0..16).flat_map(|v| (0..16).map(move |d| (v, d))).map(|(v, d)| table.distance(v, d)).collect();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(a <= b);
            }
        }
    }
}
