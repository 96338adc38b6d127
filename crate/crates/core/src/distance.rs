//! Distance-vector hop counts over every link ever observed up.
//!
//! Devices are stationary, so a link seen once is kept in the distance
//! computation even while it is down. Only next-hop selection looks at the
//! current link state.

use crate::topology::{DeviceId, LinkState, Topology};

#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    // row-major: dist[v * n + d]
    dist: Vec<u32>,
    seen_edges: Vec<bool>,
    seen_adjacency: Vec<Vec<DeviceId>>,
}

impl DistanceTable {
    /// Every device knows only itself; all other distances are `N`.
    pub fn new(topo: &Topology) -> Self {
        let n = topo.n_devices();
        let mut dist = vec![n as u32; n * n];
        for v in 0..n {
            dist[v * n + v] = 0;
        }
        DistanceTable {
            n,
            dist,
            seen_edges: vec![false; topo.n_edges()],
            seen_adjacency: vec![Vec::new(); n],
        }
    }

    /// Records currently-up links and, if any is new, relaxes to a fixpoint.
    /// Returns whether any link was seen for the first time.
    pub fn observe_and_relax(&mut self, topo: &Topology, links: &LinkState) -> bool {
        let mut fresh = false;
        for (e, &(a, b)) in topo.edges().iter().enumerate() {
            if links.is_up(e) && !self.seen_edges[e] {
                self.seen_edges[e] = true;
                self.seen_adjacency[a].push(b);
                self.seen_adjacency[b].push(a);
                fresh = true;
            }
        }
        if fresh {
            self.relax();
        }
        fresh
    }

    fn relax(&mut self) {
        let n = self.n;
        loop {
            let mut changed = false;
            for v in 0..n {
                for &u in &self.seen_adjacency[v] {
                    for d in 0..n {
                        let via = (self.dist[u * n + d] + 1).min(n as u32);
                        if via < self.dist[v * n + d] {
                            self.dist[v * n + d] = via;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Estimated hop count from `v` to `d`; `N` when unknown.
    pub fn distance(&self, v: DeviceId, d: DeviceId) -> u32 {
        self.dist[v * self.n + d]
    }

    /// The unknown/unreachable sentinel, equal to the device count.
    pub fn unknown(&self) -> u32 {
        self.n as u32
    }

    pub fn n_devices(&self) -> usize {
        self.n
    }

    pub fn seen_edges(&self) -> &[bool] {
        &self.seen_edges
    }

    pub fn seen_neighbors(&self, v: DeviceId) -> &[DeviceId] {
        &self.seen_adjacency[v]
    }
}
