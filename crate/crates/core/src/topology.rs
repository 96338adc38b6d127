//! Network topologies and the two-state Markov link process.
//!
//! A [`Topology`] holds the static set of potential links; which of them are
//! currently usable is tracked separately by a [`LinkState`] that the
//! simulation loop owns and advances once per timestep.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

/// Device index, `0..n_devices`.
pub type DeviceId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyKind {
    /// `side * side` grid with Manhattan-adjacent links.
    Lattice { side: usize },
    /// Uniform placement in the unit square, linked within `radius`.
    RandomGeometric { radius: f64 },
}

#[derive(Debug, Clone)]
pub struct Topology {
    kind: TopologyKind,
    n_devices: usize,
    positions: Option<Vec<(f64, f64)>>,
    edges: Vec<(DeviceId, DeviceId)>,
    // per device: (neighbor, edge index), sorted by neighbor
    adjacency: Vec<Vec<(DeviceId, usize)>>,
}

impl Topology {
    /// Builds a topology from an explicit undirected edge list. Duplicate
    /// edges are merged; self-loops are rejected.
    pub fn from_edges(n_devices: usize, edges: &[(DeviceId, DeviceId)]) -> Result<Self> {
        Self::build(
            TopologyKind::Lattice { side: 0 },
            n_devices,
            None,
            edges.iter().copied(),
        )
    }

    fn build(
        kind: TopologyKind,
        n_devices: usize,
        positions: Option<Vec<(f64, f64)>>,
        edges: impl IntoIterator<Item = (DeviceId, DeviceId)>,
    ) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at device {a}")));
            }
            if a >= n_devices || b >= n_devices {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for {n_devices} devices"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut adjacency = vec![Vec::new(); n_devices];
        for (idx, &(a, b)) in normalized.iter().enumerate() {
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Topology {
            kind,
            n_devices,
            positions,
            edges: normalized,
            adjacency,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn positions(&self) -> Option<&[(f64, f64)]> {
        self.positions.as_deref()
    }

    /// Potential links as `(low, high)` pairs, sorted.
    pub fn edges(&self) -> &[(DeviceId, DeviceId)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Potential neighbors of `v` with the index of the connecting edge.
    pub fn potential_neighbors(&self, v: DeviceId) -> &[(DeviceId, usize)] {
        &self.adjacency[v]
    }

    /// Edge index of `(a, b)` if the link exists.
    pub fn edge_index(&self, a: DeviceId, b: DeviceId) -> Option<usize> {
        self.adjacency[a]
            .binary_search_by_key(&b, |&(u, _)| u)
            .ok()
            .map(|i| self.adjacency[a][i].1)
    }
}

/// Square grid lattice of `side * side` devices, row-major indexing.
pub fn make_lattice(side: usize) -> Result<Topology> {
    if side < 2 {
        return Err(Error::InvalidParameter(format!(
            "lattice side must be >= 2, got {side}"
        )));
    }
    let idx = |r: usize, c: usize| r * side + c;
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                edges.push((idx(r, c), idx(r, c + 1)));
            }
            if r + 1 < side {
                edges.push((idx(r, c), idx(r + 1, c)));
            }
        }
    }
    Topology::build(TopologyKind::Lattice { side }, side * side, None, edges)
}

/// Random geometric graph: `n` devices uniform in the unit square, linked
/// when their distance is at most `radius` (ties included).
pub fn make_random_geometric<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "random geometric graph needs n >= 2, got {n}"
        )));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(Error::InvalidParameter(format!(
            "radius must lie in (0, sqrt(2)], got {radius}"
        )));
    }
    let positions: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let dx = positions[a].0 - positions[b].0;
            let dy = positions[a].1 - positions[b].1;
            if dx * dx + dy * dy <= r2 {
                edges.push((a, b));
            }
        }
    }
    Topology::build(
        TopologyKind::RandomGeometric { radius },
        n,
        Some(positions),
        edges,
    )
}

/// Long-run fraction of time a link is up: `(1 - beta) / (2 - alpha - beta)`.
pub fn steady_state_prob(alpha: f64, beta: f64) -> Result<f64> {
    check_prob("alpha", alpha)?;
    check_prob("beta", beta)?;
    let denom = 2.0 - alpha - beta;
    if denom <= 0.0 {
        return Err(Error::DegenerateChain);
    }
    Ok((1.0 - beta) / denom)
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

/// Per-link up/down state under the two-state Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    up: Vec<bool>,
    alpha: f64,
    beta: f64,
    pi: f64,
}

impl LinkState {
    /// Samples each link up independently with the steady-state probability.
    pub fn init<R: Rng + ?Sized>(
        topo: &Topology,
        alpha: f64,
        beta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let pi = steady_state_prob(alpha, beta)?;
        let up = (0..topo.n_edges()).map(|_| rng.random::<f64>() < pi).collect();
        Ok(LinkState {
            up,
            alpha,
            beta,
            pi,
        })
    }

    /// All links up and never changing.
    pub fn all_up(topo: &Topology) -> Self {
        LinkState {
            up: vec![true; topo.n_edges()],
            alpha: 1.0,
            beta: 0.0,
            pi: 1.0,
        }
    }

    pub fn from_parts(up: Vec<bool>, alpha: f64, beta: f64) -> Result<Self> {
        let pi = steady_state_prob(alpha, beta)?;
        Ok(LinkState {
            up,
            alpha,
            beta,
            pi,
        })
    }

    /// Advances every link one timestep: up stays up w.p. alpha, down stays
    /// down w.p. beta.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.alpha >= 1.0 && self.beta <= 0.0 {
            // static: up links stay up, down links come up with certainty
            self.up.iter_mut().for_each(|u| *u = true);
            return;
        }
        for link in &mut self.up {
            let draw = rng.random::<f64>();
            *link = if *link {
                draw < self.alpha
            } else {
                draw >= self.beta
            };
        }
    }

    pub fn is_up(&self, edge: usize) -> bool {
        self.up[edge]
    }

    pub fn set(&mut self, edge: usize, up: bool) {
        self.up[edge] = up;
    }

    pub fn up_flags(&self) -> &[bool] {
        &self.up
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn up_count(&self) -> usize {
        self.up.iter().filter(|&&u| u).count()
    }
}

/// Devices with a currently-up link to `v`, ascending.
pub fn neighbors<'a>(
    topo: &'a Topology,
    links: &'a LinkState,
    v: DeviceId,
) -> impl Iterator<Item = DeviceId> + 'a {
    topo.potential_neighbors(v)
        .iter()
        .filter(|&&(_, e)| links.is_up(e))
        .map(|&(u, _)| u)
}

pub fn degree(topo: &Topology, links: &LinkState, v: DeviceId) -> usize {
    neighbors(topo, links, v).count()
}

/// Whether the currently-up subgraph is connected.
pub fn is_connected(topo: &Topology, links: &LinkState) -> bool {
    let n = topo.n_devices();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for u in neighbors(topo, links, v) {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n
}

/// Symmetric normalized Laplacian of the up subgraph. Rows and columns of
/// isolated devices are zero.
pub fn normalized_laplacian(topo: &Topology, links: &LinkState) -> DMatrix<f64> {
    let n = topo.n_devices();
    let deg: Vec<f64> = (0..n).map(|v| degree(topo, links, v) as f64).collect();
    let mut lap = DMatrix::zeros(n, n);
    for v in 0..n {
        if deg[v] > 0.0 {
            lap[(v, v)] = 1.0;
        }
    }
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        if links.is_up(e) {
            let w = -1.0 / (deg[a] * deg[b]).sqrt();
            lap[(a, b)] = w;
            lap[(b, a)] = w;
        }
    }
    lap
}

/// Second-smallest eigenvalue of the normalized Laplacian of the up
/// subgraph; exactly 0 when that subgraph is disconnected.
pub fn algebraic_connectivity(topo: &Topology, links: &LinkState) -> f64 {
    if topo.n_devices() < 2 || !is_connected(topo, links) {
        return 0.0;
    }
    let eig = SymmetricEigen::new(normalized_laplacian(topo, links));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values[1].clamp(0.0, 2.0)
}
