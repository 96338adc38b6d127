//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relroute::nn::Mlp;
use relroute::topology::{LinkState, Topology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adjacency lists of the up subgraph, built directly from the edge list.
pub fn up_adjacency(topo: &Topology, links: &LinkState) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); topo.n_devices()];
    for (e, &(a, b)) in topo.edges().iter().enumerate() {
        if links.is_up(e) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    adj
}

/// All-pairs BFS hop counts; unreachable pairs get `unknown`.
pub fn bfs_all_pairs(adj: &[Vec<usize>], unknown: u32) -> Vec<Vec<u32>> {
    let n = adj.len();
    (0..n)
        .map(|s| {
            let mut dist = vec![unknown; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &u in &adj[v] {
                    if dist[u] == unknown {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            dist
        })
        .collect()
}

pub fn bfs_connected(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    bfs_all_pairs(adj, u32::MAX)[0].iter().all(|&d| d != u32::MAX) || n == 0
}

/// Dense normalized Laplacian from adjacency lists.
pub fn dense_normalized_laplacian(adj: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut l = vec![vec![0.0; n]; n];
    for v in 0..n {
        if !adj[v].is_empty() {
            l[v][v] = 1.0;
        }
        for &u in &adj[v] {
            l[v][u] = -1.0 / ((adj[v].len() * adj[u].len()) as f64).sqrt();
        }
    }
    l
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; eigenvalues
/// ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Step-by-step discounted sum of `r` for `delta` steps followed by `tail`.
pub fn brute_force_return(delta: u64, r: f64, gamma: f64, tail: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..delta {
        total += discount * r;
        discount *= gamma;
    }
    total + discount * tail
}

/// Central finite-difference gradient of the network's loss, flattened in
/// layer order (weights then biases).
pub fn finite_difference_gradient(mlp: &Mlp, xs: &[f64], ys: &[f64], h: f64) -> Vec<f64> {
    let mut probe = mlp.clone();
    let mut out = Vec::new();
    for li in 0..mlp.layers().len() {
        for which in 0..2 {
            let len = if which == 0 {
                mlp.layers()[li].weights.len()
            } else {
                mlp.layers()[li].biases.len()
            };
            for i in 0..len {
                let orig = *param_mut(&mut probe, li, which, i);
                *param_mut(&mut probe, li, which, i) = orig + h;
                let up = probe.loss(xs, ys);
                *param_mut(&mut probe, li, which, i) = orig - h;
                let down = probe.loss(xs, ys);
                *param_mut(&mut probe, li, which, i) = orig;
                out.push((up - down) / (2.0 * h));
            }
        }
    }
    out
}

fn param_mut(m: &mut Mlp, li: usize, which: usize, i: usize) -> &mut f64 {
    let layer = &mut m.layers_mut()[li];
    if which == 0 {
        &mut layer.weights[i]
    } else {
        &mut layer.biases[i]
    }
}

/// Plain matrix-chain forward pass over nalgebra types.
pub fn nalgebra_forward(mlp: &Mlp, x: &[f64]) -> f64 {
    let mut cur = nalgebra::DVector::from_column_slice(x);
    let last = mlp.layers().len() - 1;
    for (li, layer) in mlp.layers().iter().enumerate() {
        let w = nalgebra::DMatrix::from_row_slice(layer.n_out, layer.n_in, &layer.weights);
        let b = nalgebra::DVector::from_column_slice(&layer.biases);
        cur = w * cur + b;
        if li != last {
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    cur[0]
}

pub fn random_rows(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..rows * cols).map(|_| r.random::<f64>()).collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Smallest `|pre-activation|` over every hidden unit and row.
pub fn kink_margin(mlp: &Mlp, xs: &[f64]) -> f64 {
    let last = mlp.layers().len() - 1;
    let mut margin = f64::INFINITY;
    for x in xs.chunks(mlp.n_inputs()) {
        let mut cur = nalgebra::DVector::from_column_slice(x);
        for layer in &mlp.layers()[..last] {
            let w = nalgebra::DMatrix::from_row_slice(layer.n_out, layer.n_in, &layer.weights);
            cur = w * cur + nalgebra::DVector::from_column_slice(&layer.biases);
            margin = cur.iter().fold(margin, |m, z| m.min(z.abs()));
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    margin
}

/// Backprop against central differences on a random batch. Biases are
/// randomized first: with all-zero biases a unit whose inputs are all
/// inactive sits exactly on the rectifier kink. Batches with a hidden unit
/// closer to its kink than ten steps are redrawn, since a difference
/// straddling the kink measures nothing.
pub fn gradient_check(mlp: &Mlp, rows: usize, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    for attempt in 0..100u64 {
        let seed = seed + 7919 * attempt;
        let mut mlp = mlp.clone();
        let mut r = rng(seed ^ 0x5eed);
        for layer in mlp.layers_mut() {
            for b in &mut layer.biases {
                *b = r.random_range(-0.1..0.1);
            }
        }
        let n_in = mlp.n_inputs();
        let xs: Vec<f64> = random_rows(rows, n_in, seed).iter().map(|x| 2.0 * x - 1.0).collect();
        if kink_margin(&mlp, &xs) < 10.0 * H {
            continue;
        }
        let ys: Vec<f64> = random_rows(rows, 1, seed + 1).iter().map(|y| 4.0 * y - 2.0).collect();
        let (_, grads) = mlp.loss_and_gradients(&xs, &ys);
        let numeric = finite_difference_gradient(&mlp, &xs, &ys, H);
        return max_relative_error(&grads.flatten(), &numeric, 1e-6);
    }
    panic!("no kink-free batch found");
}
