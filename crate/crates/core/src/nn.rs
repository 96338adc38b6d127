//! Feedforward value network.
//!
//! Fully connected layers with rectified-linear hidden units and a linear
//! scalar output, trained on mean squared error with mini-batch Adam (or
//! plain SGD). Weights are stored per layer as row-major `out x in`
//! matrices. Batched passes go through `matrixmultiply::dgemm`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"RRMLP\0\0\0";
pub const MODEL_VERSION: u32 = 1;

/// Layer sizes for `inputs` features: `[F, 10F, F/2, 1]`.
pub fn standard_shape(inputs: usize) -> Vec<usize> {
    vec![inputs, 10 * inputs, inputs / 2, 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            epochs: 10,
            batch_size: 32,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Gradient of the loss with the same layout as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// All entries flattened layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    adam: Option<AdamState>,
    metadata: String,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(sizes, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        for layer in &mut mlp.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        mlp
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert_eq!(*sizes.last().unwrap(), 1, "output must be a single unit");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Mlp {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            adam: None,
            metadata: String::new(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Free-form provenance text stored with the model.
    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    pub fn set_metadata(&mut self, text: impl Into<String>) {
        self.metadata = text.into();
    }

    /// Q-value estimate for one input row.
    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_inputs(), "input dimension mismatch");
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = layer.biases.clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                *out += row.iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>();
                if li != last && *out < 0.0 {
                    *out = 0.0;
                }
            }
            cur = next;
        }
        cur[0]
    }

    /// Forward pass over `rows` inputs laid out row-major.
    pub fn forward_batch(&self, xs: &[f64]) -> Vec<f64> {
        let n_in = self.n_inputs();
        assert_eq!(xs.len() % n_in, 0, "input dimension mismatch");
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(xs.len() / n_in);
        let mut acts = Activations::default();
        for chunk in xs.chunks(CHUNK * n_in) {
            self.forward_into(chunk, &mut acts);
            out.extend_from_slice(acts.outputs());
        }
        out
    }

    fn forward_into(&self, xs: &[f64], acts: &mut Activations) {
        let m = xs.len() / self.n_inputs();
        acts.input.clear();
        acts.input.extend_from_slice(xs);
        acts.layers.resize_with(self.layers.len(), Vec::new);
        let last = self.layers.len() - 1;
        for li in 0..self.layers.len() {
            let layer = &self.layers[li];
            let (before, after) = acts.layers.split_at_mut(li);
            let input: &[f64] = if li == 0 { &acts.input } else { &before[li - 1] };
            let z = &mut after[0];
            z.clear();
            z.reserve(m * layer.n_out);
            for _ in 0..m {
                z.extend_from_slice(&layer.biases);
            }
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    layer.n_in,
                    layer.n_out,
                    1.0,
                    input.as_ptr(),
                    layer.n_in as isize,
                    1,
                    layer.weights.as_ptr(),
                    1,
                    layer.n_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    layer.n_out as isize,
                    1,
                );
            }
            if li != last {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_gradients(&self, xs: &[f64], ys: &[f64]) -> (f64, Gradients) {
        let mut acts = Activations::default();
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        };
        let mut scratch = Vec::new();
        let loss = self.backprop(xs, ys, &mut acts, &mut grads, &mut scratch);
        (loss, grads)
    }

    /// Mean squared error over the batch.
    pub fn loss(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let pred = self.forward_batch(xs);
        assert_eq!(pred.len(), ys.len());
        pred.iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / ys.len() as f64
    }

    fn backprop(
        &self,
        xs: &[f64],
        ys: &[f64],
        acts: &mut Activations,
        grads: &mut Gradients,
        scratch: &mut Vec<f64>,
    ) -> f64 {
        let m = ys.len();
        assert_eq!(xs.len(), m * self.n_inputs(), "batch shape mismatch");
        self.forward_into(xs, acts);
        let pred = acts.outputs();
        let mut delta: Vec<f64> = pred
            .iter()
            .zip(ys)
            .map(|(p, y)| 2.0 * (p - y) / m as f64)
            .collect();
        let loss = pred.iter().zip(ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / m as f64;

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input: &[f64] = if li == 0 { &acts.input } else { &acts.layers[li - 1] };
            let g = &mut grads.layers[li];
            // dW = delta^T * input
            unsafe {
                matrixmultiply::dgemm(
                    layer.n_out,
                    m,
                    layer.n_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    layer.n_out as isize,
                    input.as_ptr(),
                    layer.n_in as isize,
                    1,
                    0.0,
                    g.weights.as_mut_ptr(),
                    layer.n_in as isize,
                    1,
                );
            }
            g.biases.iter_mut().for_each(|b| *b = 0.0);
            for row in delta.chunks(layer.n_out) {
                for (b, d) in g.biases.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if li == 0 {
                break;
            }
            // delta_prev = (delta * W) masked by the rectifier
            scratch.clear();
            scratch.resize(m * layer.n_in, 0.0);
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    layer.n_out,
                    layer.n_in,
                    1.0,
                    delta.as_ptr(),
                    layer.n_out as isize,
                    1,
                    layer.weights.as_ptr(),
                    layer.n_in as isize,
                    1,
                    0.0,
                    scratch.as_mut_ptr(),
                    layer.n_in as isize,
                    1,
                );
            }
            for (d, &a) in scratch.iter_mut().zip(input) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            std::mem::swap(&mut delta, scratch);
        }
        loss
    }

    /// Applies one optimizer step with the given gradients.
    pub fn apply(&mut self, grads: &Gradients, cfg: &FitConfig) {
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
                    for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= cfg.learning_rate * d;
                    }
                    for (b, d) in layer.biases.iter_mut().zip(&g.biases) {
                        *b -= cfg.learning_rate * d;
                    }
                }
            }
            Optimizer::Adam => {
                let zeros = || {
                    self.layers
                        .iter()
                        .map(|l| Layer::zeros(l.n_in, l.n_out))
                        .collect::<Vec<_>>()
                };
                let state = self.adam.get_or_insert_with(|| AdamState {
                    step: 0,
                    m: zeros(),
                    v: zeros(),
                });
                state.step += 1;
                let t = state.step as i32;
                let lr_t = cfg.learning_rate * (1.0 - ADAM_BETA2.powi(t)).sqrt()
                    / (1.0 - ADAM_BETA1.powi(t));
                for li in 0..self.layers.len() {
                    let layer = &mut self.layers[li];
                    let g = &grads.layers[li];
                    let (m, v) = (&mut state.m[li], &mut state.v[li]);
                    adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, lr_t);
                    adam_update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases, lr_t);
                }
            }
        }
    }

    /// Shuffled mini-batch training on mean squared error. Returns the mean
    /// per-sample loss of each epoch, measured before each batch's update.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        xs: &[f64],
        ys: &[f64],
        cfg: &FitConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let n_in = self.n_inputs();
        let n = ys.len();
        if n == 0 || xs.len() != n * n_in {
            return Err(Error::InvalidParameter(format!(
                "fit needs a nonempty batch with {n_in} features per row"
            )));
        }
        let batch = cfg.batch_size.max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut acts = Activations::default();
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        };
        let mut scratch = Vec::new();
        let mut bx = Vec::with_capacity(batch * n_in);
        let mut by = Vec::with_capacity(batch);
        let mut trace = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for idx in order.chunks(batch) {
                bx.clear();
                by.clear();
                for &i in idx {
                    bx.extend_from_slice(&xs[i * n_in..(i + 1) * n_in]);
                    by.push(ys[i]);
                }
                let loss = self.backprop(&bx, &by, &mut acts, &mut grads, &mut scratch);
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss in epoch {epoch}"
                    )));
                }
                total += loss * idx.len() as f64;
                self.apply(&grads, cfg);
            }
            trace.push(total / n as f64);
        }
        Ok(trace)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.param_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        let sizes = self.sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        for layer in &self.layers {
            for x in layer.weights.iter().chain(&layer.biases) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic; not a model file".into()));
        }
        let version = r.u32("format version")?;
        if version != MODEL_VERSION {
            return Err(Error::Incompatible(format!(
                "model format version {version}, expected {MODEL_VERSION}"
            )));
        }
        let n_sizes = r.u32("layer count")? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::ModelFormat(format!("implausible layer count {n_sizes}")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for i in 0..n_sizes {
            sizes.push(r.u32(&format!("size of layer {i}"))? as usize);
        }
        if sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(Error::ModelFormat(format!("invalid layer sizes {sizes:?}")));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta = r.take(meta_len, "metadata")?;
        let metadata = String::from_utf8(meta.to_vec())
            .map_err(|_| Error::ModelFormat("metadata is not utf-8".into()))?;
        let mut mlp = Mlp::zeros(&sizes);
        mlp.metadata = metadata;
        for (li, layer) in mlp.layers.iter_mut().enumerate() {
            let shape = format!("layer {li} weights {}x{}", layer.n_out, layer.n_in);
            for w in &mut layer.weights {
                *w = r.f64(&shape)?;
            }
            let shape = format!("layer {li} biases {}", layer.n_out);
            for b in &mut layer.biases {
                *b = r.f64(&shape)?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes after the last layer",
                bytes.len() - r.pos
            )));
        }
        Ok(mlp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Human-readable listing of every parameter, for diffing.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "relroute-mlp v{MODEL_VERSION}");
        let sizes: Vec<String> = self.sizes().iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        for line in self.metadata.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for (li, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {li} weights {}x{}", layer.n_out, layer.n_in);
            for row in layer.weights.chunks(layer.n_in) {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
            let _ = writeln!(out, "layer {li} biases {}", layer.n_out);
            let cells: Vec<String> = layer.biases.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], lr_t: f64) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        params[i] -= lr_t * m[i] / (v[i].sqrt() + ADAM_EPS);
    }
}

#[derive(Default)]
struct Activations {
    input: Vec<f64>,
    layers: Vec<Vec<f64>>,
}

impl Activations {
    fn outputs(&self) -> &[f64] {
        self.layers.last().expect("forward pass ran")
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ModelFormat(format!(
                "file truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
