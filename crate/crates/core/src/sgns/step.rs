//! The negative-sampling update for one (center, context) pair.
//!
//! For center input vector `w`, context output vector `c` and noise output
//! vectors `n_j`, the per-pair log-likelihood is
//! `L = ln σ(c·w) + Σ_j ln σ(−n_j·w)`; a step moves every touched row by
//! `lr · ∂L/∂row`.

use std::sync::atomic::{AtomicU32, Ordering};

use super::{EmbeddingModel, TrainError, TrainingPair};

/// Row access to the two weight matrices, implemented for owned matrices
/// and for the lock-free shared view used by parallel workers.
pub(crate) trait Weights {
    fn read_input(&self, row: usize, buf: &mut [f32]);
    fn read_output(&self, row: usize, buf: &mut [f32]);
    fn write_input(&mut self, row: usize, buf: &[f32]);
    fn write_output(&mut self, row: usize, buf: &[f32]);
}

pub(crate) struct OwnedWeights<'a> {
    pub input: &'a mut [f32],
    pub output: &'a mut [f32],
    pub dim: usize,
}

impl Weights for OwnedWeights<'_> {
    fn read_input(&self, row: usize, buf: &mut [f32]) {
        buf.copy_from_slice(&self.input[row * self.dim..(row + 1) * self.dim]);
    }
    fn read_output(&self, row: usize, buf: &mut [f32]) {
        buf.copy_from_slice(&self.output[row * self.dim..(row + 1) * self.dim]);
    }
    fn write_input(&mut self, row: usize, buf: &[f32]) {
        self.input[row * self.dim..(row + 1) * self.dim].copy_from_slice(buf);
    }
    fn write_output(&mut self, row: usize, buf: &[f32]) {
        self.output[row * self.dim..(row + 1) * self.dim].copy_from_slice(buf);
    }
}

/// Shared matrices stored as `f32` bit patterns. Relaxed loads and stores
/// give Hogwild semantics: concurrent writers may overwrite each other's
/// updates, but every read sees some value that was written.
pub(crate) struct SharedWeights<'a> {
    pub input: &'a [AtomicU32],
    pub output: &'a [AtomicU32],
    pub dim: usize,
}

fn load_row(src: &[AtomicU32], row: usize, dim: usize, buf: &mut [f32]) {
    for (b, a) in buf.iter_mut().zip(&src[row * dim..(row + 1) * dim]) {
        *b = f32::from_bits(a.load(Ordering::Relaxed));
    }
}

fn store_row(dst: &[AtomicU32], row: usize, dim: usize, buf: &[f32]) {
    for (b, a) in buf.iter().zip(&dst[row * dim..(row + 1) * dim]) {
        a.store(b.to_bits(), Ordering::Relaxed);
    }
}

impl Weights for SharedWeights<'_> {
    fn read_input(&self, row: usize, buf: &mut [f32]) {
        load_row(self.input, row, self.dim, buf);
    }
    fn read_output(&self, row: usize, buf: &mut [f32]) {
        load_row(self.output, row, self.dim, buf);
    }
    fn write_input(&mut self, row: usize, buf: &[f32]) {
        store_row(self.input, row, self.dim, buf);
    }
    fn write_output(&mut self, row: usize, buf: &[f32]) {
        store_row(self.output, row, self.dim, buf);
    }
}

/// Reusable per-worker buffers.
pub(crate) struct Scratch {
    center: Vec<f32>,
    target: Vec<f32>,
    accum: Vec<f32>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            center: vec![0.0; dim],
            target: vec![0.0; dim],
            accum: vec![0.0; dim],
        }
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn update<W: Weights>(
    weights: &mut W,
    scratch: &mut Scratch,
    pair: TrainingPair,
    negatives: &[usize],
    lr: f32,
) -> Result<f64, TrainError> {
    let Scratch {
        center,
        target,
        accum,
    } = scratch;
    weights.read_input(pair.center, center);
    accum.iter_mut().for_each(|a| *a = 0.0);

    let mut loss = 0.0;
    let targets =
        std::iter::once((pair.context, 1.0f32)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (row, label) in targets {
        weights.read_output(row, target);
        let f = dot(center, target) as f64;
        loss += if label > 0.5 {
            softplus(-f)
        } else {
            softplus(f)
        };
        let g = (label - sigmoid(f) as f32) * lr;
        for ((a, t), c) in accum.iter_mut().zip(target.iter_mut()).zip(center.iter()) {
            *a += g * *t;
            *t += g * c;
        }
        if !target.iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFiniteUpdate { row, output: true });
        }
        weights.write_output(row, target);
    }

    for (c, a) in center.iter_mut().zip(accum.iter()) {
        *c += a;
    }
    if !center.iter().all(|v| v.is_finite()) {
        return Err(TrainError::NonFiniteUpdate {
            row: pair.center,
            output: false,
        });
    }
    weights.write_input(pair.center, center);
    Ok(loss)
}

/// Applies one negative-sampling step to `model` and returns the pair's
/// negative log-likelihood before the update.
pub fn sgd_step(
    model: &mut EmbeddingModel,
    pair: TrainingPair,
    negatives: &[usize],
    lr: f32,
) -> Result<f64, TrainError> {
    assert!(lr > 0.0, "learning rate must be positive");
    let dim = model.dim();
    let mut scratch = Scratch::new(dim);
    let mut weights = OwnedWeights {
        input: &mut model.input_vectors,
        output: &mut model.output_vectors,
        dim,
    };
    update(&mut weights, &mut scratch, pair, negatives, lr)
}

/// Analytic gradient of the per-pair log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    /// ∂L/∂ input row of the center.
    pub center: Vec<f64>,
    /// ∂L/∂ output row, summed over repeated ids, in first-seen order.
    pub outputs: Vec<(usize, Vec<f64>)>,
}

pub fn sgns_gradient(
    model: &EmbeddingModel,
    pair: TrainingPair,
    negatives: &[usize],
) -> SgnsGradient {
    let w: Vec<f64> = model
        .input_row(pair.center)
        .iter()
        .map(|&v| v as f64)
        .collect();
    let mut center = vec![0.0; w.len()];
    let mut outputs: Vec<(usize, Vec<f64>)> = Vec::new();
    let targets = std::iter::once((pair.context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (row, label) in targets {
        let c: Vec<f64> = model.output_row(row).iter().map(|&v| v as f64).collect();
        let f: f64 = w.iter().zip(&c).map(|(a, b)| a * b).sum();
        let g = label - sigmoid(f);
        for (d, cv) in center.iter_mut().zip(&c) {
            *d += g * cv;
        }
        let slot = match outputs.iter().position(|(r, _)| *r == row) {
            Some(i) => i,
            None => {
                outputs.push((row, vec![0.0; w.len()]));
                outputs.len() - 1
            }
        };
        for (d, wv) in outputs[slot].1.iter_mut().zip(&w) {
            *d += g * wv;
        }
    }
    SgnsGradient { center, outputs }
}
