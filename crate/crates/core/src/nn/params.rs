//! Named parameter collections, initialization and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tape::{Grads, Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Scalar> {
    pub names: Vec<String>,
    pub tensors: Vec<Array2<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

impl<T: Scalar> ParamSet<T> {
    pub fn push(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.tensors[id.0]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
        }
    }

    /// Register every tensor as a borrowed trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t)).collect()
    }

    /// Register every tensor as a borrowed constant (inference only).
    pub fn bind_frozen<'a>(&'a self, tape: &mut Tape<'a, T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant_ref(t)).collect()
    }

    /// Gradients for bound leaves, zero where a tensor did not influence the loss.
    pub fn collect_grads(&self, grads: &mut Grads<T>, vars: &[Var]) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .zip(vars)
                .map(|(t, v)| grads.take(*v).unwrap_or_else(|| Array2::zeros(t.dim())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * s);
        }
    }

    pub fn norm(&self) -> T {
        self.tensors.iter().flat_map(|t| t.iter()).map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.mapv(|v| U::lit(v.as_f64()))).collect(),
        }
    }

    /// Visit scalar `k` of the flattened parameter vector.
    pub fn flat_get(&self, mut k: usize) -> T {
        for t in &self.tensors {
            if k < t.len() {
                return t.as_slice().expect("standard layout")[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut k: usize, v: T) {
        for t in &mut self.tensors {
            if k < t.len() {
                t.as_slice_mut().expect("standard layout")[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }
}

/// Uniform Glorot initialization for a `fan_in × fan_out` weight.
pub fn glorot<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Array2::from_shape_fn((rows, cols), |_| T::lit(dist.sample(rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip, 0 disables.
    #[serde(default)]
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: 0.0 }
    }
}

/// Adaptive-moment first-order optimizer.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    pub step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect();
        Self { config, m: zeros(), v: zeros(), step: 0 }
    }

    /// One update with learning rate `lr` (lets callers apply a schedule).
    pub fn update(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) {
        self.step += 1;
        let c = &self.config;
        let mut gscale = 1.0;
        if c.clip_norm > 0.0 {
            let n = grads.norm().as_f64();
            if n > c.clip_norm {
                gscale = c.clip_norm / n;
            }
        }
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = T::lit(lr * bc2.sqrt() / bc1);
        let eps = T::lit(c.eps * bc2.sqrt());
        let gs = T::lit(gscale);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g * gs;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *p -= step_size * *m / (v.sqrt() + eps);
            });
        }
    }
}
