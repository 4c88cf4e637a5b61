//! Minibatch training loop and checkpoint I/O for the denoiser.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::DenoiserConfig;
use super::model::{draw_batch, CondNormalizer, Denoiser};
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, Adam, AdamConfig};
use crate::scalar::Scalar;

pub const DENOISER_KIND: &str = "denoiser";

/// Indexed collection of `(x0, cond)` training windows.
pub trait WindowDataset<T: Scalar>: Sync {
    fn len(&self) -> usize;

    fn window(&self, index: usize) -> Result<(Array2<T>, Array2<T>)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Scalar> WindowDataset<T> for Vec<(Array2<T>, Array2<T>)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn window(&self, index: usize) -> Result<(Array2<T>, Array2<T>)> {
        Ok(self[index].clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Cosine decay of the learning rate to 10% over the run.
    pub cosine_decay: bool,
    /// Probability of blanking the image block, and independently the
    /// point-cloud block, of a training condition.
    pub cond_dropout: f64,
    /// Save a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch: 8,
            seed: 0,
            adam: AdamConfig { lr: 1e-4, ..AdamConfig::default() },
            cosine_decay: false,
            cond_dropout: 0.0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Minibatch loss of every step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean loss over the first / last `n` steps.
    pub fn head_tail(&self, n: usize) -> (f64, f64) {
        let n = n.clamp(1, self.losses.len().max(1));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        (mean(&self.losses[..n.min(self.losses.len())]), mean(&self.losses[self.losses.len().saturating_sub(n)..]))
    }
}

/// Train in place. `progress(step, loss)` is called after every step.
pub fn train<T: Scalar, D: WindowDataset<T> + ?Sized>(
    model: &mut Denoiser<T>,
    data: &D,
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let layout = model.config.layout();
    if cfg.cond_dropout > 0.0 && layout.is_none() {
        return Err(Error::BadConfig("condition dropout needs the standard condition layout".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, &model.params);
    let mut report = TrainReport::default();
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch.max(1) {
            let (x0, mut cond) = data.window(rng.random_range(0..data.len()))?;
            if let (Some(l), true) = (layout, cfg.cond_dropout > 0.0) {
                if rng.random_bool(cfg.cond_dropout) {
                    cond.slice_mut(s![.., l.image()]).fill(T::zero());
                }
                if rng.random_bool(cfg.cond_dropout) {
                    cond.slice_mut(s![.., l.pc()]).fill(T::zero());
                }
            }
            batch.push((x0, cond));
        }
        let draws = draw_batch(&batch, &mut rng, sched);
        let (loss, grads) = model.loss_and_grad_fixed(&draws)?;
        let lr = if cfg.cosine_decay {
            let t = step as f64 / cfg.steps.max(1) as f64;
            cfg.adam.lr * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
        } else {
            cfg.adam.lr
        };
        adam.update(&mut model.params, &grads, lr);
        let loss = loss.as_f64();
        report.losses.push(loss);
        progress(step, loss);
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                save_denoiser(dir.join(format!("step-{:06}", step + 1)), (step + 1) as u64, model)?;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenoiserMeta {
    model: DenoiserConfig,
    cond_norm: CondNormalizer,
}

pub fn save_denoiser<T: Scalar>(dir: impl AsRef<Path>, step: u64, model: &Denoiser<T>) -> Result<()> {
    let meta = DenoiserMeta { model: model.config.clone(), cond_norm: model.cond_norm.clone() };
    save_checkpoint(dir, DENOISER_KIND, step, &meta, &model.params)
}

pub fn load_denoiser<T: Scalar>(dir: impl AsRef<Path>) -> Result<Denoiser<T>> {
    let (_, meta, params): (_, DenoiserMeta, _) = load_checkpoint(dir, DENOISER_KIND)?;
    Denoiser::from_parts(meta.model, params, meta.cond_norm)
}
