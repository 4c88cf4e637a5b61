//! Temporal convolutional autoencoder defining the motion latent space used
//! by FID and diversity.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::rotation::rot_z;
use crate::motion::{Vec3, WorldMotion, JOINT_COUNT};
use crate::nn::{glorot, load_checkpoint, save_checkpoint, Adam, AdamConfig, ConvLayer, ConvTransposeLayer, ParamSet, Tape, Var};
use crate::scalar::Scalar;

pub const EVAL_AE_KIND: &str = "eval-autoencoder";
pub const EVAL_CHANNELS: usize = JOINT_COUNT * 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAeConfig {
    pub window: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for EvalAeConfig {
    fn default() -> Self {
        Self { window: 64, latent: 256, epochs: 20, batch: 16, seed: 0, adam: AdamConfig::default() }
    }
}

/// Joint positions of frames `start..start + len` relative to the root of
/// the first frame (its translation and heading removed), `len × 69`.
pub fn motion_features(world: &WorldMotion<f64>, start: usize, len: usize) -> Array2<f64> {
    let r0 = &world.root[start];
    let inv = rot_z(-r0.yaw());
    let mut out = Array2::zeros((len, EVAL_CHANNELS));
    for f in 0..len {
        for j in 0..JOINT_COUNT {
            let p: Vec3<f64> = inv * (world.joint(start + f, j) - r0.t);
            for k in 0..3 {
                out[[f, 3 * j + k]] = p[k];
            }
        }
    }
    out
}

/// Non-overlapping windows covering as much of the motion as fits.
pub fn motion_windows(world: &WorldMotion<f64>, len: usize) -> Vec<Array2<f64>> {
    (0..world.frames() / len).map(|k| motion_features(world, k * len, len)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalAeMeta {
    config: EvalAeConfig,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Frozen-after-training encoder into a `latent`-dimensional space.
#[derive(Debug, Clone)]
pub struct LatentEvalModel<T: Scalar> {
    pub config: EvalAeConfig,
    pub params: ParamSet<T>,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    enc: [ConvLayer; 2],
    dec: [ConvTransposeLayer; 2],
    reduced: usize,
}

impl<T: Scalar> LatentEvalModel<T> {
    fn build(config: EvalAeConfig, mean: Vec<f64>, inv_std: Vec<f64>) -> Result<Self> {
        if config.window % 4 != 0 || config.window == 0 || config.latent == 0 {
            return Err(Error::BadConfig(format!("eval window {} must be a positive multiple of 4", config.window)));
        }
        let w = config.window;
        let enc = [
            ConvLayer::new(EVAL_CHANNELS, 64, &[w], 3, 2, 1),
            ConvLayer::new(64, 128, &[w / 2], 3, 2, 1),
        ];
        let dec = [
            ConvTransposeLayer::new(128, 64, &[w / 4], 3, 2, 1, 1),
            ConvTransposeLayer::new(64, EVAL_CHANNELS, &[w / 2], 3, 2, 1, 1),
        ];
        let reduced = 128 * (w / 4);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::default();
        for (i, l) in enc.iter().enumerate() {
            let (r, c) = l.weight_shape();
            params.push(format!("enc{i}.w"), glorot(&mut rng, r, c, l.cin * 3, l.cout * 3));
            params.push(format!("enc{i}.b"), Array2::zeros((l.cout, 1)));
        }
        params.push("to_latent.w", glorot(&mut rng, reduced, config.latent, reduced, config.latent));
        params.push("to_latent.b", Array2::zeros((1, config.latent)));
        params.push("from_latent.w", glorot(&mut rng, config.latent, reduced, config.latent, reduced));
        params.push("from_latent.b", Array2::zeros((1, reduced)));
        for (i, l) in dec.iter().enumerate() {
            let (r, c) = l.weight_shape();
            params.push(format!("dec{i}.w"), glorot(&mut rng, r, c, l.cin * 3, l.cout * 3));
            params.push(format!("dec{i}.b"), Array2::zeros((l.cout, 1)));
        }
        Ok(Self { config, params, mean, inv_std, enc, dec, reduced })
    }

    fn input(&self, window: &Array2<T>) -> Result<Array2<T>> {
        if window.dim() != (self.config.window, EVAL_CHANNELS) {
            return Err(Error::ShapeMismatch(format!(
                "eval window must be {:?}, got {:?}",
                (self.config.window, EVAL_CHANNELS),
                window.dim()
            )));
        }
        Ok(Array2::from_shape_fn((EVAL_CHANNELS, self.config.window), |(c, t)| {
            T::lit((window[[t, c]].as_f64() - self.mean[c]) * self.inv_std[c])
        }))
    }

    fn encode_on<'a>(&self, tape: &mut Tape<'a, T>, p: &[Var], x: Var) -> Var {
        let h = self.enc[0].forward(tape, x, p[0], p[1]);
        let h = tape.relu(h);
        let h = self.enc[1].forward(tape, h, p[2], p[3]);
        let h = tape.relu(h);
        let flat = tape.reshape(h, (1, self.reduced));
        tape.linear(flat, p[4], p[5])
    }

    fn decode_on<'a>(&self, tape: &mut Tape<'a, T>, p: &[Var], z: Var) -> Var {
        let h = tape.linear(z, p[6], p[7]);
        let h = tape.relu(h);
        let h = tape.reshape(h, (128, self.config.window / 4));
        let h = self.dec[0].forward(tape, h, p[8], p[9]);
        let h = tape.relu(h);
        self.dec[1].forward(tape, h, p[10], p[11])
    }

    /// Latent vector of one `window × 69` feature block.
    pub fn encode(&self, window: &Array2<T>) -> Result<Vec<T>> {
        let x = self.input(window)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(x);
        let z = self.encode_on(&mut tape, &p, x);
        Ok(tape.value(z).iter().copied().collect())
    }

    /// Latents of many windows as rows.
    pub fn encode_all(&self, windows: &[Array2<T>]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((windows.len(), self.config.latent));
        for (i, w) in windows.iter().enumerate() {
            for (j, v) in self.encode(w)?.into_iter().enumerate() {
                out[[i, j]] = v.as_f64();
            }
        }
        Ok(out)
    }

    /// Mean reconstruction error (normalized units) and its gradient.
    pub fn loss_and_grad(&self, batch: &[&Array2<T>]) -> Result<(T, ParamSet<T>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut total: Option<Var> = None;
        for w in batch {
            let x = self.input(w)?;
            let target = x.clone();
            let x = tape.constant(x);
            let z = self.encode_on(&mut tape, &p, x);
            let y = self.decode_on(&mut tape, &p, z);
            let l = tape.mse(y, target);
            total = Some(match total {
                Some(t) => tape.add(t, l),
                None => l,
            });
        }
        let total = total.ok_or(Error::EmptyCorpus)?;
        let loss = tape.scale(total, T::lit(1.0 / batch.len() as f64));
        let mut grads = tape.backward(loss);
        let g = self.params.collect_grads(&mut grads, &p);
        Ok((tape.value(loss)[[0, 0]], g))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let meta = EvalAeMeta { config: self.config.clone(), mean: self.mean.clone(), inv_std: self.inv_std.clone() };
        save_checkpoint(dir, EVAL_AE_KIND, 0, &meta, &self.params)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let (_, meta, params): (_, EvalAeMeta, ParamSet<T>) = load_checkpoint(dir, EVAL_AE_KIND)?;
        let mut model = Self::build(meta.config, meta.mean, meta.inv_std)?;
        if params.tensors.iter().zip(&model.params.tensors).any(|(a, b)| a.dim() != b.dim())
            || params.len() != model.params.len()
        {
            return Err(Error::ShapeMismatch("eval autoencoder tensors do not match the config".into()));
        }
        model.params = params;
        Ok(model)
    }
}

/// Fit normalization and train on ground-truth windows. Returns the model
/// and the mean loss of every epoch.
pub fn train_eval_autoencoder<T: Scalar>(
    windows: &[Array2<T>],
    config: &EvalAeConfig,
) -> Result<(LatentEvalModel<T>, Vec<f64>)> {
    if windows.len() < 2 {
        return Err(Error::EmptyCorpus);
    }
    let n = (windows.len() * config.window) as f64;
    let mut mean = vec![0.0; EVAL_CHANNELS];
    let mut sq = vec![0.0; EVAL_CHANNELS];
    for w in windows {
        for row in w.rows() {
            for (c, v) in row.iter().enumerate() {
                mean[c] += v.as_f64();
                sq[c] += v.as_f64() * v.as_f64();
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let inv_std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let sd = (q / n - m * m).max(0.0).sqrt();
            if sd > 1e-6 { 1.0 / sd } else { 1.0 }
        })
        .collect();
    let mut model = LatentEvalModel::build(config.clone(), mean, inv_std)?;
    let mut adam = Adam::new(config.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe7a1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch.max(1)) {
            let batch: Vec<&Array2<T>> = chunk.iter().map(|&i| &windows[i]).collect();
            let (loss, grads) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            adam.update(&mut model.params, &grads, config.adam.lr);
            sum += loss.as_f64() * chunk.len() as f64;
            count += chunk.len();
        }
        history.push(sum / count as f64);
    }
    Ok((model, history))
}
