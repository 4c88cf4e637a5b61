//! Convolutional autoencoder compressing a voxel grid into a 128-d latent.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::voxel::{VoxelGrid, GRID_CELLS, GRID_SIZE, TRUNCATION};
use crate::error::{Error, Result};
use crate::motion::Vec3;
use crate::nn::{glorot, load_checkpoint, save_checkpoint, Adam, AdamConfig, ConvLayer, ConvTransposeLayer, ParamSet, Tape, Var};
use crate::scalar::Scalar;

pub const PC_LATENT_DIM: usize = 128;
pub const PC_AE_KIND: &str = "pc-autoencoder";
const CHANNELS: [usize; 4] = [16, 32, 64, 128];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PcTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PcTrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch: 16, seed: 0, adam: AdamConfig::default() }
    }
}

/// Encoder: four 3×3×3 convolutions (16, 32, 64, 128 channels; the first
/// three stride 2) with ReLU, then global average pooling. Decoder: the
/// latent broadcast over a 2³ grid and four transposed convolutions back to
/// 10³. The network sees `1 − value / 0.1`, which is 0 in free space and 1
/// on a point.
#[derive(Debug, Clone)]
pub struct PcAutoencoder<T: Scalar> {
    pub params: ParamSet<T>,
    enc: Vec<ConvLayer>,
    dec: Vec<ConvTransposeLayer>,
}

fn layers() -> (Vec<ConvLayer>, Vec<ConvTransposeLayer>) {
    let mut enc = Vec::new();
    let mut n = GRID_SIZE;
    let mut cin = 1;
    for (i, &c) in CHANNELS.iter().enumerate() {
        let stride = if i < 3 { 2 } else { 1 };
        let layer = ConvLayer::new(cin, c, &[n; 3], 3, stride, 1);
        n = layer.shape.out_dims[0];
        cin = c;
        enc.push(layer);
    }
    // 2 → 2 → 3 → 5 → 10
    let dec = vec![
        ConvTransposeLayer::new(128, 64, &[2; 3], 3, 1, 1, 0),
        ConvTransposeLayer::new(64, 32, &[2; 3], 3, 2, 1, 0),
        ConvTransposeLayer::new(32, 16, &[3; 3], 3, 2, 1, 0),
        ConvTransposeLayer::new(16, 1, &[5; 3], 3, 2, 1, 1),
    ];
    (enc, dec)
}

impl<T: Scalar> PcAutoencoder<T> {
    pub fn new(seed: u64) -> Self {
        let (enc, dec) = layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        for (i, l) in enc.iter().enumerate() {
            let (r, c) = l.weight_shape();
            let k = l.shape.kernel_volume();
            params.push(format!("enc{i}.w"), glorot(&mut rng, r, c, l.cin * k, l.cout * k));
            params.push(format!("enc{i}.b"), Array2::zeros((l.cout, 1)));
        }
        for (i, l) in dec.iter().enumerate() {
            let (r, c) = l.weight_shape();
            let k = l.shape.kernel_volume();
            params.push(format!("dec{i}.w"), glorot(&mut rng, r, c, l.cin * k, l.cout * k));
            params.push(format!("dec{i}.b"), Array2::zeros((l.cout, 1)));
        }
        Self { params, enc, dec }
    }

    pub fn save(&self, dir: impl AsRef<Path>, epochs: u64) -> Result<()> {
        save_checkpoint(dir, PC_AE_KIND, epochs, &PcMeta { latent: PC_LATENT_DIM }, &self.params)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let (_, meta, params): (_, PcMeta, ParamSet<T>) = load_checkpoint(dir, PC_AE_KIND)?;
        if meta.latent != PC_LATENT_DIM {
            return Err(Error::ShapeMismatch(format!("pc latent width {}", meta.latent)));
        }
        Self::from_params(params)
    }

    /// Rebuild from stored parameters, checking every tensor shape.
    pub fn from_params(params: ParamSet<T>) -> Result<Self> {
        let reference = Self::new(0);
        if params.len() != reference.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "pc autoencoder expects {} tensors, got {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (i, (a, b)) in params.tensors.iter().zip(&reference.params.tensors).enumerate() {
            if a.dim() != b.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected {:?}, got {:?}",
                    reference.params.names[i],
                    b.dim(),
                    a.dim()
                )));
            }
        }
        Ok(Self { params, ..reference })
    }

    fn input(values: &[T]) -> Result<Array2<T>> {
        if values.len() != GRID_CELLS {
            return Err(Error::ShapeMismatch(format!("voxel grid needs {GRID_CELLS} values, got {}", values.len())));
        }
        let s = T::lit(1.0 / TRUNCATION);
        Ok(Array2::from_shape_fn((1, GRID_CELLS), |(_, i)| T::one() - values[i] * s))
    }

    fn encode_on<'a>(&self, tape: &mut Tape<'a, T>, p: &[Var], x: Var) -> Var {
        let mut h = x;
        for (i, l) in self.enc.iter().enumerate() {
            h = l.forward(tape, h, p[2 * i], p[2 * i + 1]);
            if i + 1 < self.enc.len() {
                h = tape.relu(h);
            }
        }
        let n = tape.value(h).ncols();
        let pool = tape.constant(Array2::from_elem((n, 1), T::lit(1.0 / n as f64)));
        tape.matmul(h, pool) // [128, 1]
    }

    fn decode_on<'a>(&self, tape: &mut Tape<'a, T>, p: &[Var], z: Var) -> Var {
        let off = 2 * self.enc.len();
        let n = self.dec[0].shape.in_len();
        let ones = tape.constant(Array2::ones((1, n)));
        let mut h = tape.matmul(z, ones);
        for (i, l) in self.dec.iter().enumerate() {
            h = l.forward(tape, h, p[off + 2 * i], p[off + 2 * i + 1]);
            if i + 1 < self.dec.len() {
                h = tape.relu(h);
            }
        }
        h // [1, 1000]
    }

    pub fn encode_values(&self, values: &[T]) -> Result<Vec<T>> {
        let x = Self::input(values)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.input(x);
        let z = self.encode_on(&mut tape, &p, x);
        Ok(tape.value(z).iter().copied().collect())
    }

    pub fn encode(&self, grid: &VoxelGrid<T>) -> Result<Vec<T>> {
        self.encode_values(&grid.values)
    }

    /// Decoded grid values are clamped into `[0, 0.1]`; the grid carries no
    /// placement, so center and yaw are zero.
    pub fn decode(&self, latent: &[T]) -> Result<VoxelGrid<T>> {
        if latent.len() != PC_LATENT_DIM {
            return Err(Error::ShapeMismatch(format!("pc latent needs {PC_LATENT_DIM} values, got {}", latent.len())));
        }
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let z = tape.input(Array2::from_shape_vec((PC_LATENT_DIM, 1), latent.to_vec()).expect("latent shape"));
        let y = self.decode_on(&mut tape, &p, z);
        let trunc = T::lit(TRUNCATION);
        let values = tape.value(y).iter().map(|v| ((T::one() - *v) * trunc).max(T::zero()).min(trunc)).collect();
        Ok(VoxelGrid { values, center: Vec3::zeros(), yaw: T::zero() })
    }

    /// Mean squared reconstruction error in meters², and its gradient.
    pub fn loss_and_grad(&self, batch: &[&[T]]) -> Result<(T, ParamSet<T>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut total: Option<Var> = None;
        for values in batch {
            let x = Self::input(values)?;
            let target = x.clone();
            let x = tape.input(x);
            let z = self.encode_on(&mut tape, &p, x);
            let y = self.decode_on(&mut tape, &p, z);
            let l = tape.mse(y, target);
            total = Some(match total {
                Some(t) => tape.add(t, l),
                None => l,
            });
        }
        let total = total.ok_or(Error::EmptyCorpus)?;
        let scale = T::lit(TRUNCATION * TRUNCATION / batch.len() as f64);
        let loss = tape.scale(total, scale);
        let mut grads = tape.backward(loss);
        let g = self.params.collect_grads(&mut grads, &p);
        Ok((tape.value(loss)[[0, 0]], g))
    }

    /// Mean reconstruction error over a set of grids, meters².
    pub fn reconstruction_mse(&self, grids: &[Vec<T>]) -> Result<f64> {
        let mut acc = 0.0;
        for g in grids {
            let z = self.encode_values(g)?;
            let r = self.decode_raw(&z);
            acc += g.iter().zip(&r).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum::<f64>() / GRID_CELLS as f64;
        }
        Ok(acc / grids.len().max(1) as f64)
    }

    fn decode_raw(&self, latent: &[T]) -> Vec<T> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let z = tape.input(Array2::from_shape_vec((PC_LATENT_DIM, 1), latent.to_vec()).expect("latent shape"));
        let y = self.decode_on(&mut tape, &p, z);
        let trunc = T::lit(TRUNCATION);
        tape.value(y).iter().map(|v| (T::one() - *v) * trunc).collect()
    }
}

/// Train on a corpus of grids (each 1000 values). Returns the model and the
/// mean training loss of every epoch.
pub fn train_pc_autoencoder<T: Scalar>(
    grids: &[Vec<T>],
    config: &PcTrainConfig,
) -> Result<(PcAutoencoder<T>, Vec<f64>)> {
    if grids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = PcAutoencoder::new(config.seed);
    let mut adam = Adam::new(config.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9c);
    let mut order: Vec<usize> = (0..grids.len()).collect();
    let batch = config.batch.max(1);
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for chunk in order.chunks(batch) {
            let items: Vec<&[T]> = chunk.iter().map(|&i| grids[i].as_slice()).collect();
            let (loss, grads) = model.loss_and_grad(&items)?;
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

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PcMeta {
    latent: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let m = PcAutoencoder::<f32>::new(1);
        let g = VoxelGrid::empty(Vec3::zeros(), 0.0);
        let z = m.encode(&g).unwrap();
        assert_eq!(z.len(), PC_LATENT_DIM);
        assert_eq!(m.decode(&z).unwrap().values.len(), GRID_CELLS);
        assert_eq!(z, m.encode(&g).unwrap());
        assert!(matches!(m.encode_values(&[0.0; 10]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = PcAutoencoder::<f32>::new(5);
        m.save(dir.path(), 3).unwrap();
        let back = PcAutoencoder::<f32>::load(dir.path()).unwrap();
        assert_eq!(back.params.tensors, m.params.tensors);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = PcAutoencoder::<f64>::new(3);
        let grid: Vec<f64> = (0..GRID_CELLS).map(|i| 0.1 * ((i * 37 % 101) as f64 / 101.0)).collect();
        let (_, g) = m.loss_and_grad(&[&grid]).unwrap();
        let mut probe = m.clone();
        let h = 1e-5;
        for k in [0, 100, 500, 3000, 20000, probe.params.count() - 1] {
            let base = probe.params.flat_get(k);
            probe.params.flat_set(k, base + h);
            let lp = probe.loss_and_grad(&[&grid]).unwrap().0;
            probe.params.flat_set(k, base - h);
            let lm = probe.loss_and_grad(&[&grid]).unwrap().0;
            probe.params.flat_set(k, base);
            let fd = (lp - lm) / (2.0 * h);
            let an = g.flat_get(k);
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-11, "param {k}: {an} vs {fd}");
        }
    }

    #[test]
    fn constant_corpus_learns_quickly() {
        let grids = vec![vec![0.1f32; GRID_CELLS]; 8];
        let cfg = PcTrainConfig { epochs: 10, batch: 4, ..Default::default() };
        let (_, hist) = train_pc_autoencoder(&grids, &cfg).unwrap();
        assert!(hist.last().unwrap() < &1e-5, "{hist:?}");
        assert!(matches!(train_pc_autoencoder::<f32>(&[], &cfg), Err(Error::EmptyCorpus)));
    }
}
