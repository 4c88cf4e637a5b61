//! Token-per-frame transformer predicting the clean motion window.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::DenoiserConfig;
use crate::diffusion::{diffuse_with_alpha, training_draw, DiffusionSchedule, X0Predictor};
use crate::error::{Error, Result};
use crate::nn::{glorot, ParamSet, Tape, Var};
use crate::scalar::Scalar;

/// Per-column affine map applied to raw condition rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondNormalizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl CondNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], inv_std: vec![1.0; dim] }
    }

    /// Column statistics over all rows of all windows; near-constant columns
    /// keep unit scale.
    pub fn fit<T: Scalar>(windows: &[&Array2<T>]) -> Result<Self> {
        let first = windows.first().ok_or(Error::EmptyCorpus)?;
        let dim = first.ncols();
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0.0;
        for w in windows {
            for row in w.rows() {
                for (j, v) in row.iter().enumerate() {
                    let v = v.as_f64();
                    sum[j] += v;
                    sq[j] += v * v;
                }
                n += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let inv_std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd > 1e-6 { 1.0 / sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply<T: Scalar>(&self, cond: &Array2<T>) -> Array2<T> {
        let mut out = cond.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = T::lit((v.as_f64() - self.mean[j]) * self.inv_std[j]);
            }
        }
        out
    }
}

/// One training example with its noise draw fixed.
#[derive(Debug, Clone)]
pub struct Draw<T: Scalar> {
    pub x0: Array2<T>,
    pub cond: Array2<T>,
    pub tau: usize,
    /// Schedule value at `tau`.
    pub alpha: f64,
    pub eps: Array2<T>,
}

/// Sinusoidal features of a scalar position, `[sin(p·f_i) | cos(p·f_i)]`.
pub fn sinusoidal(pos: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

struct BlockIds {
    modulation: (usize, usize),
    qkv: (usize, usize),
    proj: (usize, usize),
    mlp1: (usize, usize),
    mlp2: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Denoiser<T: Scalar> {
    pub config: DenoiserConfig,
    pub params: ParamSet<T>,
    pub cond_norm: CondNormalizer,
    positions: Array2<T>,
}

/// Deterministic initialization; the output projection starts at zero.
pub fn init_params<T: Scalar>(config: &DenoiserConfig) -> Result<ParamSet<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.latent_dim;
    let (f, c, r) = (config.features, config.cond_dim, config.mlp_ratio);
    let mut p = ParamSet::default();
    let mut linear = |p: &mut ParamSet<T>, name: &str, i: usize, o: usize| {
        p.push(format!("{name}.w"), glorot(&mut rng, i, o, i, o));
        p.push(format!("{name}.b"), Array2::zeros((1, o)));
    };
    linear(&mut p, "input.0", f + c, 2 * d);
    linear(&mut p, "input.1", 2 * d, d);
    linear(&mut p, "time.0", d, d);
    linear(&mut p, "time.1", d, d);
    for l in 0..config.layers {
        linear(&mut p, &format!("block{l}.modulation"), d, 6 * d);
        linear(&mut p, &format!("block{l}.qkv"), d, 3 * d);
        linear(&mut p, &format!("block{l}.proj"), d, d);
        linear(&mut p, &format!("block{l}.mlp.0"), d, r * d);
        linear(&mut p, &format!("block{l}.mlp.1"), r * d, d);
    }
    linear(&mut p, "final.modulation", d, 2 * d);
    p.push("output.w", Array2::zeros((d, f)));
    p.push("output.b", Array2::zeros((1, f)));
    Ok(p)
}

impl<T: Scalar> Denoiser<T> {
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        let params = init_params(&config)?;
        let norm = CondNormalizer::identity(config.cond_dim);
        Self::from_parts(config, params, norm)
    }

    pub fn from_parts(config: DenoiserConfig, params: ParamSet<T>, cond_norm: CondNormalizer) -> Result<Self> {
        config.validate()?;
        let reference = init_params::<f32>(&DenoiserConfig { seed: 0, ..config.clone() })?;
        if params.len() != reference.len()
            || params.tensors.iter().zip(&reference.tensors).any(|(a, b)| a.dim() != b.dim())
        {
            return Err(Error::ShapeMismatch("denoiser parameters do not match the config".into()));
        }
        if cond_norm.mean.len() != config.cond_dim || cond_norm.inv_std.len() != config.cond_dim {
            return Err(Error::ShapeMismatch("condition normalizer width".into()));
        }
        let d = config.latent_dim;
        let positions = Array2::from_shape_fn((config.frames, d), |(t, j)| T::lit(sinusoidal(t as f64, d)[j]));
        Ok(Self { config, params, cond_norm, positions })
    }

    fn check_shapes(&self, x: &Array2<T>, cond: &Array2<T>) -> Result<()> {
        let c = &self.config;
        if x.dim() != (c.frames, c.features) || cond.dim() != (c.frames, c.cond_dim) {
            return Err(Error::ShapeMismatch(format!(
                "expected x {:?} and cond {:?}, got {:?} and {:?}",
                (c.frames, c.features),
                (c.frames, c.cond_dim),
                x.dim(),
                cond.dim()
            )));
        }
        Ok(())
    }

    fn forward<'a>(&'a self, tape: &mut Tape<'a, T>, p: &[Var], x: &Array2<T>, cond: &Array2<T>, tau: usize) -> Var {
        let cfg = &self.config;
        let d = cfg.latent_dim;
        let dh = d / cfg.heads;
        let lin = |tape: &mut Tape<'a, T>, x: Var, at: usize| tape.linear(x, p[at], p[at + 1]);

        let xin = tape.constant(x.clone());
        let cin = tape.constant(self.cond_norm.apply(cond));
        let inp = tape.concat_cols(&[xin, cin]);
        let h = lin(tape, inp, 0);
        let h = tape.silu(h);
        let h = lin(tape, h, 2);
        let pos = tape.constant_ref(&self.positions);
        let mut h = tape.add(h, pos);

        let temb = sinusoidal(tau as f64, d);
        let temb = tape.constant(Array2::from_shape_fn((1, d), |(_, j)| T::lit(temb[j])));
        let e = lin(tape, temb, 4);
        let e = tape.silu(e);
        let e = lin(tape, e, 6);
        let se = tape.silu(e);

        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let mut at = 8;
        for _ in 0..cfg.layers {
            let ids = BlockIds {
                modulation: (at, at + 1),
                qkv: (at + 2, at + 3),
                proj: (at + 4, at + 5),
                mlp1: (at + 6, at + 7),
                mlp2: (at + 8, at + 9),
            };
            at += 10;
            let m = tape.linear(se, p[ids.modulation.0], p[ids.modulation.1]);
            let chunk = |tape: &mut Tape<'a, T>, k: usize| tape.slice_cols(m, k * d, (k + 1) * d);
            let (shift1, scale1, gate1) = (chunk(tape, 0), chunk(tape, 1), chunk(tape, 2));
            let (shift2, scale2, gate2) = (chunk(tape, 3), chunk(tape, 4), chunk(tape, 5));

            let a = modulate(tape, h, shift1, scale1);
            let qkv = tape.linear(a, p[ids.qkv.0], p[ids.qkv.1]);
            let mut heads = Vec::with_capacity(cfg.heads);
            for hd in 0..cfg.heads {
                let q = tape.slice_cols(qkv, hd * dh, (hd + 1) * dh);
                let k = tape.slice_cols(qkv, d + hd * dh, d + (hd + 1) * dh);
                let v = tape.slice_cols(qkv, 2 * d + hd * dh, 2 * d + (hd + 1) * dh);
                let s = tape.matmul_t(q, k);
                let s = tape.scale(s, scale);
                let w = tape.softmax_rows(s);
                heads.push(tape.matmul(w, v));
            }
            let o = tape.concat_cols(&heads);
            let o = tape.linear(o, p[ids.proj.0], p[ids.proj.1]);
            let o = tape.mul_row(o, gate1);
            h = tape.add(h, o);

            let a = modulate(tape, h, shift2, scale2);
            let u = tape.linear(a, p[ids.mlp1.0], p[ids.mlp1.1]);
            let u = tape.silu(u);
            let u = tape.linear(u, p[ids.mlp2.0], p[ids.mlp2.1]);
            let u = tape.mul_row(u, gate2);
            h = tape.add(h, u);
        }
        let m = tape.linear(se, p[at], p[at + 1]);
        let shift = tape.slice_cols(m, 0, d);
        let sc = tape.slice_cols(m, d, 2 * d);
        let y = modulate(tape, h, shift, sc);
        tape.linear(y, p[at + 2], p[at + 3])
    }

    /// Predict the clean window from a noisy one at step `tau`.
    pub fn denoise(&self, x_tau: &Array2<T>, cond: &Array2<T>, tau: usize) -> Result<Array2<T>> {
        self.check_shapes(x_tau, cond)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &p, x_tau, cond, tau);
        let v = tape.value(out).clone();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss);
        }
        Ok(v)
    }

    /// Several windows at once; each item is independent.
    pub fn denoise_batch(&self, items: &[(Array2<T>, Array2<T>, usize)]) -> Result<Vec<Array2<T>>> {
        items.par_iter().map(|(x, c, t)| self.denoise(x, c, *t)).collect()
    }

    fn item_loss_and_grad(&self, draw: &Draw<T>, with_grad: bool) -> Result<(T, Option<ParamSet<T>>)> {
        self.check_shapes(&draw.x0, &draw.cond)?;
        let x = diffuse_with_alpha(&draw.x0, &draw.eps, draw.alpha);
        let mut tape = Tape::new();
        let p = if with_grad { self.params.bind(&mut tape) } else { self.params.bind_frozen(&mut tape) };
        let out = self.forward(&mut tape, &p, &x, &draw.cond, draw.tau);
        let loss = tape.mse(out, draw.x0.clone());
        let value = tape.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        if !with_grad {
            return Ok((value, None));
        }
        let mut grads = tape.backward(loss);
        Ok((value, Some(self.params.collect_grads(&mut grads, &p))))
    }

    /// Mean loss and gradient over draws with fixed `(τ, ε)`.
    pub fn loss_and_grad_fixed(&self, draws: &[Draw<T>]) -> Result<(T, ParamSet<T>)> {
        if draws.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let parts: Vec<(T, Option<ParamSet<T>>)> =
            draws.par_iter().map(|d| self.item_loss_and_grad(d, true)).collect::<Result<_>>()?;
        let n = T::lit(draws.len() as f64);
        let mut total = T::zero();
        let mut grad = self.params.zeros_like();
        for (l, g) in parts {
            total += l;
            grad.add_assign(&g.expect("gradient requested"));
        }
        grad.scale(T::one() / n);
        Ok((total / n, grad))
    }

    /// Mean loss over fixed draws, forward only.
    pub fn loss_fixed(&self, draws: &[Draw<T>]) -> Result<T> {
        if draws.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let parts: Vec<T> = draws
            .par_iter()
            .map(|d| self.item_loss_and_grad(d, false).map(|r| r.0))
            .collect::<Result<_>>()?;
        Ok(parts.into_iter().sum::<T>() / T::lit(draws.len() as f64))
    }

    /// Draw `(τ, ε)` for each `(x0, cond)` pair, then evaluate loss and gradient.
    pub fn loss_and_grad<R: rand::Rng + ?Sized>(
        &self,
        batch: &[(Array2<T>, Array2<T>)],
        rng: &mut R,
        sched: &DiffusionSchedule,
    ) -> Result<(T, ParamSet<T>)> {
        let draws = draw_batch(batch, rng, sched);
        self.loss_and_grad_fixed(&draws)
    }
}

impl<T: Scalar> X0Predictor<T> for Denoiser<T> {
    fn predict(&self, x_tau: &Array2<T>, cond: &Array2<T>, tau: usize) -> Result<Array2<T>> {
        self.denoise(x_tau, cond, tau)
    }
}

/// Fix the noise draws of a batch.
pub fn draw_batch<T: Scalar, R: rand::Rng + ?Sized>(
    batch: &[(Array2<T>, Array2<T>)],
    rng: &mut R,
    sched: &DiffusionSchedule,
) -> Vec<Draw<T>> {
    batch
        .iter()
        .map(|(x0, cond)| {
            let (tau, eps, _) = training_draw(x0, sched, rng);
            Draw { x0: x0.clone(), cond: cond.clone(), tau, alpha: sched.alpha(tau), eps }
        })
        .collect()
}

fn modulate<'a, T: Scalar>(tape: &mut Tape<'a, T>, h: Var, shift: Var, scale: Var) -> Var {
    let n = tape.layer_norm(h);
    let s1 = tape.add_scalar(scale, T::one());
    let n = tape.mul_row(n, s1);
    tape.add_row(n, shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_schedule, gaussian, ScheduleKind};
    use rand_distr::{Distribution, Uniform};

    fn small(frames: usize) -> DenoiserConfig {
        DenoiserConfig { latent_dim: 16, layers: 1, heads: 2, mlp_ratio: 2, features: 6, cond_dim: 5, ..DenoiserConfig::toy(frames, 0) }
    }

    fn randomized(cfg: DenoiserConfig, seed: u64) -> Denoiser<f64> {
        let mut m = Denoiser::<f64>::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-0.3, 0.3).unwrap();
        for t in m.params.tensors.iter_mut() {
            t.mapv_inplace(|_| u.sample(&mut rng));
        }
        m
    }

    #[test]
    fn param_count_matches_shapes() {
        let cfg = DenoiserConfig::toy(240, 768);
        let p = init_params::<f32>(&cfg).unwrap();
        assert_eq!(p.count(), cfg.param_count());
        assert_eq!(p, init_params::<f32>(&cfg).unwrap());
        let bad = DenoiserConfig { heads: 5, ..cfg };
        assert!(matches!(init_params::<f32>(&bad), Err(Error::BadConfig(_))));
    }

    #[test]
    fn fresh_model_predicts_zero() {
        let cfg = small(5);
        let m = Denoiser::<f64>::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Array2<f64> = gaussian(&mut rng, (5, 6));
        let c: Array2<f64> = gaussian(&mut rng, (5, 5));
        assert!(m.denoise(&x, &c, 17).unwrap().iter().all(|v| *v == 0.0));
        assert!(matches!(m.denoise(&x, &gaussian(&mut rng, (4, 5)), 1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn frame_order_matters_and_batches_agree() {
        let m = randomized(small(6), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Array2<f64> = gaussian(&mut rng, (6, 6));
        let c: Array2<f64> = gaussian(&mut rng, (6, 5));
        let y = m.denoise(&x, &c, 100).unwrap();
        let perm = [2, 0, 5, 1, 4, 3];
        let xp = Array2::from_shape_fn((6, 6), |(i, j)| x[[perm[i], j]]);
        let cp = Array2::from_shape_fn((6, 5), |(i, j)| c[[perm[i], j]]);
        let yp = m.denoise(&xp, &cp, 100).unwrap();
        let unpermuted = Array2::from_shape_fn((6, 6), |(i, j)| yp[[perm.iter().position(|&p| p == i).unwrap(), j]]);
        assert!((&unpermuted - &y).iter().any(|d| d.abs() > 1e-6));
        let both = m.denoise_batch(&[(x.clone(), c.clone(), 100), (x.clone(), c.clone(), 100)]).unwrap();
        assert_eq!(both[0], both[1]);
        assert_eq!(both[0], y);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = randomized(small(3), 5);
        let sched = build_schedule(100, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<_> = (0..2).map(|_| (gaussian(&mut rng, (3, 6)), gaussian(&mut rng, (3, 5)))).collect();
        let draws = draw_batch(&batch, &mut rng, &sched);
        let (_, g) = m.loss_and_grad_fixed(&draws).unwrap();
        let mut probe = m.clone();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..probe.params.count() {
            let base = probe.params.flat_get(k);
            probe.params.flat_set(k, base + h);
            let lp = probe.loss_fixed(&draws).unwrap();
            probe.params.flat_set(k, base - h);
            let lm = probe.loss_fixed(&draws).unwrap();
            probe.params.flat_set(k, base);
            let fd = (lp - lm) / (2.0 * h);
            let an = g.flat_get(k);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn mean_reduction_and_zero_signal() {
        let m = randomized(small(3), 8);
        let sched = build_schedule(100, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<_> = (0..2).map(|_| (gaussian(&mut rng, (3, 6)), gaussian(&mut rng, (3, 5)))).collect();
        let draws = draw_batch(&batch, &mut rng, &sched);
        let doubled: Vec<_> = draws.iter().chain(draws.iter()).cloned().collect();
        let (l1, g1) = m.loss_and_grad_fixed(&draws).unwrap();
        let (l2, g2) = m.loss_and_grad_fixed(&doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
            assert!((a - b).iter().all(|d| d.abs() < 1e-12));
        }
        // fresh model predicts zero; a zero target gives no signal
        let fresh = Denoiser::<f64>::new(small(3)).unwrap();
        let zero = vec![(Array2::zeros((3, 6)), gaussian(&mut rng, (3, 5)))];
        let (l, g) = fresh.loss_and_grad(&zero, &mut rng, &sched).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.norm() < 1e-12);
    }
}
