//! Strided reverse sampling with an optional per-step hook on `x̂0`, and the
//! x0-prediction training objective.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::schedule::{diffuse_with_alpha, reverse_coeffs, reverse_step, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Anything that maps `(x_τ, cond, τ)` to a clean-window estimate.
pub trait X0Predictor<T: Scalar> {
    fn predict(&self, x_tau: &Array2<T>, cond: &Array2<T>, tau: usize) -> Result<Array2<T>>;
}

impl<T: Scalar, F> X0Predictor<T> for F
where
    F: Fn(&Array2<T>, &Array2<T>, usize) -> Result<Array2<T>>,
{
    fn predict(&self, x_tau: &Array2<T>, cond: &Array2<T>, tau: usize) -> Result<Array2<T>> {
        self(x_tau, cond, tau)
    }
}

/// Descending step indices starting at `S`; each step transitions to the
/// next one and the last one to 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StridedPlan {
    pub steps: Vec<usize>,
}

impl StridedPlan {
    /// `(τ, τ_prev)` for every reverse transition.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.steps.get(i + 1).copied().unwrap_or(0)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `sbar` evenly spaced steps `round(S·(sbar − i)/sbar)`, `i = 0..sbar`.
pub fn strided_plan(total: usize, sbar: usize) -> Result<StridedPlan> {
    if sbar == 0 || sbar > total {
        return Err(Error::BadStepCount(format!("need 1 <= steps <= {total}, got {sbar}")));
    }
    let steps = (0..sbar)
        .map(|i| ((total as f64) * (sbar - i) as f64 / sbar as f64).round() as usize)
        .collect();
    Ok(StridedPlan { steps })
}

pub fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize)) -> Array2<T> {
    Array2::from_shape_simple_fn(shape, || {
        let v: f64 = StandardNormal.sample(rng);
        T::lit(v)
    })
}

/// Everything the reverse loop needs besides the denoiser.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    pub sched: &'a DiffusionSchedule,
    pub plan: &'a StridedPlan,
    pub eta: f64,
}

impl Sampler<'_> {
    /// Run the plan from `x_S ~ N(0, I)` of `shape`. `denoise(x_τ, τ)`
    /// returns `x̂0`; `hook` may rewrite `x̂0` before every reverse step.
    pub fn sample<T, R, D, H>(&self, shape: (usize, usize), rng: &mut R, mut denoise: D, mut hook: H) -> Result<Array2<T>>
    where
        T: Scalar,
        R: Rng + ?Sized,
        D: FnMut(&Array2<T>, usize) -> Result<Array2<T>>,
        H: FnMut(&mut Array2<T>),
    {
        let mut x: Array2<T> = gaussian(rng, shape);
        for (tau, prev) in self.plan.pairs() {
            let mut x0hat = denoise(&x, tau)?;
            if x0hat.dim() != shape {
                return Err(Error::ShapeMismatch(format!("denoiser returned {:?}, expected {shape:?}", x0hat.dim())));
            }
            hook(&mut x0hat);
            let coeffs = reverse_coeffs(self.sched, tau, prev, self.eta)?;
            let noise = (coeffs.sigma2 > 0.0).then(|| gaussian(rng, shape));
            x = reverse_step(&x, &x0hat, &coeffs, noise.as_ref())?;
        }
        Ok(x)
    }
}

/// Draw `τ ~ U{1..S}` and unit noise; returns `(τ, ε, x_τ)`.
pub fn training_draw<T: Scalar, R: Rng + ?Sized>(
    x0: &Array2<T>,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> (usize, Array2<T>, Array2<T>) {
    let tau = rng.random_range(1..=sched.steps);
    let eps = gaussian(rng, x0.dim());
    let x = diffuse_with_alpha(x0, &eps, sched.alpha(tau));
    (tau, eps, x)
}

/// One Monte-Carlo draw of the x0-prediction loss, mean over all elements.
pub fn training_loss<T, R, D>(mut denoise: D, x0: &Array2<T>, sched: &DiffusionSchedule, rng: &mut R) -> Result<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    D: FnMut(&Array2<T>, usize) -> Result<Array2<T>>,
{
    let (tau, _, x) = training_draw(x0, sched, rng);
    let pred = denoise(&x, tau)?;
    if pred.dim() != x0.dim() {
        return Err(Error::ShapeMismatch(format!("denoiser returned {:?}, expected {:?}", pred.dim(), x0.dim())));
    }
    let n = T::lit(x0.len() as f64);
    Ok(pred.iter().zip(x0).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{build_schedule, coeffs_from_alphas, ScheduleKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plan_spacing() {
        let p = strided_plan(1000, 20).unwrap();
        assert_eq!(p.steps, (1..=20).rev().map(|i| i * 50).collect::<Vec<_>>());
        assert_eq!(p.pairs().last(), Some(&(50, 0)));
        assert_eq!(strided_plan(10, 10).unwrap().steps, (1..=10).rev().collect::<Vec<_>>());
        assert_eq!(strided_plan(1000, 1).unwrap().pairs(), vec![(1000, 0)]);
        assert!(strided_plan(10, 0).is_err() && strided_plan(10, 11).is_err());
        let odd = strided_plan(1000, 80).unwrap();
        assert_eq!(odd.len(), 80);
        assert!(odd.steps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn oracle_denoiser_telescopes() {
        let sched = build_schedule(1000, ScheduleKind::Cosine).unwrap();
        let target = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        for sbar in [1, 5, 20] {
            let plan = strided_plan(1000, sbar).unwrap();
            let s = Sampler { sched: &sched, plan: &plan, eta: 0.0 };
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let out = s.sample((4, 3), &mut rng, |_, _| Ok(target.clone()), |_| {}).unwrap();
            assert_eq!(out, target);
        }
    }

    #[test]
    fn noop_hook_and_seed_determinism() {
        let sched = build_schedule(100, ScheduleKind::Cosine).unwrap();
        let plan = strided_plan(100, 10).unwrap();
        let s = Sampler { sched: &sched, plan: &plan, eta: 1.0 };
        let den = |x: &Array2<f64>, t: usize| Ok(x.mapv(|v| 0.5 * v + t as f64 * 1e-3));
        let a = s.sample((3, 2), &mut ChaCha8Rng::seed_from_u64(4), den, |_| {}).unwrap();
        let b = s.sample((3, 2), &mut ChaCha8Rng::seed_from_u64(4), den, |x| x.mapv_inplace(|v| v)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_variance() {
        let c = coeffs_from_alphas(0.25, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_elem((1, 1), 0.3);
        let x0 = Array2::from_elem((1, 1), -0.2);
        let mean = reverse_step(&x, &x0, &c, None).unwrap()[[0, 0]];
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let e: Array2<f64> = gaussian(&mut rng, (1, 1));
            let d = reverse_step(&x, &x0, &c, Some(&e)).unwrap()[[0, 0]] - mean;
            acc += d * d;
        }
        let var = acc / n as f64;
        assert!((var / c.sigma2 - 1.0).abs() < 0.03, "{var} vs {}", c.sigma2);
    }

    #[test]
    fn loss_cases() {
        let sched = build_schedule(100, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0: Array2<f64> = gaussian(&mut rng, (8, 6));
        let exact = training_loss(|_, _| Ok(x0.clone()), &x0, &sched, &mut rng).unwrap();
        assert_eq!(exact, 0.0);
        let off = training_loss(|_, _| Ok(x0.mapv(|v| v + 1.0)), &x0, &sched, &mut rng).unwrap();
        assert!((off - 1.0).abs() < 1e-12);
        let unit = Array2::from_shape_fn((8, 6), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let mut acc = 0.0;
        for _ in 0..200 {
            acc += training_loss(|x: &Array2<f64>, _| Ok(x.mapv(|_| 0.0)), &unit, &sched, &mut rng).unwrap();
        }
        assert!((acc / 200.0 - 1.0).abs() < 1e-12);
    }
}
