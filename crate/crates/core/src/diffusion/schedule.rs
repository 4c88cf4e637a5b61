//! Noise schedules and the closed-form forward/reverse updates.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

/// Cumulative signal retention `alpha[0..=S]`, from 1 (clean) down to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub kind: ScheduleKind,
}

pub fn build_schedule(steps: usize, kind: ScheduleKind) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::BadStepCount(format!("schedule needs at least 2 steps, got {steps}")));
    }
    let n = steps as f64;
    let mut alpha: Vec<f64> = match kind {
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| ((t / n + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            let f0 = f(0.0);
            (0..=steps).map(|t| f(t as f64) / f0).collect()
        }
        ScheduleKind::Linear => {
            let (b0, b1) = (1e-4 * 1000.0 / n, 0.02 * 1000.0 / n);
            let mut acc = 1.0;
            let mut out = vec![1.0];
            for t in 1..=steps {
                let beta = (b0 + (b1 - b0) * (t - 1) as f64 / (n - 1.0)).min(0.999);
                acc *= 1.0 - beta;
                out.push(acc);
            }
            out
        }
    };
    alpha[0] = 1.0;
    alpha[steps] = 0.0;
    for t in 1..=steps {
        if alpha[t] >= alpha[t - 1] {
            return Err(Error::BadStepCount(format!("schedule is not strictly decreasing at step {t}")));
        }
    }
    Ok(DiffusionSchedule { steps, alpha, kind })
}

impl DiffusionSchedule {
    pub fn alpha(&self, tau: usize) -> f64 {
        self.alpha[tau]
    }
}

/// `√α·x0 + √(1−α)·ε`.
pub fn forward_diffuse<T: Scalar>(
    x0: &Array2<T>,
    tau: usize,
    eps: &Array2<T>,
    sched: &DiffusionSchedule,
) -> Result<Array2<T>> {
    if x0.dim() != eps.dim() {
        return Err(Error::ShapeMismatch(format!("x0 {:?} vs noise {:?}", x0.dim(), eps.dim())));
    }
    if tau > sched.steps {
        return Err(Error::BadStepPair { tau, tau_prev: tau });
    }
    Ok(diffuse_with_alpha(x0, eps, sched.alpha(tau)))
}

/// Forward noising with an explicit schedule value.
pub fn diffuse_with_alpha<T: Scalar>(x0: &Array2<T>, eps: &Array2<T>, alpha: f64) -> Array2<T> {
    let (a, b) = (T::lit(alpha.sqrt()), T::lit((1.0 - alpha).sqrt()));
    if alpha == 1.0 {
        return x0.clone();
    }
    if alpha == 0.0 {
        return eps.clone();
    }
    let mut out = x0.clone();
    Zip::from(&mut out).and(eps).for_each(|o, &e| *o = a * *o + b * e);
    out
}

/// Variance and direction coefficient of one reverse transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseCoeffs {
    pub sigma2: f64,
    pub c: f64,
    pub alpha: f64,
    pub alpha_prev: f64,
}

/// Coefficients for cumulative retentions `alpha` (current) and
/// `alpha_prev` (target). `eta` scales σ; 1 is the stochastic update, 0 the
/// deterministic one.
pub fn coeffs_from_alphas(alpha: f64, alpha_prev: f64, eta: f64) -> ReverseCoeffs {
    let sigma2 = eta * eta * (1.0 - alpha / alpha_prev) * (1.0 - alpha_prev) / (1.0 - alpha);
    let c = (1.0 - alpha_prev - sigma2).max(0.0).sqrt();
    ReverseCoeffs { sigma2: sigma2.max(0.0), c, alpha, alpha_prev }
}

pub fn reverse_coeffs(sched: &DiffusionSchedule, tau: usize, tau_prev: usize, eta: f64) -> Result<ReverseCoeffs> {
    if tau <= tau_prev || tau > sched.steps || sched.alpha(tau) >= 1.0 {
        return Err(Error::BadStepPair { tau, tau_prev });
    }
    Ok(coeffs_from_alphas(sched.alpha(tau), sched.alpha(tau_prev), eta))
}

/// `√α_prev·x̂0 + c·(x − √α·x̂0)/√(1−α) + σ·noise`. Terms with a zero
/// coefficient are skipped, so a deterministic final step returns `x̂0`
/// bit for bit.
pub fn reverse_step<T: Scalar>(
    x_tau: &Array2<T>,
    x0hat: &Array2<T>,
    coeffs: &ReverseCoeffs,
    noise: Option<&Array2<T>>,
) -> Result<Array2<T>> {
    if x_tau.dim() != x0hat.dim() || noise.is_some_and(|n| n.dim() != x_tau.dim()) {
        return Err(Error::ShapeMismatch(format!("x {:?} vs x0hat {:?}", x_tau.dim(), x0hat.dim())));
    }
    let mut out = if coeffs.alpha_prev == 1.0 {
        x0hat.clone()
    } else {
        x0hat.mapv(|v| v * T::lit(coeffs.alpha_prev.sqrt()))
    };
    if coeffs.c > 0.0 {
        let sa = T::lit(coeffs.alpha.sqrt());
        let k = T::lit(coeffs.c / (1.0 - coeffs.alpha).sqrt());
        Zip::from(&mut out).and(x_tau).and(x0hat).for_each(|o, &x, &x0| *o += k * (x - sa * x0));
    }
    if coeffs.sigma2 > 0.0 {
        if let Some(n) = noise {
            let s = T::lit(coeffs.sigma2.sqrt());
            Zip::from(&mut out).and(n).for_each(|o, &e| *o += s * e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn endpoints_and_monotonicity() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for s in [2, 3, 10, 1000] {
                let sch = build_schedule(s, kind).unwrap();
                assert_eq!(sch.alpha.len(), s + 1);
                assert!((sch.alpha[0] - 1.0).abs() < 1e-12);
                assert_eq!(sch.alpha[s], 0.0);
                assert!(sch.alpha.windows(2).all(|w| w[1] < w[0]));
            }
        }
        assert!(matches!(build_schedule(1, ScheduleKind::Cosine), Err(Error::BadStepCount(_))));
    }

    #[test]
    fn forward_cases() {
        let sch = build_schedule(10, ScheduleKind::Cosine).unwrap();
        let x0 = array![[1.0, -2.0]];
        let eps = array![[0.3, 0.7]];
        assert_eq!(forward_diffuse(&x0, 0, &eps, &sch).unwrap(), x0);
        assert_eq!(forward_diffuse(&x0, 10, &eps, &sch).unwrap(), eps);
        let v = diffuse_with_alpha(&array![[2.0]], &array![[1.0]], 0.25)[[0, 0]];
        assert!((v - (1.0 + 0.75f64.sqrt())).abs() < 1e-15);
        assert!((v - 1.8660).abs() < 1e-4);
        assert!(forward_diffuse(&x0, 1, &array![[1.0]], &sch).is_err());
    }

    #[test]
    fn coefficient_arithmetic() {
        let c = coeffs_from_alphas(0.25, 0.5, 1.0);
        assert!((c.sigma2 - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.c - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
        let d = coeffs_from_alphas(0.25, 0.5, 0.0);
        assert_eq!(d.sigma2, 0.0);
        assert!((d.c - 0.5f64.sqrt()).abs() < 1e-15);
        let tiny = coeffs_from_alphas(0.5 - 1e-9, 0.5, 1.0);
        assert!(tiny.sigma2 > 0.0 && tiny.sigma2 < 1e-8);
    }

    #[test]
    fn bad_pairs() {
        let sch = build_schedule(10, ScheduleKind::Cosine).unwrap();
        assert!(matches!(reverse_coeffs(&sch, 3, 3, 1.0), Err(Error::BadStepPair { .. })));
        assert!(matches!(reverse_coeffs(&sch, 0, 0, 1.0), Err(Error::BadStepPair { .. })));
        assert!(reverse_coeffs(&sch, 10, 0, 1.0).is_ok());
    }

    #[test]
    fn clamp_keeps_c_real_for_all_pairs() {
        let sch = build_schedule(1000, ScheduleKind::Cosine).unwrap();
        for tau in 1..=1000 {
            let c = reverse_coeffs(&sch, tau, tau - 1, 1.0).unwrap();
            assert!(c.c >= 0.0 && c.c.is_finite() && c.sigma2 >= 0.0);
        }
    }

    #[test]
    fn deterministic_step_preserves_noise() {
        let sch = build_schedule(100, ScheduleKind::Cosine).unwrap();
        let x0: Array2<f64> = array![[0.4, -1.3, 2.0]];
        let eps = array![[1.1, 0.2, -0.7]];
        let x = forward_diffuse(&x0, 60, &eps, &sch).unwrap();
        let c = reverse_coeffs(&sch, 60, 35, 0.0).unwrap();
        let prev = reverse_step(&x, &x0, &c, None).unwrap();
        let want = forward_diffuse(&x0, 35, &eps, &sch).unwrap();
        for (a, b) in prev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let last = reverse_step(&prev, &x0, &reverse_coeffs(&sch, 35, 0, 0.0).unwrap(), None).unwrap();
        assert_eq!(last, x0);
    }
}
