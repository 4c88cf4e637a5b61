//! Per-sequence percentiles and the aggregated metrics report.

use std::fmt;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::distribution::{diversity, diversity_subset, frechet_distance};
use super::eval_ae::{motion_windows, LatentEvalModel};
use super::physical::{floor_penetration, floor_proxy, physicality};
use super::position::{per_frame_error, JointSets};
use crate::error::{Error, Result};
use crate::motion::{Skeleton, WorldMotion};
use crate::scalar::Scalar;

/// Linear-interpolation quantile of one sequence.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// The `q`-quantile of each sequence's per-frame errors, averaged over sequences.
pub fn percentile_report(sequences: &[Vec<f64>], q: f64) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut total = 0.0;
    for s in sequences {
        total += quantile(s, q)?;
    }
    Ok(total / sequences.len() as f64)
}

/// Mean over repetitions, and the population standard deviation when there
/// is more than one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt());
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub repetitions: usize,
    pub mpjpe_cm: Stat,
    pub hand_pe_cm: Stat,
    pub upper_pe_cm: Stat,
    pub lower_pe_cm: Stat,
    pub mpjpe_p95_cm: Stat,
    pub hand_pe_p95_cm: Stat,
    pub fid: Option<Stat>,
    pub diversity: Option<Stat>,
    pub physicality: Stat,
    pub floor_pen_cm: Stat,
}

/// One printed row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub unit: String,
}

impl MetricsReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |name: &str, s: Option<&Stat>, unit: &str| {
            if let Some(s) = s {
                rows.push(MetricRow { name: name.into(), mean: s.mean, std: s.std, unit: unit.into() });
            }
        };
        push("mpjpe", Some(&self.mpjpe_cm), "cm");
        push("hand_pe", Some(&self.hand_pe_cm), "cm");
        push("upper_pe", Some(&self.upper_pe_cm), "cm");
        push("lower_pe", Some(&self.lower_pe_cm), "cm");
        push("mpjpe_p95", Some(&self.mpjpe_p95_cm), "cm");
        push("hand_pe_p95", Some(&self.hand_pe_p95_cm), "cm");
        push("fid", self.fid.as_ref(), "");
        push("diversity", self.diversity.as_ref(), "");
        push("physicality", Some(&self.physicality), "m/s");
        push("floor_pen", Some(&self.floor_pen_cm), "cm");
        rows
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>12} {:>12} unit", "metric", "mean", "std")?;
        for r in self.rows() {
            let std = r.std.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
            writeln!(f, "{:<12} {:>12.4} {:>12} {}", r.name, r.mean, std, r.unit)?;
        }
        Ok(())
    }
}

/// Ground truth for one evaluated sequence.
#[derive(Debug, Clone)]
pub struct EvalSequence<'a> {
    pub gt: &'a WorldMotion<f64>,
    pub skeleton: &'a Skeleton<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub fps: f64,
    pub floor_half_window_s: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { fps: 60.0, floor_half_window_s: 10.0, seed: 0 }
    }
}

struct RepMetrics {
    values: [f64; 8],
    fid: Option<f64>,
    diversity: Option<f64>,
}

fn evaluate_repetition<T: Scalar>(
    preds: &[WorldMotion<f64>],
    seqs: &[EvalSequence<'_>],
    model: Option<&LatentEvalModel<T>>,
    opts: &EvalOptions,
) -> Result<RepMetrics> {
    if preds.len() != seqs.len() {
        return Err(Error::LengthMismatch(format!("{} predictions for {} sequences", preds.len(), seqs.len())));
    }
    let mut sums = [0.0; 4];
    let mut frames = 0usize;
    let (mut p95_all, mut p95_hand) = (Vec::new(), Vec::new());
    let (mut phys, mut pen) = (0.0, 0.0);
    let (mut pred_lat, mut gt_lat) = (Vec::new(), Vec::new());
    for (pred, seq) in preds.iter().zip(seqs) {
        let sets = JointSets::new(seq.skeleton);
        let n = pred.frames();
        let body = per_frame_error(pred, seq.gt, &sets.body)?;
        let hands = per_frame_error(pred, seq.gt, &sets.hands)?;
        let upper = per_frame_error(pred, seq.gt, &sets.upper)?;
        let lower = per_frame_error(pred, seq.gt, &sets.lower)?;
        sums[0] += body.iter().sum::<f64>();
        sums[1] += hands.iter().sum::<f64>();
        sums[2] += upper.iter().sum::<f64>();
        sums[3] += lower.iter().sum::<f64>();
        let floor = floor_proxy(seq.gt, opts.floor_half_window_s, opts.fps);
        phys += physicality(pred, seq.skeleton, &floor, opts.fps)? * n as f64;
        pen += floor_penetration(pred, seq.gt, opts.floor_half_window_s, opts.fps)? * n as f64;
        frames += n;
        p95_all.push(body);
        p95_hand.push(hands);
        if let Some(m) = model {
            let cast = |w: Vec<Array2<f64>>| w.into_iter().map(|a| a.mapv(T::lit)).collect::<Vec<_>>();
            pred_lat.push(m.encode_all(&cast(motion_windows(pred, m.config.window)))?);
            gt_lat.push(m.encode_all(&cast(motion_windows(seq.gt, m.config.window)))?);
        }
    }
    if frames == 0 {
        return Err(Error::EmptySequence);
    }
    let f = frames as f64;
    let (mut fid, mut div) = (None, None);
    if model.is_some() {
        let stack = |v: &[Array2<f64>]| {
            let views: Vec<_> = v.iter().map(|a| a.view()).collect();
            concatenate(Axis(0), &views).expect("equal latent widths")
        };
        let (pl, gl) = (stack(&pred_lat), stack(&gt_lat));
        if pl.nrows() >= 2 && gl.nrows() >= 2 {
            fid = Some(frechet_distance(&pl, &gl)?.value);
        }
        let subset = diversity_subset(pl.nrows());
        if subset > 0 {
            div = Some(diversity(&pl, subset, opts.seed)?);
        }
    }
    Ok(RepMetrics {
        values: [
            sums[0] / f,
            sums[1] / f,
            sums[2] / f,
            sums[3] / f,
            percentile_report(&p95_all, 0.95)?,
            percentile_report(&p95_hand, 0.95)?,
            phys / f,
            pen / f,
        ],
        fid,
        diversity: div,
    })
}

/// Metrics of every repetition (one prediction per sequence each),
/// aggregated as mean ± std. Latent metrics need an eval model.
pub fn evaluate_run<T: Scalar>(
    repetitions: &[Vec<WorldMotion<f64>>],
    seqs: &[EvalSequence<'_>],
    model: Option<&LatentEvalModel<T>>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if repetitions.is_empty() {
        return Err(Error::EmptySequence);
    }
    let reps: Vec<RepMetrics> =
        repetitions.iter().map(|r| evaluate_repetition(r, seqs, model, opts)).collect::<Result<_>>()?;
    let col = |k: usize| Stat::of(&reps.iter().map(|r| r.values[k]).collect::<Vec<_>>());
    let opt = |get: fn(&RepMetrics) -> Option<f64>| -> Option<Stat> {
        let v: Option<Vec<f64>> = reps.iter().map(get).collect();
        v.map(|v| Stat::of(&v))
    };
    Ok(MetricsReport {
        repetitions: reps.len(),
        mpjpe_cm: col(0),
        hand_pe_cm: col(1),
        upper_pe_cm: col(2),
        lower_pe_cm: col(3),
        mpjpe_p95_cm: col(4),
        hand_pe_p95_cm: col(5),
        fid: opt(|r| r.fid),
        diversity: opt(|r| r.diversity),
        physicality: col(6),
        floor_pen_cm: col(7),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{forward_kinematics, Mat3, SE3Pose, Vec3};
    use ndarray::Array3;

    #[test]
    fn percentile_cases() {
        assert_eq!(percentile_report(&[vec![3.0; 10]], 0.95).unwrap(), 3.0);
        let a: Vec<f64> = (0..=100).map(|i| i as f64 / 10.0).collect(); // p95 = 9.5
        let b: Vec<f64> = (0..=100).map(|i| i as f64 / 5.0).collect(); // p95 = 19
        assert!((percentile_report(&[a.clone(), b.clone()], 0.95).unwrap() - 14.25).abs() < 1e-12);
        assert_eq!(percentile_report(&[a.clone(), b.clone()], 1.0).unwrap(), 15.0);
        assert_eq!(percentile_report(&[a.clone(), b.clone()], 0.0).unwrap(), 0.0);
        let mut last = f64::NEG_INFINITY;
        for q in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let v = percentile_report(&[a.clone(), b.clone()], q).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(matches!(percentile_report(&[], 0.5), Err(Error::EmptySequence)));
        assert!(matches!(percentile_report(&[vec![]], 0.5), Err(Error::EmptySequence)));
        // 10 and 20 as the per-sequence values
        assert_eq!(percentile_report(&[vec![10.0], vec![20.0]], 0.95).unwrap(), 15.0);
    }

    #[test]
    fn stats() {
        let one = Stat::of(&[2.0]);
        assert_eq!(one, Stat { mean: 2.0, std: None });
        let two = Stat::of(&[1.0, 3.0]);
        assert_eq!(two, Stat { mean: 2.0, std: Some(1.0) });
    }

    fn standing(frames: usize, dx: f64) -> WorldMotion<f64> {
        let sk = Skeleton::xsens23();
        let root = SE3Pose::from_translation(Vec3::new(dx, 0.0, 0.96));
        let p = forward_kinematics(&sk, &vec![Mat3::identity(); 23], &root);
        WorldMotion { root: vec![root; frames], positions: Array3::from_shape_fn((frames, 23, 3), |(_, j, k)| p[j][k]) }
    }

    #[test]
    fn repetitions_aggregate() {
        let sk = Skeleton::xsens23();
        let gt = standing(10, 0.0);
        let seqs = [EvalSequence { gt: &gt, skeleton: &sk }];
        let same: Vec<Vec<WorldMotion<f64>>> = (0..8).map(|_| vec![gt.clone()]).collect();
        let r = evaluate_run::<f32>(&same, &seqs, None, &EvalOptions::default()).unwrap();
        assert_eq!(r.mpjpe_cm, Stat { mean: 0.0, std: Some(0.0) });
        assert_eq!(r.floor_pen_cm.mean, 0.0);
        // two repetitions shifted by 1 cm and 3 cm (head moves too, but it is excluded)
        let reps = vec![vec![standing(10, 0.01)], vec![standing(10, 0.03)]];
        let r = evaluate_run::<f32>(&reps, &seqs, None, &EvalOptions::default()).unwrap();
        assert!((r.mpjpe_cm.mean - 2.0).abs() < 1e-9);
        assert!((r.mpjpe_cm.std.unwrap() - 1.0).abs() < 1e-9);
        let single = evaluate_run::<f32>(&reps[..1], &seqs, None, &EvalOptions::default()).unwrap();
        assert_eq!(single.mpjpe_cm.std, None);
    }
}
