//! Stride and sampling-step sweeps: quality, throughput and call accounting.

use std::fmt;

use ndarray::s;
use serde::{Deserialize, Serialize};

use super::pipeline::{generate_sequence, Ablation, Generated, PreparedSequence};
use crate::diffusion::{strided_plan, DiffusionSchedule, X0Predictor};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, EvalOptions, EvalSequence, LatentEvalModel};
use crate::scalar::Scalar;
use crate::streaming::{latency, SessionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub stride: usize,
    pub sample_steps: usize,
    pub mpjpe_cm: f64,
    pub hand_pe_cm: f64,
    /// Present when a latent eval model was supplied.
    pub fid: Option<f64>,
    /// Frames scored, on the range every row of the sweep covers.
    pub scored_frames: usize,
    /// Frames generated and the denoiser calls spent on them.
    pub frames: usize,
    pub denoiser_calls: usize,
    pub calls_per_frame: f64,
    pub frames_per_s: f64,
    pub latency_s: f64,
}

/// A sweep's rows, printable as a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, stride: usize, sample_steps: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.stride == stride && r.sample_steps == sample_steps)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>6} {:>6} {:>10} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10}",
            "h", "steps", "mpjpe_cm", "hand_cm", "fid", "frames", "calls/f", "fps", "latency_s"
        )?;
        for r in &self.rows {
            let fid = r.fid.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:>6} {:>6} {:>10.3} {:>10.3} {:>10} {:>8} {:>10.4} {:>10.1} {:>10.4}",
                r.stride, r.sample_steps, r.mpjpe_cm, r.hand_pe_cm, fid, r.frames, r.calls_per_frame, r.frames_per_s, r.latency_s
            )?;
        }
        Ok(())
    }
}

struct Run<T: Scalar> {
    stride: usize,
    sample_steps: usize,
    outputs: Vec<Generated<T>>,
}

fn run_all<T: Scalar, D: X0Predictor<T>>(
    model: &D,
    seqs: &[PreparedSequence<T>],
    session: &SessionConfig,
    sched: &DiffusionSchedule,
    stride: usize,
    sample_steps: usize,
) -> Result<Run<T>> {
    let plan = strided_plan(sched.steps, sample_steps)?;
    let cfg = SessionConfig { stride, ..session.clone() };
    let outputs = seqs
        .iter()
        .map(|seq| generate_sequence(model, seq, cfg.clone(), sched, &plan, Ablation::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Run { stride, sample_steps, outputs })
}

fn score<T: Scalar, E: Scalar>(
    runs: &[Run<T>],
    seqs: &[PreparedSequence<T>],
    model: Option<&LatentEvalModel<E>>,
    dt: f64,
) -> Result<BenchReport> {
    // common local frame range of every run, per sequence
    let mut ranges = Vec::with_capacity(seqs.len());
    for k in 0..seqs.len() {
        let start = runs.iter().map(|r| r.outputs[k].first_frame).max().unwrap_or(0);
        let end = runs.iter().map(|r| r.outputs[k].first_frame + r.outputs[k].frames()).min().unwrap_or(0);
        ranges.push((start, end.max(start)));
    }
    let scored: Vec<usize> = (0..seqs.len()).filter(|&k| ranges[k].0 < ranges[k].1).collect();
    if scored.is_empty() {
        return Err(Error::TooShort { need: 1, got: 0 });
    }
    let gts = scored
        .iter()
        .map(|&k| seqs[k].ground_truth(ranges[k].0, ranges[k].1 - ranges[k].0))
        .collect::<Result<Vec<_>>>()?;
    let eval_seqs: Vec<_> = scored.iter().zip(&gts).map(|(&k, gt)| EvalSequence { gt, skeleton: &seqs[k].skeleton }).collect();
    let opts = EvalOptions { fps: 1.0 / dt, ..EvalOptions::default() };
    let mut rows = Vec::new();
    for run in runs {
        let preds = scored
            .iter()
            .map(|&k| {
                let out = &run.outputs[k];
                let (a, b) = ranges[k];
                seqs[k].stitch(&out.rotations.slice(s![a - out.first_frame..b - out.first_frame, ..]).to_owned(), a)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = evaluate_run(&[preds], &eval_seqs, model, &opts)?;
        let frames: usize = run.outputs.iter().map(|o| o.frames()).sum();
        let calls: usize = run.outputs.iter().map(|o| o.denoiser_calls).sum();
        let seconds: f64 = run.outputs.iter().map(|o| o.seconds).sum();
        rows.push(BenchRow {
            stride: run.stride,
            sample_steps: run.sample_steps,
            mpjpe_cm: m.mpjpe_cm.mean,
            hand_pe_cm: m.hand_pe_cm.mean,
            fid: m.fid.map(|s| s.mean),
            scored_frames: gts.iter().map(|g| g.frames()).sum(),
            frames,
            denoiser_calls: calls,
            calls_per_frame: calls as f64 / frames.max(1) as f64,
            frames_per_s: frames as f64 / seconds.max(1e-12),
            latency_s: latency(run.stride, dt),
        });
    }
    Ok(BenchReport { rows })
}

/// One row per stride at the given sampling steps. FID is reported when
/// `eval_model` is given.
pub fn stride_sweep<T: Scalar, E: Scalar, D: X0Predictor<T>>(
    model: &D,
    seqs: &[PreparedSequence<T>],
    session: &SessionConfig,
    sched: &DiffusionSchedule,
    sample_steps: usize,
    strides: &[usize],
    eval_model: Option<&LatentEvalModel<E>>,
) -> Result<BenchReport> {
    let runs = strides
        .iter()
        .map(|&h| run_all(model, seqs, session, sched, h, sample_steps))
        .collect::<Result<Vec<_>>>()?;
    score(&runs, seqs, eval_model, session.dt)
}

/// One row per number of reverse steps at the session's stride.
pub fn steps_sweep<T: Scalar, E: Scalar, D: X0Predictor<T>>(
    model: &D,
    seqs: &[PreparedSequence<T>],
    session: &SessionConfig,
    sched: &DiffusionSchedule,
    steps: &[usize],
    eval_model: Option<&LatentEvalModel<E>>,
) -> Result<BenchReport> {
    let runs = steps
        .iter()
        .map(|&n| run_all(model, seqs, session, sched, session.stride, n))
        .collect::<Result<Vec<_>>>()?;
    score(&runs, seqs, eval_model, session.dt)
}
