//! Glue between bundles and the numeric modules: condition sources,
//! training windows, streaming generation and evaluation.

use ndarray::{s, Array2};

use super::bundle::SequenceBundle;
use crate::conditioning::{pc_latents, voxel_grids, ConditionBlock, ConditionSource, MapMode, PcAutoencoder, SceneIndex};
use crate::denoiser::WindowDataset;
use crate::diffusion::{DiffusionSchedule, StridedPlan, X0Predictor};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, EvalOptions, EvalSequence, LatentEvalModel, MetricsReport};
use crate::motion::{rot6d_to_matrix, stitch_to_head, matrix_to_rot6d, MotionWindow, SE3Pose, Skeleton, WorldMotion, FEATURE_DIM};
use crate::scalar::Scalar;
use crate::streaming::{run_stream, SessionConfig, StreamSession};

/// Flattened voxel grids of every `every`-th frame, for autoencoder training.
pub fn bundle_voxel_grids<T: Scalar>(bundle: &SequenceBundle, mode: MapMode, every: usize) -> Result<Vec<Vec<T>>> {
    let heads: Vec<SE3Pose<T>> = bundle.head_poses()?.into_iter().step_by(every.max(1)).collect();
    let index = SceneIndex::new(bundle.scene_map());
    Ok(voxel_grids(&index, &heads, mode).into_iter().map(|g| g.values).collect())
}

/// Everything needed to condition, and optionally supervise, one sequence.
#[derive(Debug, Clone)]
pub struct PreparedSequence<T: Scalar> {
    pub source: ConditionSource<T>,
    pub skeleton: Skeleton<f64>,
    pub calibration: SE3Pose<f64>,
    pub heads: Vec<SE3Pose<f64>>,
    pub rotations: Option<Array2<T>>,
    pub start_frame: usize,
}

impl<T: Scalar> PreparedSequence<T> {
    pub fn frames(&self) -> usize {
        self.heads.len()
    }

    /// Place rotation rows `frames` (starting at local frame `start`) on the
    /// device trajectory.
    pub fn stitch(&self, rotations: &Array2<T>, start: usize) -> Result<WorldMotion<f64>> {
        let n = rotations.nrows();
        if start + n > self.frames() {
            return Err(Error::LengthMismatch(format!("{n} rows from {start} exceed {} frames", self.frames())));
        }
        let motion = MotionWindow::new(rotations.mapv(|v| v.as_f64()))?;
        stitch_to_head(&motion, &self.heads[start..start + n], &self.skeleton, &self.calibration)
    }

    /// The first `frames` frames only.
    pub fn truncated(&self, frames: usize) -> Self {
        let n = frames.min(self.frames());
        Self {
            source: self.source.truncated(n),
            skeleton: self.skeleton.clone(),
            calibration: self.calibration,
            heads: self.heads[..n].to_vec(),
            rotations: self.rotations.as_ref().map(|r| r.slice(s![0..n, ..]).to_owned()),
            start_frame: self.start_frame,
        }
    }

    /// Ground-truth world motion of frames `start..start + len`.
    pub fn ground_truth(&self, start: usize, len: usize) -> Result<WorldMotion<f64>> {
        let rot = self.rotations.as_ref().ok_or_else(|| Error::MissingArray("rotations".into()))?;
        self.stitch(&rot.slice(s![start..start + len, ..]).to_owned(), start)
    }
}

/// Encode the scene around every head pose (every `latent_every`-th frame,
/// interpolated between) and assemble the condition stream.
pub fn prepare_sequence<T: Scalar>(
    bundle: &SequenceBundle,
    pc_model: &PcAutoencoder<T>,
    mode: MapMode,
    latent_every: usize,
) -> Result<PreparedSequence<T>> {
    let heads_t: Vec<SE3Pose<T>> = bundle.head_poses()?;
    let index = SceneIndex::new(bundle.scene_map());
    let latents = pc_latents(&index, &heads_t, pc_model, mode, latent_every)?;
    let source = ConditionSource::new(heads_t, &bundle.image_stream()?, latents, T::lit(bundle.dt()))?;
    Ok(PreparedSequence {
        source,
        skeleton: bundle.skeleton.clone(),
        calibration: bundle.calibration_pose()?,
        heads: bundle.head_poses()?,
        rotations: bundle.rotations_as(),
        start_frame: bundle.start_frame,
    })
}

/// Training windows of length `frames` every `stride` frames across
/// supervised sequences.
pub struct WindowSet<'a, T: Scalar> {
    seqs: &'a [PreparedSequence<T>],
    index: Vec<(usize, usize)>,
    frames: usize,
}

impl<'a, T: Scalar> WindowSet<'a, T> {
    pub fn new(seqs: &'a [PreparedSequence<T>], frames: usize, stride: usize) -> Result<Self> {
        if stride == 0 || frames == 0 {
            return Err(Error::BadStride("window length and stride must be positive".into()));
        }
        let mut index = Vec::new();
        for (k, seq) in seqs.iter().enumerate() {
            if seq.rotations.is_none() {
                continue;
            }
            let mut start = 0;
            while start + frames <= seq.frames() {
                index.push((k, start));
                start += stride;
            }
        }
        if index.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self { seqs, index, frames })
    }

    /// Condition windows of a spread-out subset, for fitting a normalizer.
    pub fn sample_conditions(&self, count: usize) -> Result<Vec<Array2<T>>> {
        let step = (self.index.len() / count.max(1)).max(1);
        (0..self.index.len()).step_by(step).map(|i| self.window(i).map(|(_, c)| c)).collect()
    }
}

impl<T: Scalar> WindowDataset<T> for WindowSet<'_, T> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn window(&self, i: usize) -> Result<(Array2<T>, Array2<T>)> {
        let (k, start) = self.index[i];
        let seq = &self.seqs[k];
        let rot = seq.rotations.as_ref().expect("indexed sequences are supervised");
        let x0 = rot.slice(s![start..start + self.frames, ..]).to_owned();
        Ok((x0, seq.source.window(start, self.frames)?.data))
    }
}

/// Which condition blocks to blank at inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_image: bool,
    pub no_pc: bool,
}

/// One streamed sequence.
#[derive(Debug, Clone)]
pub struct Generated<T: Scalar> {
    /// Emitted rotation rows; row 0 is local frame `first_frame`.
    pub rotations: Array2<T>,
    pub first_frame: usize,
    pub denoiser_calls: usize,
    pub seconds: f64,
}

impl<T: Scalar> Generated<T> {
    pub fn frames(&self) -> usize {
        self.rotations.nrows()
    }
}

pub fn generate_sequence<T: Scalar, D: X0Predictor<T>>(
    model: &D,
    seq: &PreparedSequence<T>,
    session: SessionConfig,
    sched: &DiffusionSchedule,
    plan: &StridedPlan,
    ablation: Ablation,
) -> Result<Generated<T>> {
    let clock = std::time::Instant::now();
    let mut s = StreamSession::new(session, model, sched, plan)?;
    let out = run_stream(&mut s, &seq.source, false, |c| {
        if ablation.no_image {
            c.zero_block(ConditionBlock::Image);
        }
        if ablation.no_pc {
            c.zero_block(ConditionBlock::PointCloud);
        }
    })?;
    Ok(Generated {
        rotations: out.frames,
        first_frame: out.first_frame,
        denoiser_calls: out.denoiser_calls,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// The rotation-space mean of a set of rows, re-orthonormalized per joint.
pub fn mean_pose<T: Scalar>(rows: &[&Array2<T>]) -> Result<Vec<T>> {
    let n: usize = rows.iter().map(|r| r.nrows()).sum();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut mean = vec![0.0; FEATURE_DIM];
    for r in rows {
        for row in r.rows() {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v.as_f64();
            }
        }
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for chunk in mean.chunks(6) {
        let c: Vec<f64> = chunk.iter().map(|v| v / n as f64).collect();
        let r = matrix_to_rot6d(&rot6d_to_matrix(&c)?)?;
        out.extend(r.iter().map(|v| T::lit(*v)));
    }
    Ok(out)
}

/// Cut a prediction bundle out of its source: same device, scene and
/// image streams, frames `start..start + rows`, predicted rotations.
pub fn prediction_bundle<T: Scalar>(source: &SequenceBundle, rotations: &Array2<T>, start: usize) -> SequenceBundle {
    let end = start + rotations.nrows();
    let images_end = end.div_ceil(2).min(source.images.nrows());
    SequenceBundle {
        start_frame: source.start_frame + start,
        head: source.head.slice(s![start..end, ..]).to_owned(),
        rotations: Some(rotations.mapv(|v| v.as_f64() as f32)),
        images: source.images.slice(s![start / 2..images_end, ..]).to_owned(),
        ..source.clone()
    }
}

/// World motions of a prediction bundle and the matching ground truth.
pub fn aligned_motions(pred: &SequenceBundle, gt: &SequenceBundle) -> Result<(WorldMotion<f64>, WorldMotion<f64>)> {
    let offset = pred.start_frame.checked_sub(gt.start_frame).ok_or_else(|| {
        Error::LengthMismatch(format!("prediction starts at {} before ground truth at {}", pred.start_frame, gt.start_frame))
    })?;
    let n = pred.frames();
    if offset + n > gt.frames() {
        return Err(Error::LengthMismatch(format!("prediction frames {offset}..{} exceed ground truth", offset + n)));
    }
    let heads: Vec<SE3Pose<f64>> = gt.head_poses::<f64>()?[offset..offset + n].to_vec();
    let calib = gt.calibration_pose::<f64>()?;
    let rows = |b: &SequenceBundle, from: usize| -> Result<MotionWindow<f64>> {
        let r = b.rotations.as_ref().ok_or_else(|| Error::MissingArray("rotations".into()))?;
        MotionWindow::new(r.slice(s![from..from + n, ..]).mapv(|v| v as f64))
    };
    let p = stitch_to_head(&rows(pred, 0)?, &heads, &gt.skeleton, &calib)?;
    let g = stitch_to_head(&rows(gt, offset)?, &heads, &gt.skeleton, &calib)?;
    Ok((p, g))
}

/// Metrics of repeated prediction bundles against their ground truth.
/// `preds[r][k]` is repetition `r` of sequence `k`.
pub fn evaluate_bundles<E: Scalar>(
    preds: &[Vec<SequenceBundle>],
    gts: &[SequenceBundle],
    model: Option<&LatentEvalModel<E>>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let first = preds.first().ok_or(Error::EmptySequence)?;
    let mut gt_worlds = Vec::new();
    let mut reps = Vec::new();
    for (r, rep) in preds.iter().enumerate() {
        if rep.len() != gts.len() {
            return Err(Error::LengthMismatch(format!("repetition {r} has {} sequences for {}", rep.len(), gts.len())));
        }
        let mut worlds = Vec::new();
        for (k, (p, g)) in rep.iter().zip(gts).enumerate() {
            if p.frames() != first[k].frames() || p.start_frame != first[k].start_frame {
                return Err(Error::LengthMismatch(format!("repetition {r} covers different frames for sequence {k}")));
            }
            let (pw, gw) = aligned_motions(p, g)?;
            worlds.push(pw);
            if r == 0 {
                gt_worlds.push(gw);
            }
        }
        reps.push(worlds);
    }
    let seqs: Vec<EvalSequence<'_>> =
        gt_worlds.iter().zip(gts).map(|(gt, b)| EvalSequence { gt, skeleton: &b.skeleton }).collect();
    evaluate_run(&reps, &seqs, model, opts)
}
