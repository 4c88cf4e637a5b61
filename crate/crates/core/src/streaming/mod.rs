//! Online generation over a long condition stream: each window advances by
//! a stride `h` and is inpainted at every reverse step with the overlapping
//! part of the previous window.

use ndarray::{s, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditioning::{ConditionSource, ConditionWindow};
use crate::diffusion::{DiffusionSchedule, Sampler, StridedPlan, X0Predictor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `T × F` mask: zero on the first `T − h` rows, one on the last `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintMask<T: Scalar> {
    pub m: Array2<T>,
    pub stride: usize,
}

fn check_stride(frames: usize, h: usize) -> Result<()> {
    if h == 0 || h > frames {
        return Err(Error::BadStride(format!("stride {h} must be in 1..={frames}")));
    }
    Ok(())
}

pub fn make_mask<T: Scalar>(frames: usize, h: usize, features: usize) -> Result<InpaintMask<T>> {
    check_stride(frames, h)?;
    let m = Array2::from_shape_fn((frames, features), |(i, _)| if i + h >= frames { T::one() } else { T::zero() });
    Ok(InpaintMask { m, stride: h })
}

/// Previous window advanced by `h`: rows `h..T` moved to the front, the
/// last `h` rows zero.
pub fn shift_prev<T: Scalar>(prev: &Array2<T>, h: usize) -> Result<Array2<T>> {
    let t = prev.nrows();
    check_stride(t, h)?;
    let mut out = Array2::zeros(prev.dim());
    out.slice_mut(s![0..t - h, ..]).assign(&prev.slice(s![h..t, ..]));
    Ok(out)
}

/// `x̂0 ⊙ m + shifted ⊙ (1 − m)`, evaluated as a selection so overwritten
/// entries are copied bit for bit.
pub fn inpaint<T: Scalar>(x0hat: &Array2<T>, shifted: &Array2<T>, mask: &InpaintMask<T>) -> Result<Array2<T>> {
    if x0hat.dim() != shifted.dim() || x0hat.dim() != mask.m.dim() {
        return Err(Error::ShapeMismatch(format!(
            "x0hat {:?}, shifted {:?}, mask {:?}",
            x0hat.dim(),
            shifted.dim(),
            mask.m.dim()
        )));
    }
    let mut out = x0hat.clone();
    apply_inpaint(&mut out, shifted, mask);
    Ok(out)
}

fn apply_inpaint<T: Scalar>(x0hat: &mut Array2<T>, shifted: &Array2<T>, mask: &InpaintMask<T>) {
    Zip::from(x0hat).and(shifted).and(&mask.m).for_each(|x, &s, &m| {
        if m == T::zero() {
            *x = s;
        }
    });
}

/// Algorithmic latency of stride `h`: the newest emitted frame waited for
/// `h − 1` further frames.
pub fn latency(h: usize, dt: f64) -> f64 {
    h.saturating_sub(1) as f64 * dt
}

/// Sampling settings shared by every window of a session.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub frames: usize,
    pub features: usize,
    pub stride: usize,
    pub eta: f64,
    pub seed: u64,
    pub dt: f64,
}

/// Single-owner state machine producing `h` new frames per step.
pub struct StreamSession<'a, T: Scalar, D: X0Predictor<T>> {
    pub config: SessionConfig,
    model: &'a D,
    sched: &'a DiffusionSchedule,
    plan: &'a StridedPlan,
    mask: InpaintMask<T>,
    rng: ChaCha8Rng,
    prev: Option<Array2<T>>,
    windows_done: usize,
    denoiser_calls: usize,
}

impl<'a, T: Scalar, D: X0Predictor<T>> StreamSession<'a, T, D> {
    pub fn new(config: SessionConfig, model: &'a D, sched: &'a DiffusionSchedule, plan: &'a StridedPlan) -> Result<Self> {
        let mask = make_mask(config.frames, config.stride, config.features)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, model, sched, plan, mask, rng, prev: None, windows_done: 0, denoiser_calls: 0 })
    }

    /// Global frame index where the next window must start.
    pub fn next_window_start(&self) -> usize {
        self.windows_done * self.config.stride
    }

    /// Global index of the first frame this session ever emits.
    pub fn first_emitted_frame(&self) -> usize {
        self.config.frames - self.config.stride
    }

    pub fn emitted_frames(&self) -> usize {
        self.windows_done * self.config.stride
    }

    pub fn denoiser_calls(&self) -> usize {
        self.denoiser_calls
    }

    /// The last finalized window, if any.
    pub fn previous_window(&self) -> Option<&Array2<T>> {
        self.prev.as_ref()
    }

    /// Generate the next window and return its last `h` frames.
    pub fn step(&mut self, cond: &ConditionWindow<T>) -> Result<Array2<T>> {
        let cfg = &self.config;
        let expected = self.next_window_start();
        if cond.start != expected || cond.frames() != cfg.frames {
            return Err(Error::ConditionGap(format!(
                "expected {} condition frames starting at {expected}, got {} at {}",
                cfg.frames,
                cond.frames(),
                cond.start
            )));
        }
        if cond.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConditionGap(format!("non-finite condition values in window at {expected}")));
        }
        let shape = (cfg.frames, cfg.features);
        let shifted = self.prev.as_ref().map(|p| shift_prev(p, cfg.stride)).transpose()?;
        let sampler = Sampler { sched: self.sched, plan: self.plan, eta: cfg.eta };
        let model = self.model;
        let mask = &self.mask;
        let calls = &mut self.denoiser_calls;
        let window = sampler.sample(
            shape,
            &mut self.rng,
            |x, tau| {
                *calls += 1;
                model.predict(x, &cond.data, tau)
            },
            |x0hat| {
                if let Some(sh) = &shifted {
                    apply_inpaint(x0hat, sh, mask);
                }
            },
        )?;
        let h = self.config.stride;
        let emitted = window.slice(s![self.config.frames - h.., ..]).to_owned();
        self.prev = Some(window);
        self.windows_done += 1;
        Ok(emitted)
    }
}

/// Everything a full streaming pass produced.
#[derive(Debug, Clone)]
pub struct StreamOutput<T: Scalar> {
    /// Emitted rows; row 0 is global frame `first_frame`.
    pub frames: Array2<T>,
    pub first_frame: usize,
    pub denoiser_calls: usize,
    /// Every finalized window, kept when requested.
    pub windows: Vec<Array2<T>>,
}

/// Step a session across a whole condition source, as far as complete
/// windows reach. Optionally blank condition blocks first.
pub fn run_stream<T: Scalar, D: X0Predictor<T>>(
    session: &mut StreamSession<'_, T, D>,
    source: &ConditionSource<T>,
    keep_windows: bool,
    mut edit: impl FnMut(&mut ConditionWindow<T>),
) -> Result<StreamOutput<T>> {
    let (t, h, f) = (session.config.frames, session.config.stride, session.config.features);
    let mut rows = Vec::new();
    let mut windows = Vec::new();
    while session.next_window_start() + t <= source.frames() {
        let mut cond = source.window(session.next_window_start(), t)?;
        edit(&mut cond);
        let out = session.step(&cond)?;
        rows.extend(out.iter().copied());
        if keep_windows {
            windows.push(session.previous_window().expect("window stored").clone());
        }
    }
    let n = rows.len() / f;
    Ok(StreamOutput {
        frames: Array2::from_shape_vec((n, f), rows).expect("row-major rows"),
        first_frame: t - h,
        denoiser_calls: session.denoiser_calls(),
        windows,
    })
}
