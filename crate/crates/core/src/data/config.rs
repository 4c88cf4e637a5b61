//! Every tunable of the pipeline, loaded from a sectioned TOML file and
//! overridable by `section.key=value` pairs or `HMD_SECTION_KEY` variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::{MapMode, PcTrainConfig, PC_LATENT_DIM};
use crate::denoiser::{DenoiserConfig, TrainConfig};
use crate::diffusion::ScheduleKind;
use crate::error::{Error, Result};
use crate::metrics::EvalAeConfig;
use crate::motion::FEATURE_DIM;
use crate::nn::AdamConfig;
use crate::streaming::SessionConfig;

pub const ENV_PREFIX: &str = "HMD_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    pub frames: usize,
    pub features: usize,
    pub fps: u32,
}

impl Default for MotionSection {
    fn default() -> Self {
        Self { frames: 240, features: FEATURE_DIM, fps: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub steps: usize,
    pub sample_steps: usize,
    pub eta: f64,
    pub schedule: ScheduleKind,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self { steps: 1000, sample_steps: 20, eta: 1.0, schedule: ScheduleKind::Cosine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamingSection {
    pub stride: usize,
    pub seed: u64,
}

impl Default for StreamingSection {
    fn default() -> Self {
        Self { stride: 180, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningSection {
    pub d_img: usize,
    pub pc_latent: usize,
    pub map_mode: MapMode,
    /// Encode the scene every this many frames and interpolate between.
    pub latent_every: usize,
}

impl Default for ConditioningSection {
    fn default() -> Self {
        Self { d_img: 768, pc_latent: PC_LATENT_DIM, map_mode: MapMode::FullMap, latent_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { latent_dim: 512, layers: 8, heads: 8, mlp_ratio: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub cosine_decay: bool,
    pub cond_dropout: f64,
    /// Frames between the starts of consecutive training windows.
    pub window_stride: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            clip_norm: 1.0,
            cosine_decay: true,
            cond_dropout: 0.25,
            window_stride: 30,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Use every n-th frame's grid for training.
    pub frame_stride: usize,
    pub seed: u64,
}

impl Default for PcSection {
    fn default() -> Self {
        Self { epochs: 10, batch: 16, lr: 1e-3, frame_stride: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub window: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub repetitions: usize,
    pub floor_half_window_s: f64,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { window: 64, latent: 256, epochs: 20, batch: 16, lr: 1e-3, repetitions: 1, floor_half_window_s: 10.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { data: "data".into(), out: "runs".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub motion: MotionSection,
    pub diffusion: DiffusionSection,
    pub streaming: StreamingSection,
    pub conditioning: ConditioningSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub pc: PcSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl GlobalConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply `section.key=value` overrides, then validate.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::BadConfig(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::BadConfig(format!("override `{o}` is not key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::BadConfig(format!("override key `{key}` is not section.key")))?;
            let sec = table
                .get_mut(section)
                .and_then(|s| s.as_table_mut())
                .ok_or_else(|| Error::BadConfig(format!("unknown config section `{section}`")))?;
            if !sec.contains_key(field) {
                return Err(Error::BadConfig(format!("unknown config key `{section}.{field}`")));
            }
            sec.insert(field.to_string(), parse_value(value.trim()));
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides taken from `HMD_<SECTION>_<KEY>` pairs, e.g.
    /// `HMD_STREAMING_STRIDE=10`.
    pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<String> {
        const SECTIONS: [&str; 9] =
            ["motion", "diffusion", "streaming", "conditioning", "model", "train", "pc", "eval", "paths"];
        let mut out = Vec::new();
        for (k, v) in vars {
            let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
            let rest = rest.to_ascii_lowercase();
            if let Some(sec) = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) {
                out.push(format!("{sec}.{}={v}", &rest[sec.len() + 1..]));
            }
        }
        out.sort();
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        let (t, h) = (self.motion.frames, self.streaming.stride);
        if t == 0 || h == 0 || h > t {
            return bad(format!("stride must be in 1..=frames, got stride {h} with {t} frames"));
        }
        if self.motion.features != FEATURE_DIM {
            return bad(format!("motion features must be {FEATURE_DIM}"));
        }
        if self.motion.fps != 30 && self.motion.fps != 60 {
            return bad(format!("fps must be 30 or 60, got {}", self.motion.fps));
        }
        let d = &self.diffusion;
        if d.steps == 0 || d.sample_steps == 0 || d.sample_steps > d.steps {
            return bad(format!("sample steps must be in 1..=steps, got {} of {}", d.sample_steps, d.steps));
        }
        if !(0.0..=1.0).contains(&d.eta) {
            return bad(format!("eta must be in [0, 1], got {}", d.eta));
        }
        if self.conditioning.pc_latent != PC_LATENT_DIM {
            return bad(format!("pc latent width is fixed at {PC_LATENT_DIM}"));
        }
        if self.conditioning.d_img == 0 || self.conditioning.latent_every == 0 {
            return bad("d_img and latent_every must be positive".into());
        }
        self.denoiser().validate()?;
        let tr = &self.train;
        if tr.batch == 0 || tr.window_stride == 0 || !(tr.lr > 0.0) || !(0.0..=1.0).contains(&tr.cond_dropout) {
            return bad("train batch, window stride and lr must be positive, dropout in [0, 1]".into());
        }
        if self.pc.batch == 0 || self.pc.frame_stride == 0 || !(self.pc.lr > 0.0) {
            return bad("pc batch, frame stride and lr must be positive".into());
        }
        let e = &self.eval;
        if e.window < 4 || e.latent == 0 || e.batch == 0 || e.repetitions == 0 || !(e.floor_half_window_s > 0.0) {
            return bad("eval window ≥ 4, latent, batch and repetitions positive".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.motion.fps as f64
    }

    pub fn denoiser(&self) -> DenoiserConfig {
        let m = &self.model;
        DenoiserConfig {
            latent_dim: m.latent_dim,
            layers: m.layers,
            heads: m.heads,
            mlp_ratio: m.mlp_ratio,
            seed: m.seed,
            steps: self.diffusion.steps,
            ..DenoiserConfig::standard(self.motion.frames, self.conditioning.d_img)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch: t.batch,
            seed: t.seed,
            adam: AdamConfig { lr: t.lr, beta1: t.beta1, beta2: t.beta2, clip_norm: t.clip_norm, ..AdamConfig::default() },
            cosine_decay: t.cosine_decay,
            cond_dropout: t.cond_dropout,
            checkpoint_every: t.checkpoint_every,
            checkpoint_dir: None,
        }
    }

    pub fn pc_train_config(&self) -> PcTrainConfig {
        let p = &self.pc;
        PcTrainConfig { epochs: p.epochs, batch: p.batch, seed: p.seed, adam: AdamConfig { lr: p.lr, ..AdamConfig::default() } }
    }

    pub fn eval_ae_config(&self) -> EvalAeConfig {
        let e = &self.eval;
        EvalAeConfig {
            window: e.window,
            latent: e.latent,
            epochs: e.epochs,
            batch: e.batch,
            seed: e.seed,
            adam: AdamConfig { lr: e.lr, ..AdamConfig::default() },
        }
    }

    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            frames: self.motion.frames,
            features: self.motion.features,
            stride: self.streaming.stride,
            eta: self.diffusion.eta,
            seed: self.streaming.seed,
            dt: self.dt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = GlobalConfig::default();
        c.validate().unwrap();
        assert_eq!((c.motion.frames, c.diffusion.sample_steps, c.streaming.stride), (240, 20, 180));
        assert_eq!(GlobalConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        assert_eq!(GlobalConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn partial_file_and_overrides() {
        let c = GlobalConfig::from_toml_str("[streaming]\nstride = 60\n[model]\nheads = 4").unwrap();
        assert_eq!((c.streaming.stride, c.model.heads, c.motion.frames), (60, 4, 240));
        let o = c.with_overrides(&["streaming.stride=10", "diffusion.schedule=linear", "paths.out = other"]).unwrap();
        assert_eq!(o.streaming.stride, 10);
        assert_eq!(o.diffusion.schedule, ScheduleKind::Linear);
        assert_eq!(o.paths.out, PathBuf::from("other"));
        assert!(c.with_overrides(&["streaming.strid=10"]).is_err());
        assert!(c.with_overrides(&["nosuch.x=1"]).is_err());
        assert!(c.with_overrides(&["stride"]).is_err());
        assert!(GlobalConfig::from_toml_str("[motion]\nframez = 3").is_err());
    }

    #[test]
    fn env_names_map_to_keys() {
        let vars = [
            ("HMD_STREAMING_STRIDE".to_string(), "10".to_string()),
            ("HMD_CONDITIONING_D_IMG".to_string(), "16".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let o = GlobalConfig::env_overrides(vars);
        assert_eq!(o, vec!["conditioning.d_img=16", "streaming.stride=10"]);
        let c = GlobalConfig::default().with_overrides(&o).unwrap();
        assert_eq!((c.streaming.stride, c.conditioning.d_img), (10, 16));
    }

    #[test]
    fn cross_field_fuzz_matrix() {
        let base = GlobalConfig::default();
        for frames in [1usize, 60, 240] {
            for stride in [0usize, 1, 60, 180, 240, 241] {
                for (d, heads) in [(512usize, 8usize), (512, 7), (64, 4), (66, 4)] {
                    for (steps, sbar) in [(1000usize, 20usize), (20, 20), (10, 20), (1000, 0)] {
                        let over = [
                            format!("motion.frames={frames}"),
                            format!("streaming.stride={stride}"),
                            format!("model.latent_dim={d}"),
                            format!("model.heads={heads}"),
                            format!("diffusion.steps={steps}"),
                            format!("diffusion.sample_steps={sbar}"),
                        ];
                        let ok = stride >= 1 && stride <= frames && d % heads == 0 && d % 2 == 0;
                        let ok = ok && sbar >= 1 && sbar <= steps;
                        let got = base.with_overrides(&over);
                        assert_eq!(got.is_ok(), ok, "{over:?}: {:?}", got.err());
                    }
                }
            }
        }
    }
}
