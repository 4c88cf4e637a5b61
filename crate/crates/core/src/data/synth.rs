//! Procedural motion generator with a known closed form, used as oracle data.
//!
//! Every scenario is a smooth function from time to a handful of joint
//! angles. The pelvis follows a circle inside a square room and is lowered
//! each frame until the lowest joint rests on the floor. The device
//! trajectory comes from forward kinematics of the head joint, so stitching
//! the ground-truth rotations back onto it is exact.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bundle::SequenceBundle;
use crate::error::{Error, Result};
use crate::motion::rotation::{rot_x, rot_y, rot_z};
use crate::motion::{
    forward_kinematics_full, matrix_to_rot6d, stitch_to_head, Mat3, MotionWindow, SE3Pose, Skeleton, Vec3,
    WorldMotion, FEATURE_DIM, JOINT_COUNT,
};

/// Leading embedding components: visibility, image coordinates of both
/// hands, then one flag per base scenario.
pub const EMBED_VIS: [usize; 2] = [0, 1];
pub const EMBED_UV: [[usize; 2]; 2] = [[2, 3], [4, 5]];
pub const EMBED_SCENARIO: usize = 6;
pub const EMBED_LEADING: usize = 9;

/// The device camera looks along its X axis pitched down by this angle.
pub const CAMERA_PITCH: f64 = 0.52;
pub const CAMERA_HALF_FOV: f64 = 0.7;
pub const CAMERA_RANGE: f64 = 1.2;

pub const ROOM_HALF_SIZE: f64 = 5.0;
pub const WALL_HEIGHT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Walk,
    SitStand,
    Reach,
    Mixed,
}

impl Scenario {
    pub const BASE: [Scenario; 3] = [Scenario::Walk, Scenario::SitStand, Scenario::Reach];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Walk => "walk",
            Scenario::SitStand => "sit-stand",
            Scenario::Reach => "reach",
            Scenario::Mixed => "mixed",
        }
    }

    fn flag(self) -> Option<usize> {
        Scenario::BASE.iter().position(|s| *s == self)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(Scenario::Walk),
            "sit-stand" => Ok(Scenario::SitStand),
            "reach" => Ok(Scenario::Reach),
            "mixed" => Ok(Scenario::Mixed),
            other => Err(Error::UnknownScenario(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthNoise {
    /// Standard deviation added to every embedding component.
    pub embedding: f64,
    /// Standard deviation of scene points along the surface normal, meters.
    pub scene: f64,
}

impl Default for SynthNoise {
    fn default() -> Self {
        Self { embedding: 0.05, scene: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario: Scenario,
    pub duration_s: f64,
    pub seed: u64,
    pub body_scale: f64,
    pub floor_height: f64,
    pub noise: SynthNoise,
    pub d_img: usize,
    /// Scene samples per square meter of floor and wall.
    pub scene_density: f64,
    pub fps: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Mixed,
            duration_s: 60.0,
            seed: 0,
            body_scale: 1.0,
            floor_height: 0.0,
            noise: SynthNoise::default(),
            d_img: 768,
            scene_density: 500.0,
            fps: 60,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::BadConfig(format!("duration must be positive, got {}", self.duration_s)));
        }
        if !(self.body_scale > 0.0) || !self.floor_height.is_finite() {
            return Err(Error::BadConfig("body scale must be positive and floor height finite".into()));
        }
        if self.d_img < EMBED_LEADING {
            return Err(Error::BadConfig(format!("d_img must be at least {EMBED_LEADING}, got {}", self.d_img)));
        }
        if self.noise.embedding < 0.0 || self.noise.scene < 0.0 || self.scene_density < 0.0 {
            return Err(Error::BadConfig("noise levels and density must be non-negative".into()));
        }
        if self.fps != 30 && self.fps != 60 {
            return Err(Error::BadConfig(format!("fps must be 30 or 60, got {}", self.fps)));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration_s * self.fps as f64).round().max(1.0) as usize
    }

    /// The `index`-th member of a corpus: own seed, body scale in
    /// [0.9, 1.1] and floor height in [-0.3, 0.3] m.
    pub fn corpus_member(&self, index: u64) -> Self {
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        Self {
            seed,
            body_scale: rng.random_range(0.9..1.1),
            floor_height: rng.random_range(-0.3..0.3),
            ..self.clone()
        }
    }
}

/// Joint angles driving the skeleton, arrays are `[right, left]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Pose {
    speed: f64,
    hip: [f64; 2],
    knee: [f64; 2],
    ankle: [f64; 2],
    spine: f64,
    torso_yaw: f64,
    neck_yaw: f64,
    neck_pitch: f64,
    sh_flex: [f64; 2],
    sh_abd: [f64; 2],
    elbow: [f64; 2],
}

impl Pose {
    fn lerp(&self, o: &Pose, w: f64) -> Pose {
        let l = |a: f64, b: f64| a + (b - a) * w;
        let l2 = |a: [f64; 2], b: [f64; 2]| [l(a[0], b[0]), l(a[1], b[1])];
        Pose {
            speed: l(self.speed, o.speed),
            hip: l2(self.hip, o.hip),
            knee: l2(self.knee, o.knee),
            ankle: l2(self.ankle, o.ankle),
            spine: l(self.spine, o.spine),
            torso_yaw: l(self.torso_yaw, o.torso_yaw),
            neck_yaw: l(self.neck_yaw, o.neck_yaw),
            neck_pitch: l(self.neck_pitch, o.neck_pitch),
            sh_flex: l2(self.sh_flex, o.sh_flex),
            sh_abd: l2(self.sh_abd, o.sh_abd),
            elbow: l2(self.elbow, o.elbow),
        }
    }

    /// Local rotation of every joint. Joint 0 stays identity; the pelvis
    /// orientation is carried by the root transform.
    fn local_rotations(&self) -> Vec<Mat3<f64>> {
        let mut r = vec![Mat3::identity(); JOINT_COUNT];
        let spine = rot_z(self.torso_yaw / 3.0) * rot_y(self.spine / 3.0);
        for j in 1..=3 {
            r[j] = spine;
        }
        r[5] = rot_z(self.neck_yaw) * rot_y(self.neck_pitch);
        // arms hang down at zero abduction; flexion swings them forward
        r[8] = rot_y(-self.sh_flex[0]) * rot_x(FRAC_PI_2 - self.sh_abd[0]);
        r[9] = rot_z(self.elbow[0]);
        r[12] = rot_y(-self.sh_flex[1]) * rot_x(-(FRAC_PI_2 - self.sh_abd[1]));
        r[13] = rot_z(-self.elbow[1]);
        for (side, base) in [(0, 15), (1, 19)] {
            r[base] = rot_y(-self.hip[side]);
            r[base + 1] = rot_y(self.knee[side]);
            r[base + 2] = rot_y(-self.ankle[side]);
        }
        r
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

struct Walk {
    speed: f64,
    phase: f64,
    look: f64,
}

impl Walk {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Self { speed: rng.random_range(1.0..1.4), phase: rng.random_range(0.0..2.0 * PI), look: rng.random_range(0.0..2.0 * PI) }
    }

    fn pose(&self, t: f64) -> Pose {
        let v = self.speed * (1.0 + 0.1 * (2.0 * PI * t / 7.0).sin());
        let theta = 2.0 * PI * 0.9 * (self.speed / 1.2) * t + self.phase;
        let (s, c) = theta.sin_cos();
        Pose {
            speed: v,
            hip: [0.45 * s, -0.45 * s],
            knee: [0.15 + 0.55 * c.max(0.0), 0.15 + 0.55 * (-c).max(0.0)],
            ankle: [0.1 * s, -0.1 * s],
            spine: 0.05,
            torso_yaw: 0.1 * s,
            neck_yaw: 0.35 * (2.0 * PI * t / 5.3 + self.look).sin(),
            neck_pitch: 0.15 + 0.1 * (2.0 * PI * t / 3.7).sin(),
            sh_flex: [-0.3 * s, 0.3 * s],
            sh_abd: [0.15, 0.15],
            elbow: [0.3, 0.3],
        }
    }
}

struct SitStand {
    /// Transition start, transition length and target depth; `depth0`
    /// holds before the first one.
    keys: Vec<(f64, f64, f64)>,
    depth0: f64,
    look: f64,
}

impl SitStand {
    fn new(rng: &mut ChaCha8Rng, duration: f64) -> Self {
        let seat = |rng: &mut ChaCha8Rng| rng.random_range(0.7..1.0);
        let seated = rng.random_bool(0.5);
        let depth0 = if seated { seat(rng) } else { 0.0 };
        let mut keys = Vec::new();
        let mut t = -rng.random_range(0.0..4.0);
        let mut sitting = seated;
        while t <= duration + 3.0 {
            t += if sitting { rng.random_range(2.0..8.0) } else { rng.random_range(1.5..6.0) };
            let len = rng.random_range(1.0..1.6);
            sitting = !sitting;
            keys.push((t, len, if sitting { seat(rng) } else { 0.0 }));
            t += len;
        }
        Self { keys, depth0, look: rng.random_range(0.0..2.0 * PI) }
    }

    /// Sitting depth in [0, 1] and the forward lean of a transition.
    fn depth(&self, t: f64) -> (f64, f64) {
        let k = self.keys.partition_point(|(s, _, _)| *s <= t);
        if k == 0 {
            return (self.depth0, 0.0);
        }
        let (start, len, to) = self.keys[k - 1];
        let from = if k >= 2 { self.keys[k - 2].2 } else { self.depth0 };
        let u = (t - start) / len;
        let lean = if u < 1.0 { (PI * u).sin() } else { 0.0 };
        (from + (to - from) * smoothstep(u), lean)
    }

    fn pose(&self, t: f64) -> Pose {
        let (d, lean) = self.depth(t);
        Pose {
            speed: 0.0,
            hip: [1.45 * d; 2],
            knee: [1.5 * d; 2],
            ankle: [0.1 * d; 2],
            spine: 0.05 + 0.45 * lean,
            torso_yaw: 0.0,
            neck_yaw: 0.4 * (2.0 * PI * t / 6.1 + self.look).sin(),
            neck_pitch: 0.1,
            sh_flex: [-0.1, -0.1],
            sh_abd: [0.1, 0.1],
            elbow: [0.2, 0.2],
        }
    }
}

#[derive(Clone, Copy)]
struct ArmTarget {
    flex: f64,
    abd: f64,
    elbow: f64,
}

const ARM_REST: ArmTarget = ArmTarget { flex: 0.05, abd: 0.1, elbow: 0.3 };

struct Reach {
    /// Start time and per-arm target of each reach.
    keys: Vec<(f64, [ArmTarget; 2])>,
    look: f64,
}

impl Reach {
    fn new(rng: &mut ChaCha8Rng, duration: f64) -> Self {
        let mut keys = vec![(0.0, [ARM_REST; 2])];
        let mut t = 0.0;
        while t <= duration + 3.0 {
            t += rng.random_range(1.2..2.2);
            let mut arm = || {
                if rng.random_bool(0.6) {
                    ArmTarget {
                        flex: rng.random_range(0.6..1.9),
                        abd: rng.random_range(0.1..0.8),
                        elbow: rng.random_range(0.1..1.2),
                    }
                } else {
                    ARM_REST
                }
            };
            let pair = [arm(), arm()];
            keys.push((t, pair));
        }
        Self { keys, look: rng.random_range(0.0..2.0 * PI) }
    }

    fn arms(&self, t: f64) -> [ArmTarget; 2] {
        let k = self.keys.partition_point(|(s, _)| *s <= t).max(1);
        let (start, cur) = self.keys[k - 1];
        let prev = if k >= 2 { self.keys[k - 2].1 } else { cur };
        let w = smoothstep((t - start) / 0.6);
        let mix = |a: ArmTarget, b: ArmTarget| ArmTarget {
            flex: a.flex + (b.flex - a.flex) * w,
            abd: a.abd + (b.abd - a.abd) * w,
            elbow: a.elbow + (b.elbow - a.elbow) * w,
        };
        [mix(prev[0], cur[0]), mix(prev[1], cur[1])]
    }

    fn pose(&self, t: f64) -> Pose {
        let [r, l] = self.arms(t);
        let reach = (r.flex + l.flex) / 2.0;
        Pose {
            speed: 0.0,
            hip: [0.02 + 0.1 * reach; 2],
            knee: [0.05; 2],
            ankle: [0.0; 2],
            spine: 0.1 * reach,
            torso_yaw: 0.15 * (l.flex - r.flex),
            neck_yaw: 0.3 * (l.flex - r.flex) / 1.9 + 0.15 * (2.0 * PI * t / 4.3 + self.look).sin(),
            neck_pitch: 0.2 + 0.15 * reach,
            sh_flex: [r.flex, l.flex],
            sh_abd: [r.abd, l.abd],
            elbow: [r.elbow, l.elbow],
        }
    }
}

struct Generators {
    walk: Walk,
    sit: SitStand,
    reach: Reach,
    /// Segment start times and scenarios; a single segment unless mixed.
    segments: Vec<(f64, Scenario)>,
}

const BLEND_S: f64 = 1.0;

impl Generators {
    fn new(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let walk = Walk::new(rng);
        let sit = SitStand::new(rng, spec.duration_s);
        let reach = Reach::new(rng, spec.duration_s);
        let segments = if spec.scenario == Scenario::Mixed {
            let mut segs = Vec::new();
            let mut t = 0.0;
            let mut last = None;
            while t < spec.duration_s {
                let s = loop {
                    let s = Scenario::BASE[rng.random_range(0..3)];
                    if Some(s) != last {
                        break s;
                    }
                };
                segs.push((t, s));
                last = Some(s);
                t += rng.random_range(8.0..20.0);
            }
            segs
        } else {
            vec![(0.0, spec.scenario)]
        };
        Self { walk, sit, reach, segments }
    }

    fn base(&self, s: Scenario, t: f64) -> Pose {
        match s {
            Scenario::Walk => self.walk.pose(t),
            Scenario::SitStand => self.sit.pose(t),
            Scenario::Reach => self.reach.pose(t),
            Scenario::Mixed => unreachable!("segments hold base scenarios"),
        }
    }

    /// Pose at `t` and the dominant scenario.
    fn pose(&self, t: f64) -> (Pose, Scenario) {
        let k = self.segments.partition_point(|(s, _)| *s <= t).max(1) - 1;
        let (start, cur) = self.segments[k];
        if k == 0 {
            return (self.base(cur, t), cur);
        }
        let prev = self.segments[k - 1].1;
        let w = smoothstep((t - start) / BLEND_S);
        let pose = self.base(prev, t).lerp(&self.base(cur, t), w);
        (pose, if w >= 0.5 { cur } else { prev })
    }
}

/// Full-precision output of the generator.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub spec: SynthSpec,
    pub skeleton: Skeleton<f64>,
    /// `frames × 138` local rotations; joint 0 holds the pelvis orientation
    /// relative to the device heading.
    pub rotations: Array2<f64>,
    /// Device poses, `head joint ∘ calibration⁻¹`.
    pub heads: Vec<SE3Pose<f64>>,
    pub calibration: SE3Pose<f64>,
    /// Joint positions from direct forward kinematics.
    pub world: WorldMotion<f64>,
    /// Per frame, whether each wrist `[right, left]` is in the camera view.
    pub visibility: Vec<[bool; 2]>,
    pub labels: Vec<Scenario>,
    /// Embeddings at half the motion rate.
    pub images: Array2<f64>,
    pub scene: Vec<Vec3<f64>>,
}

impl SynthSequence {
    pub fn frames(&self) -> usize {
        self.heads.len()
    }

    pub fn to_bundle(&self) -> SequenceBundle {
        let n = self.frames();
        let head = Array2::from_shape_fn((n, 9), |(i, k)| self.heads[i].to_flat9()[k] as f32);
        let scene = Array2::from_shape_fn((self.scene.len(), 3), |(i, k)| self.scene[i][k] as f32);
        let calib = self.calibration.to_flat9().map(|v| v as f32);
        SequenceBundle {
            fps: self.spec.fps,
            image_fps: self.spec.fps / 2,
            start_frame: 0,
            skeleton: self.skeleton.clone(),
            scenario: Some(self.spec.scenario.to_string()),
            head,
            rotations: Some(self.rotations.mapv(|v| v as f32)),
            images: self.images.mapv(|v| v as f32),
            scene,
            calibration: Array2::from_shape_vec((1, 9), calib.to_vec()).expect("1×9"),
        }
    }

    /// Motion re-placed onto the device trajectory by stitching.
    pub fn stitched(&self) -> Result<WorldMotion<f64>> {
        stitch_to_head(&MotionWindow::new(self.rotations.clone())?, &self.heads, &self.skeleton, &self.calibration)
    }
}

/// Device camera: whether a world point is in view and its image coordinates.
pub fn project(device: &SE3Pose<f64>, p: &Vec3<f64>) -> Option<[f64; 2]> {
    let cam = rot_y(CAMERA_PITCH);
    let local = cam.transpose() * device.inverse().apply(p);
    let dist = local.norm();
    if local[0] <= 0.05 || dist > CAMERA_RANGE {
        return None;
    }
    let angle = (local[0] / dist).clamp(-1.0, 1.0).acos();
    (angle < CAMERA_HALF_FOV).then(|| [local[1] / local[0], local[2] / local[0]])
}

fn calibration(scale: f64) -> SE3Pose<f64> {
    SE3Pose::new(Vec3::new(0.09, 0.0, 0.06) * scale, rot_y(0.05))
}

fn room_scene(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec3<f64>> {
    let noise = Normal::new(0.0, spec.noise.scene.max(1e-12)).expect("finite std");
    let jitter = |rng: &mut ChaCha8Rng| if spec.noise.scene > 0.0 { noise.sample(rng) } else { 0.0 };
    let side = 2.0 * ROOM_HALF_SIZE;
    let floor_n = (side * side * spec.scene_density).round() as usize;
    let wall_n = (side * WALL_HEIGHT * spec.scene_density).round() as usize;
    let mut pts = Vec::with_capacity(floor_n + 4 * wall_n);
    let f = spec.floor_height;
    for _ in 0..floor_n {
        let x = rng.random_range(-ROOM_HALF_SIZE..ROOM_HALF_SIZE);
        let y = rng.random_range(-ROOM_HALF_SIZE..ROOM_HALF_SIZE);
        pts.push(Vec3::new(x, y, f + jitter(rng)));
    }
    for wall in 0..4 {
        for _ in 0..wall_n {
            let u = rng.random_range(-ROOM_HALF_SIZE..ROOM_HALF_SIZE);
            let z = f + rng.random_range(0.0..WALL_HEIGHT);
            let d = ROOM_HALF_SIZE + jitter(rng);
            pts.push(match wall {
                0 => Vec3::new(d, u, z),
                1 => Vec3::new(-d, u, z),
                2 => Vec3::new(u, d, z),
                _ => Vec3::new(u, -d, z),
            });
        }
    }
    pts
}

/// Generate one sequence at full precision.
pub fn synth_sequence(spec: &SynthSpec) -> Result<SynthSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gens = Generators::new(spec, &mut rng);
    let skeleton = Skeleton::xsens23().scaled(spec.body_scale);
    let calib = calibration(spec.body_scale);
    let calib_inv = calib.inverse();
    let n = spec.frames();
    let dt = 1.0 / spec.fps as f64;

    let radius = rng.random_range(2.5..3.5);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut phi: f64 = rng.random_range(0.0..2.0 * PI);

    let mut rotations = Array2::zeros((n, FEATURE_DIM));
    let mut positions = ndarray::Array3::zeros((n, JOINT_COUNT, 3));
    let mut roots = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    let mut visibility = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let (pose, label) = gens.pose(t);
        let heading = phi + dir * FRAC_PI_2;
        let rots = pose.local_rotations();
        let flat = SE3Pose::from_yaw(Vec3::new(radius * phi.cos(), radius * phi.sin(), 0.0), heading);
        let (pos, _) = forward_kinematics_full(&skeleton, &rots, &flat);
        let lowest = pos.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let root = SE3Pose::new(flat.t + Vec3::new(0.0, 0.0, spec.floor_height - lowest), flat.r);
        let (pos, glob) = forward_kinematics_full(&skeleton, &rots, &root);
        let device = SE3Pose::new(pos[skeleton.head], glob[skeleton.head]).compose(&calib_inv);

        let mut stored = rots;
        stored[0] = rot_z(-device.yaw()) * root.r;
        for (j, r) in stored.iter().enumerate() {
            let r6 = matrix_to_rot6d(r)?;
            for k in 0..6 {
                rotations[[i, 6 * j + k]] = r6[k];
            }
        }
        for (j, p) in pos.iter().enumerate() {
            for k in 0..3 {
                positions[[i, j, k]] = p[k];
            }
        }
        visibility.push(skeleton.wrists.map(|w| project(&device, &pos[w]).is_some()));
        roots.push(root);
        heads.push(device);
        labels.push(label);
        phi += dir * pose.speed * dt / radius;
    }

    let noise = Normal::new(0.0, spec.noise.embedding.max(1e-12)).expect("finite std");
    let m = n.div_ceil(2);
    let mut images = Array2::zeros((m, spec.d_img));
    for k in 0..m {
        let i = (2 * k).min(n - 1);
        let device = &heads[i];
        for (side, &w) in skeleton.wrists.iter().enumerate() {
            let p = Vec3::new(positions[[i, w, 0]], positions[[i, w, 1]], positions[[i, w, 2]]);
            if let Some(uv) = project(device, &p) {
                images[[k, EMBED_VIS[side]]] = 1.0;
                images[[k, EMBED_UV[side][0]]] = uv[0];
                images[[k, EMBED_UV[side][1]]] = uv[1];
            }
        }
        if let Some(f) = labels[i].flag() {
            images[[k, EMBED_SCENARIO + f]] = 1.0;
        }
        if spec.noise.embedding > 0.0 {
            images.row_mut(k).iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
    }

    let scene = room_scene(spec, &mut rng);
    Ok(SynthSequence {
        spec: spec.clone(),
        skeleton,
        rotations,
        heads,
        calibration: calib,
        world: WorldMotion { root: roots, positions },
        visibility,
        labels,
        images,
        scene,
    })
}

/// Generate one sequence in its on-disk form.
pub fn synth_generate(spec: &SynthSpec) -> Result<SequenceBundle> {
    Ok(synth_sequence(spec)?.to_bundle())
}
