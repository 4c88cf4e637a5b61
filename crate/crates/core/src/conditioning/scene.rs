//! Static scene points and the head-centered crop volume.

use std::collections::HashMap;

use super::voxel::{CROP_DOWN_OFFSET, CROP_HALF_EXTENT};
use crate::motion::{SE3Pose, Vec3};
use crate::motion::rotation::rot_z;
use crate::scalar::Scalar;

/// SLAM feature points in world coordinates, optionally tagged with the
/// frame at which each point was first observed.
#[derive(Debug, Clone, Default)]
pub struct SceneMap<T: Scalar> {
    pub points: Vec<Vec3<T>>,
    pub first_seen: Option<Vec<u32>>,
}

impl<T: Scalar> SceneMap<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self { points, first_seen: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Center of the crop volume: head position lowered by one meter.
pub fn crop_center<T: Scalar>(head: &SE3Pose<T>) -> Vec3<T> {
    head.t - Vec3::new(T::zero(), T::zero(), T::lit(CROP_DOWN_OFFSET))
}

/// Is `p` inside the heading-aligned cube of half extent 1 m around `center`?
pub fn in_crop<T: Scalar>(p: &Vec3<T>, center: &Vec3<T>, yaw: T) -> bool {
    let local = rot_z(-yaw) * (p - center);
    let h = T::lit(CROP_HALF_EXTENT);
    local.iter().all(|v| v.abs() <= h)
}

/// Points inside the 2 m cube centered one meter below the head, aligned
/// with the head's heading.
pub fn crop_scene<T: Scalar>(scene: &SceneMap<T>, head: &SE3Pose<T>) -> Vec<Vec3<T>> {
    let center = crop_center(head);
    let yaw = head.yaw();
    scene.points.iter().filter(|p| in_crop(p, &center, yaw)).copied().collect()
}

/// Which points a crop may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    /// Every point of the map, regardless of when it was observed.
    FullMap,
    /// Only points observed at or before the current frame.
    Incremental,
}

/// Uniform horizontal grid over scene points for fast crops.
#[derive(Debug, Clone)]
pub struct SceneIndex<T: Scalar> {
    scene: SceneMap<T>,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl<T: Scalar> SceneIndex<T> {
    pub fn new(scene: SceneMap<T>) -> Self {
        let cell = 0.5;
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in scene.points.iter().enumerate() {
            let key = ((p[0].as_f64() / cell).floor() as i64, (p[1].as_f64() / cell).floor() as i64);
            cells.entry(key).or_default().push(i as u32);
        }
        Self { scene, cell, cells }
    }

    pub fn scene(&self) -> &SceneMap<T> {
        &self.scene
    }

    /// Same result as [`crop_scene`], in scene order, optionally limited to
    /// points seen by `frame`.
    pub fn crop(&self, head: &SE3Pose<T>, mode: MapMode, frame: usize) -> Vec<Vec3<T>> {
        let center = crop_center(head);
        let yaw = head.yaw();
        // circumscribed radius of the rotated square footprint
        let r = CROP_HALF_EXTENT * std::f64::consts::SQRT_2 + 1e-9;
        let (cx, cy) = (center[0].as_f64(), center[1].as_f64());
        let (x0, x1) = (((cx - r) / self.cell).floor() as i64, ((cx + r) / self.cell).floor() as i64);
        let (y0, y1) = (((cy - r) / self.cell).floor() as i64, ((cy + r) / self.cell).floor() as i64);
        let mut idx: Vec<u32> = Vec::new();
        for gx in x0..=x1 {
            for gy in y0..=y1 {
                if let Some(v) = self.cells.get(&(gx, gy)) {
                    idx.extend_from_slice(v);
                }
            }
        }
        idx.sort_unstable();
        idx.into_iter()
            .filter(|&i| match (mode, &self.scene.first_seen) {
                (MapMode::Incremental, Some(seen)) => seen[i as usize] as usize <= frame,
                _ => true,
            })
            .map(|i| self.scene.points[i as usize])
            .filter(|p| in_crop(p, &center, yaw))
            .collect()
    }
}
