//! Truncated nearest-point distance grid over the crop volume.

use crate::motion::Vec3;
use crate::motion::rotation::{norm3, rot_z};
use crate::scalar::Scalar;

pub const GRID_SIZE: usize = 10;
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE * GRID_SIZE;
/// Half edge length of the crop cube, meters.
pub const CROP_HALF_EXTENT: f64 = 1.0;
/// Vertical offset from head to crop center, meters.
pub const CROP_DOWN_OFFSET: f64 = 1.0;
/// Distance truncation, meters.
pub const TRUNCATION: f64 = 0.1;
pub const VOXEL_SIZE: f64 = 2.0 * CROP_HALF_EXTENT / GRID_SIZE as f64;

/// `10×10×10` distances, x-major (`ix·100 + iy·10 + iz`), each in `[0, 0.1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T: Scalar> {
    pub values: Vec<T>,
    pub center: Vec3<T>,
    pub yaw: T,
}

impl<T: Scalar> VoxelGrid<T> {
    pub fn empty(center: Vec3<T>, yaw: T) -> Self {
        Self { values: vec![T::lit(TRUNCATION); GRID_CELLS], center, yaw }
    }

    pub fn index(ix: usize, iy: usize, iz: usize) -> usize {
        (ix * GRID_SIZE + iy) * GRID_SIZE + iz
    }
}

/// Local (heading frame) coordinate of voxel center `i` along one axis.
pub fn voxel_coord<T: Scalar>(i: usize) -> T {
    T::lit(-CROP_HALF_EXTENT + VOXEL_SIZE * (i as f64 + 0.5))
}

/// World position of voxel `(ix, iy, iz)` for a grid at `center` and `yaw`.
pub fn voxel_center<T: Scalar>(center: &Vec3<T>, yaw: T, ix: usize, iy: usize, iz: usize) -> Vec3<T> {
    center + rot_z(yaw) * Vec3::new(voxel_coord(ix), voxel_coord(iy), voxel_coord(iz))
}

/// Two voxel indices whose centers bracket local coordinate `q`.
fn bracket<T: Scalar>(q: T) -> [usize; 2] {
    let f = ((q.as_f64() + CROP_HALF_EXTENT) / VOXEL_SIZE - 0.5).floor();
    let lo = f.clamp(0.0, (GRID_SIZE - 1) as f64) as usize;
    let hi = (f + 1.0).clamp(0.0, (GRID_SIZE - 1) as f64) as usize;
    [lo, hi]
}

/// Truncated distance from every voxel center to the nearest point.
///
/// Only voxel centers within the truncation radius of a point can be
/// affected by it, and those are among the two bracketing centers per axis,
/// so each point touches at most eight voxels.
pub fn voxelize<T: Scalar>(points: &[Vec3<T>], center: &Vec3<T>, yaw: T) -> VoxelGrid<T> {
    let mut grid = VoxelGrid::empty(*center, yaw);
    let trunc = T::lit(TRUNCATION);
    let to_local = rot_z(-yaw);
    let to_world = rot_z(yaw);
    for p in points {
        let q = to_local * (p - center);
        let h = T::lit(CROP_HALF_EXTENT);
        if q.iter().any(|v| v.abs() > h + trunc) {
            continue;
        }
        let (bx, by, bz) = (bracket(q[0]), bracket(q[1]), bracket(q[2]));
        for &ix in &bx {
            for &iy in &by {
                for &iz in &bz {
                    let c = center + to_world * Vec3::new(voxel_coord(ix), voxel_coord(iy), voxel_coord(iz));
                    let d = norm3(&(p - c)).min(trunc);
                    let slot = &mut grid.values[VoxelGrid::<T>::index(ix, iy, iz)];
                    if d < *slot {
                        *slot = d;
                    }
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::scene::in_crop;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(N·1000) oracle over the cropped subset.
    fn brute(points: &[Vec3<f64>], center: &Vec3<f64>, yaw: f64) -> Vec<f64> {
        let inside: Vec<_> = points.iter().filter(|p| in_crop(p, center, yaw)).collect();
        let mut out = vec![TRUNCATION; GRID_CELLS];
        for ix in 0..GRID_SIZE {
            for iy in 0..GRID_SIZE {
                for iz in 0..GRID_SIZE {
                    let c = voxel_center(center, yaw, ix, iy, iz);
                    let d = inside.iter().map(|p| norm3(&(*p - c))).fold(f64::INFINITY, f64::min);
                    out[VoxelGrid::<f64>::index(ix, iy, iz)] = d.min(TRUNCATION);
                }
            }
        }
        out
    }

    #[test]
    fn empty_grid_is_truncation() {
        let g = voxelize::<f64>(&[], &Vec3::zeros(), 0.4);
        assert!(g.values.iter().all(|v| *v == 0.1));
    }

    #[test]
    fn point_on_voxel_center() {
        let c: Vec3<f64> = Vec3::new(0.5, -0.2, 1.0);
        let p = voxel_center(&c, 0.3, 4, 5, 6);
        let g = voxelize(&[p], &c, 0.3);
        assert!(g.values[VoxelGrid::<f64>::index(4, 5, 6)].abs() < 1e-12);
        // neighbors are one voxel (0.2 m) away: truncated
        assert!((g.values[VoxelGrid::<f64>::index(5, 5, 6)] - 0.1).abs() < 1e-12);
        assert!(g.values.iter().all(|v| (0.0..=0.1).contains(v)));
    }

    #[test]
    fn random_clouds_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let c = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0));
            let yaw = rng.random_range(-3.2..3.2);
            let pts: Vec<_> = (0..50)
                .map(|_| c + Vec3::new(rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3)))
                .collect();
            let g = voxelize(&pts, &c, yaw);
            let o = brute(&pts, &c, yaw);
            for (a, b) in g.values.iter().zip(&o) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn yaw_equivariance_on_voxel_center_clouds() {
        let c: Vec3<f64> = Vec3::new(0.2, 0.1, 0.7);
        let base = 0.25;
        let delta = 1.1;
        let pts: Vec<_> = [(1, 2, 3), (4, 4, 4), (9, 0, 7), (5, 8, 1)]
            .iter()
            .map(|&(x, y, z)| voxel_center(&c, base, x, y, z))
            .collect();
        let rotated: Vec<_> = pts.iter().map(|p| c + rot_z(delta) * (p - c)).collect();
        let a = voxelize(&pts, &c, base);
        let b = voxelize(&rotated, &c, base + delta);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
