use proptest::prelude::*;

use hmd_core::conditioning::voxelize;
use hmd_core::data::GlobalConfig;
use hmd_core::metrics::percentile_report;
use hmd_core::motion::rotation::{exp_so3, log_so3, rot_z};
use hmd_core::motion::{canonicalize_poses, matrix_to_rot6d, rot6d_to_matrix, SE3Pose, Vec3};

fn vec3(r: f64) -> impl Strategy<Value = Vec3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = SE3Pose<f64>> {
    (vec3(5.0), vec3(3.0)).prop_map(|(t, w)| SE3Pose::new(t, exp_so3(&w)))
}

proptest! {
    #[test]
    fn rot6d_round_trip(w in vec3(3.1)) {
        let r = exp_so3(&w);
        let back = rot6d_to_matrix(&matrix_to_rot6d(&r).unwrap()).unwrap();
        prop_assert!((back - r).abs().max() < 1e-12);
    }

    #[test]
    fn log_inverts_exp(w in vec3(1.0)) {
        prop_assert!((log_so3(&exp_so3(&w)) - w).abs().max() < 1e-9);
    }

    #[test]
    fn canonical_poses_recover_input(poses in prop::collection::vec(pose(), 1..12)) {
        let (canon, anchor) = canonicalize_poses(&poses);
        prop_assert!(canon[0].t.norm() < 1e-12);
        prop_assert!(canon[0].yaw().abs() < 1e-9);
        for (c, p) in canon.iter().zip(&poses) {
            let q = anchor.compose(c);
            prop_assert!((q.t - p.t).abs().max() < 1e-9);
            prop_assert!((q.r - p.r).abs().max() < 1e-9);
            // gravity stays vertical
            prop_assert!((c.r.row(2) - p.r.row(2)).abs().max() < 1e-9);
        }
    }

    #[test]
    fn voxels_are_bounded_and_yaw_equivariant(
        pts in prop::collection::vec(vec3(1.2), 0..40),
        yaw in -3.1..3.1f64,
        turn in -3.1..3.1f64,
    ) {
        let center = Vec3::new(0.3, -0.2, 1.0);
        let world: Vec<_> = pts.iter().map(|p| center + p).collect();
        let g = voxelize(&world, &center, yaw);
        prop_assert!(g.values.iter().all(|v| (0.0..=0.1).contains(v)));
        let turned: Vec<_> = world.iter().map(|p| center + rot_z(turn) * (p - center)).collect();
        let h = voxelize(&turned, &center, yaw + turn);
        for (a, b) in g.values.iter().zip(&h.values) {
            // points on a crop face may fall either side after rotation
            prop_assert!((a - b).abs() < 1e-9 || pts.iter().any(|p| (p.abs().max() - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn percentile_lies_between_extremes(seqs in prop::collection::vec(prop::collection::vec(0.0..100.0f64, 1..30), 1..5), q in 0.0..1.0f64) {
        let v = percentile_report(&seqs, q).unwrap();
        let lo = seqs.iter().map(|s| s.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / seqs.len() as f64;
        let hi = seqs.iter().map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>() / seqs.len() as f64;
        prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
    }

    #[test]
    fn stride_overrides_validate(h in 0usize..400) {
        let cfg = GlobalConfig::default().with_overrides(&[format!("streaming.stride={h}")]);
        prop_assert_eq!(cfg.is_ok(), (1..=240).contains(&h));
    }
}
