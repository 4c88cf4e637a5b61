//! Ground-contact metrics: foot sliding while in contact, and floor
//! penetration against a ground-truth floor proxy.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::motion::{Skeleton, WorldMotion};

pub const CONTACT_THRESHOLD_M: f64 = 0.05;
pub const GRAVITY: f64 = 9.81;

/// Lowest joint height per frame.
pub fn lowest_joint(world: &WorldMotion<f64>) -> Vec<f64> {
    (0..world.frames())
        .map(|f| (0..world.positions.shape()[1]).map(|j| world.positions[[f, j, 2]]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Sliding minimum over `[i − half, i + half]`, clipped to the sequence.
pub fn sliding_min(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut q: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while q.back().is_some_and(|&b| values[b] >= values[next]) {
                q.pop_back();
            }
            q.push_back(next);
            next += 1;
        }
        while q.front().is_some_and(|&f| f + half < i) {
            q.pop_front();
        }
        out.push(values[*q.front().expect("window is never empty")]);
    }
    out
}

/// Floor height per frame: the lowest ground-truth joint within ±`half_window_s`.
pub fn floor_proxy(gt: &WorldMotion<f64>, half_window_s: f64, fps: f64) -> Vec<f64> {
    let half = (half_window_s * fps).round() as usize;
    sliding_min(&lowest_joint(gt), half)
}

/// Mean depth (cm) by which the lowest predicted joint sinks below the
/// ground-truth floor proxy.
pub fn floor_penetration(pred: &WorldMotion<f64>, gt: &WorldMotion<f64>, half_window_s: f64, fps: f64) -> Result<f64> {
    if pred.frames() != gt.frames() {
        return Err(Error::LengthMismatch(format!("prediction {} frames, ground truth {}", pred.frames(), gt.frames())));
    }
    if pred.frames() == 0 {
        return Err(Error::EmptySequence);
    }
    let proxy = floor_proxy(gt, half_window_s, fps);
    let low = lowest_joint(pred);
    let total: f64 = proxy.iter().zip(&low).map(|(p, l)| (p - l).max(0.0)).sum();
    Ok(total / pred.frames() as f64 * 100.0)
}

/// Foot-sliding score in m/s: over every (foot joint, frame) whose height
/// is within 5 cm of the floor, the horizontal foot speed weighted by
/// `1 + ‖a_com‖ / g`, averaged. The center of mass is the joint centroid.
/// Zero when no foot is ever in contact.
pub fn physicality(pred: &WorldMotion<f64>, skeleton: &Skeleton<f64>, floor: &[f64], fps: f64) -> Result<f64> {
    let n = pred.frames();
    if floor.len() != n {
        return Err(Error::LengthMismatch(format!("{n} frames but {} floor values", floor.len())));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let dt = 1.0 / fps;
    let joints = pred.positions.shape()[1];
    let com: Vec<[f64; 3]> = (0..n)
        .map(|f| {
            let mut c = [0.0; 3];
            for j in 0..joints {
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck += pred.positions[[f, j, k]] / joints as f64;
                }
            }
            c
        })
        .collect();
    let accel = |f: usize| -> f64 {
        if n < 3 {
            return 0.0;
        }
        let i = f.clamp(1, n - 2);
        let a: f64 = (0..3).map(|k| ((com[i + 1][k] - 2.0 * com[i][k] + com[i - 1][k]) / (dt * dt)).powi(2)).sum();
        a.sqrt()
    };
    let (mut total, mut count) = (0.0, 0usize);
    for &foot in &skeleton.feet {
        for f in 0..n {
            if pred.positions[[f, foot, 2]] - floor[f] > CONTACT_THRESHOLD_M {
                continue;
            }
            let (a, b) = if f == 0 { (0, 1) } else if f == n - 1 { (n - 2, n - 1) } else { (f - 1, f + 1) };
            let span = (b - a) as f64 * dt;
            let dx = pred.positions[[b, foot, 0]] - pred.positions[[a, foot, 0]];
            let dy = pred.positions[[b, foot, 1]] - pred.positions[[a, foot, 1]];
            let speed = (dx * dx + dy * dy).sqrt() / span;
            total += speed * (1.0 + accel(f) / GRAVITY);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{forward_kinematics, Mat3, SE3Pose, Vec3};
    use ndarray::Array3;

    fn standing(frames: usize, lift: f64) -> (Skeleton<f64>, WorldMotion<f64>) {
        let sk = Skeleton::xsens23();
        let rots = vec![Mat3::identity(); 23];
        let root = SE3Pose::from_translation(Vec3::new(0.0, 0.0, 0.96 + lift));
        let p = forward_kinematics(&sk, &rots, &root);
        let positions = Array3::from_shape_fn((frames, 23, 3), |(_, j, k)| p[j][k]);
        (sk, WorldMotion { root: vec![root; frames], positions })
    }

    #[test]
    fn sliding_min_matches_brute_force() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37 % 23) as f64).sin()).collect();
        for half in [0, 1, 3, 10, 60] {
            let fast = sliding_min(&v, half);
            for i in 0..v.len() {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(v.len() - 1);
                let brute = v[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(fast[i], brute);
            }
        }
    }

    #[test]
    fn penetration_cases() {
        let (_, gt) = standing(20, 0.0);
        assert_eq!(floor_penetration(&gt, &gt, 10.0, 60.0).unwrap(), 0.0);
        let mut sunk = gt.clone();
        for f in 0..10 {
            for j in [18, 22] {
                sunk.positions[[f, j, 2]] -= 0.02;
            }
        }
        // lowest gt joint is a toe; sinking both toes by 2 cm on half the frames
        assert!((floor_penetration(&sunk, &gt, 10.0, 60.0).unwrap() - 1.0).abs() < 1e-9);
        let (_, high) = standing(20, 0.3);
        assert_eq!(floor_penetration(&high, &gt, 10.0, 60.0).unwrap(), 0.0);
        assert!(floor_penetration(&high.slice(0, 5), &gt, 10.0, 60.0).is_err());
    }

    #[test]
    fn physicality_cases() {
        let (sk, still) = standing(30, 0.0);
        let floor = floor_proxy(&still, 10.0, 60.0);
        assert_eq!(physicality(&still, &sk, &floor, 60.0).unwrap(), 0.0);
        let mut slide = still.clone();
        for f in 0..30 {
            for &j in &sk.feet {
                slide.positions[[f, j, 0]] += 0.1 * f as f64 / 60.0;
            }
        }
        let s = physicality(&slide, &sk, &floor, 60.0).unwrap();
        assert!(s > 0.0);
        let mut faster = still.clone();
        for f in 0..30 {
            for &j in &sk.feet {
                faster.positions[[f, j, 0]] += 0.3 * f as f64 / 60.0;
            }
        }
        assert!(physicality(&faster, &sk, &floor, 60.0).unwrap() > s);
        let (_, air) = standing(30, 0.5);
        assert_eq!(physicality(&air, &sk, &floor, 60.0).unwrap(), 0.0);
    }
}
