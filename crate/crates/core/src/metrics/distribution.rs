//! Distribution-level metrics on motion latents: Fréchet distance and
//! diversity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const COVARIANCE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frechet {
    pub value: f64,
    /// A covariance was near-singular and the ridge was added.
    pub regularized: bool,
}

fn moments(x: &Array2<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, k) = x.dim();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mut mean = DVector::zeros(k);
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(k, k);
    for row in x.rows() {
        let d = DVector::from_iterator(k, row.iter().copied()) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (n - 1) as f64;
    Ok((mean, cov))
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let vals = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

fn min_eigen(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2(Σa Σb)^½)` between Gaussian fits of the
/// rows of `a` and `b`.
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<Frechet> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!("latent widths {} and {}", a.ncols(), b.ncols())));
    }
    let (ma, mut ca) = moments(a)?;
    let (mb, mut cb) = moments(b)?;
    let k = a.ncols();
    let mut regularized = false;
    for c in [&mut ca, &mut cb] {
        if min_eigen(c) < COVARIANCE_RIDGE {
            *c += DMatrix::identity(k, k) * COVARIANCE_RIDGE;
            regularized = true;
        }
    }
    // (Σa Σb)^½ has the same trace as (√Σa Σb √Σa)^½, which is symmetric.
    let sa = sqrt_psd(&ca);
    let inner = &sa * &cb * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let value = (&ma - &mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * tr_cross;
    Ok(Frechet { value: value.max(0.0), regularized })
}

/// Default subset size, reduced to fit small sets.
pub fn diversity_subset(n: usize) -> usize {
    200.min(n / 2)
}

/// Mean distance between index-aligned members of two disjoint random
/// subsets of `latents`.
pub fn diversity(latents: &Array2<f64>, subset: usize, seed: u64) -> Result<f64> {
    let n = latents.nrows();
    if subset == 0 || n < 2 * subset {
        return Err(Error::TooFewSamples { need: 2 * subset.max(1), got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(mean_pair_distance(latents, &idx[..subset], latents, &idx[subset..2 * subset]))
}

/// Same, with one subset drawn from predictions and the other from ground truth.
pub fn cross_diversity(pred: &Array2<f64>, gt: &Array2<f64>, subset: usize, seed: u64) -> Result<f64> {
    let n = pred.nrows().min(gt.nrows());
    if subset == 0 || n < subset {
        return Err(Error::TooFewSamples { need: subset.max(1), got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ia: Vec<usize> = (0..pred.nrows()).collect();
    let mut ib: Vec<usize> = (0..gt.nrows()).collect();
    ia.shuffle(&mut rng);
    ib.shuffle(&mut rng);
    Ok(mean_pair_distance(pred, &ia[..subset], gt, &ib[..subset]))
}

fn mean_pair_distance(a: &Array2<f64>, ia: &[usize], b: &Array2<f64>, ib: &[usize]) -> f64 {
    let total: f64 = ia
        .iter()
        .zip(ib)
        .map(|(&i, &j)| a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum();
    total / ia.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::gaussian;

    #[test]
    fn identical_sets_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Array2<f64> = gaussian(&mut rng, (300, 8));
        let b: Array2<f64> = gaussian::<f64, _>(&mut rng, (300, 8)).mapv(|v| 1.5 * v + 0.2);
        assert!(frechet_distance(&a, &a).unwrap().value < 1e-6);
        let ab = frechet_distance(&a, &b).unwrap().value;
        let ba = frechet_distance(&b, &a).unwrap().value;
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn mean_shift_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Array2<f64> = gaussian(&mut rng, (500, 4));
        let mut b = a.clone();
        b.column_mut(0).mapv_inplace(|v| v + 3.0);
        // identical sample covariance, mean offset of 3 along one axis
        assert!((frechet_distance(&a, &b).unwrap().value - 9.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_sets_are_regularized() {
        let a = Array2::from_shape_fn((3, 5), |(i, j)| (i + j) as f64);
        let f = frechet_distance(&a, &a).unwrap();
        assert!(f.regularized && f.value < 1e-6);
        assert!(matches!(frechet_distance(&a.slice(ndarray::s![0..1, ..]).to_owned(), &a), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn diversity_cases() {
        let same = Array2::from_elem((10, 3), 0.5);
        assert_eq!(diversity(&same, 5, 1).unwrap(), 0.0);
        assert!(matches!(diversity(&same, 6, 1), Err(Error::TooFewSamples { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Array2<f64> = gaussian(&mut rng, (40, 3));
        assert_eq!(diversity(&x, 10, 7).unwrap(), diversity(&x, 10, 7).unwrap());
        assert_eq!(diversity_subset(1000), 200);
        assert_eq!(diversity_subset(30), 15);
    }

    #[test]
    fn two_cluster_expectation_matches_enumeration() {
        // {a, a, b, b} with |a − b| = d; subsets of size 2
        let d = 2.0;
        let pts: Array2<f64> = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, d, d]).unwrap();
        let mut perms = Vec::new();
        let items = [0usize, 1, 2, 3];
        for &p0 in &items {
            for &p1 in &items {
                for &p2 in &items {
                    for &p3 in &items {
                        let p = [p0, p1, p2, p3];
                        if (0..4).all(|i| (0..4).all(|j| i == j || p[i] != p[j])) {
                            perms.push(p);
                        }
                    }
                }
            }
        }
        let exact: f64 = perms
            .iter()
            .map(|p| ((pts[[p[0], 0]] - pts[[p[2], 0]]).abs() + (pts[[p[1], 0]] - pts[[p[3], 0]]).abs()) / 2.0)
            .sum::<f64>()
            / perms.len() as f64;
        assert!((exact - 4.0 / 3.0).abs() < 1e-12);
        let trials = 20_000;
        let mc: f64 = (0..trials).map(|s| diversity(&pts, 2, s).unwrap()).sum::<f64>() / trials as f64;
        assert!((mc - exact).abs() < 0.02 * exact, "{mc} vs {exact}");
    }
}
