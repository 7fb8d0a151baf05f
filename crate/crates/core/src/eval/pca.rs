//! Principal-component projection of latent vectors to three dimensions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub const PCA_DIMS: usize = 3;
pub const PCA_MIN_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Unit principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component (sample covariance, `n - 1`).
    pub explained_variance: Vec<f64>,
    /// Trace of the covariance.
    pub total_variance: f64,
    pub points: Vec<[f64; PCA_DIMS]>,
}

impl PcaProjection {
    /// Maps projected coordinates back into the original space.
    pub fn back_project(&self, point: &[f64; PCA_DIMS]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(point) {
            out.iter_mut().zip(c).for_each(|(o, ci)| *o += w * ci);
        }
        out
    }
}

/// Sample covariance of row vectors, `n - 1` normalised.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

pub fn pca_project(latents: &[Vec<f64>]) -> Result<PcaProjection> {
    if latents.len() < PCA_MIN_POINTS {
        return Err(Error::invalid(format!(
            "PCA needs at least {PCA_MIN_POINTS} vectors, got {}",
            latents.len()
        )));
    }
    let d = latents[0].len();
    if d < PCA_DIMS {
        return Err(Error::invalid(format!("PCA needs at least {PCA_DIMS} dimensions, got {d}")));
    }
    if let Some(bad) = latents.iter().find(|v| v.len() != d) {
        return Err(Error::ShapeMismatch {
            context: "pca input",
            expected: vec![d],
            actual: vec![bad.len()],
        });
    }
    if latents.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("PCA input contains non-finite values".into()));
    }

    let (mean, cov) = covariance(latents);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    // Eigenvalues below round-off of the largest are zero variance.
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = 64.0 * d as f64 * f64::EPSILON * top;
    let mut components = Vec::with_capacity(PCA_DIMS);
    let mut explained_variance = Vec::with_capacity(PCA_DIMS);
    for &k in &order[..PCA_DIMS] {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let lambda = eig.eigenvalues[k];
        explained_variance.push(if lambda <= tol { 0.0 } else { lambda });
        components.push(v);
    }

    let points = latents
        .iter()
        .map(|x| {
            let mut p = [0.0; PCA_DIMS];
            for (pk, c) in p.iter_mut().zip(&components) {
                *pk = x.iter().zip(&mean).zip(c).map(|((xi, mi), ci)| (xi - mi) * ci).sum();
            }
            p
        })
        .collect();
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
        total_variance,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_latents(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[]);
        (0..n)
            .map(|_| (0..10).map(|j| r.random_range(-1.0..1.0) * (10 - j) as f64).collect())
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn too_few_points() {
        assert!(pca_project(&random_latents(3, 1)).is_err());
        assert!(pca_project(&random_latents(4, 1)).is_ok());
    }

    #[test]
    fn ragged_input_rejected() {
        let mut v = random_latents(6, 2);
        v[3].pop();
        assert!(pca_project(&v).is_err());
    }

    #[test]
    fn orthonormal_and_descending() {
        for seed in 0..10 {
            let p = pca_project(&random_latents(50, seed)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&p.components[i], &p.components[j]) - want).abs() < 1e-10);
                }
            }
            assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
            assert!(p.explained_variance.iter().sum::<f64>() <= p.total_variance + 1e-12);
        }
    }

    #[test]
    fn variance_matches_projected_points() {
        let p = pca_project(&random_latents(40, 7)).unwrap();
        for k in 0..3 {
            let var = p.points.iter().map(|q| q[k] * q[k]).sum::<f64>() / 39.0;
            assert!((var - p.explained_variance[k]).abs() < 1e-9 * p.total_variance);
        }
    }

    #[test]
    fn rank_one_collapses() {
        let dir: Vec<f64> = (0..10).map(|j| (j as f64 + 1.0).sqrt()).collect();
        let latents: Vec<Vec<f64>> = (0..20).map(|i| dir.iter().map(|d| d * (i as f64 - 7.5)).collect()).collect();
        let p = pca_project(&latents).unwrap();
        assert!(p.explained_variance[0] > 0.0);
        assert_eq!(p.explained_variance[1], 0.0);
        assert_eq!(p.explained_variance[2], 0.0);
        let scale = p.points.iter().map(|q| q[0].abs()).fold(0.0, f64::max);
        assert!(p.points.iter().all(|q| q[1].abs() < 1e-9 * scale && q[2].abs() < 1e-9 * scale));
    }

    #[test]
    fn back_projection_never_adds_variance() {
        let latents = random_latents(30, 3);
        let p = pca_project(&latents).unwrap();
        let back: Vec<Vec<f64>> = p.points.iter().map(|q| p.back_project(q)).collect();
        let (_, cov) = covariance(&back);
        assert!(cov.trace() <= p.total_variance + 1e-12);
    }
}
