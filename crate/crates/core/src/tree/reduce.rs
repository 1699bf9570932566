//! Dimensionality reduction ahead of tag clustering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub trait Reducer: Send + Sync {
    /// Map `points` to `target_dim` components, preserving order. Must be
    /// deterministic for identical input.
    fn reduce(&self, points: &[Embedding], target_dim: usize) -> Result<Vec<Embedding>>;
}

/// Pass-through reducer, useful when the input is already low-dimensional.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityReducer;

impl Reducer for IdentityReducer {
    fn reduce(&self, points: &[Embedding], _target_dim: usize) -> Result<Vec<Embedding>> {
        Ok(points.to_vec())
    }
}

/// Exact PCA: center, then project onto the leading principal directions.
/// Each direction is sign-normalized so its largest-magnitude component is
/// positive (first such component on ties).
#[derive(Clone, Copy, Debug, Default)]
pub struct PcaReducer;

/// Principal directions of `points`, as rows, sorted by explained variance.
pub fn principal_directions(points: &[Embedding], k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("pca over zero points"));
    }
    let d = points[0].dim();
    for p in points {
        p.check_dim(d)?;
    }
    let k = k.min(d);
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| points[i].values()[j] - mean[j]);

    // Work in whichever of the n×n Gram or d×d scatter matrix is smaller.
    let mut pairs: Vec<(f64, DVector<f64>)> = if n < d {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .map(|i| {
                let u = eig.eigenvectors.column(i);
                let mut v = centered.transpose() * u;
                let norm = v.norm();
                if norm > 1e-300 {
                    v /= norm;
                } else {
                    v.fill(0.0);
                }
                (eig.eigenvalues[i], v)
            })
            .collect()
    } else {
        let scatter = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(scatter);
        (0..d)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut dirs: Vec<Vec<f64>> = pairs
        .into_iter()
        .take(k)
        .map(|(_, v)| {
            let mut v: Vec<f64> = v.iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, x)| {
                    if x.abs() > best.1 {
                        (i, x.abs())
                    } else {
                        best
                    }
                })
                .0;
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    // Rank-deficient input: pad with zero directions.
    dirs.resize(k, vec![0.0; d]);
    Ok((mean, dirs))
}

impl Reducer for PcaReducer {
    fn reduce(&self, points: &[Embedding], target_dim: usize) -> Result<Vec<Embedding>> {
        if target_dim == 0 {
            return Err(Error::Validation("target_dim must be >= 1".into()));
        }
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let (mean, dirs) = principal_directions(points, target_dim)?;
        points
            .iter()
            .map(|p| {
                let centered: Vec<f64> = p.values().iter().zip(&mean).map(|(x, m)| x - m).collect();
                Embedding::new(
                    dirs.iter()
                        .map(|dir| dir.iter().zip(&centered).map(|(a, b)| a * b).sum())
                        .collect(),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn recovers_dominant_axis_with_sign_convention() {
        // Spread along (1, 1) with tiny orthogonal jitter.
        let pts: Vec<Embedding> = (-3..=3)
            .map(|t| {
                let t = t as f64;
                e(&[t - 0.01 * t * t, t + 0.01 * t * t])
            })
            .collect();
        let (_, dirs) = principal_directions(&pts, 1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((dirs[0][0] - s).abs() < 1e-3 && (dirs[0][1] - s).abs() < 1e-3);
        let reduced = PcaReducer.reduce(&pts, 1).unwrap();
        assert_eq!(reduced.len(), pts.len());
        assert!(reduced[0].values()[0] < 0.0 && reduced[6].values()[0] > 0.0);
    }

    #[test]
    fn gram_and_scatter_paths_agree() {
        // 4 points in 6 dims uses the Gram path; padding to 8 points the
        // scatter path. Duplicated points leave the directions unchanged.
        let base = vec![
            e(&[1.0, 0.0, 2.0, 0.0, 0.5, 0.0]),
            e(&[0.0, 1.0, 0.0, 3.0, 0.0, 0.1]),
            e(&[2.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            e(&[0.5, 0.5, 1.0, 1.0, 0.0, 2.0]),
        ];
        let doubled: Vec<Embedding> = base.iter().chain(base.iter()).cloned().collect();
        let (_, a) = principal_directions(&base, 3).unwrap();
        let (_, b) = principal_directions(&doubled, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-8, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn deterministic_and_padded() {
        let pts = vec![e(&[1.0, 2.0, 3.0]), e(&[1.0, 2.0, 3.0])];
        let a = PcaReducer.reduce(&pts, 2).unwrap();
        assert_eq!(a, PcaReducer.reduce(&pts, 2).unwrap());
        assert!(a
            .iter()
            .all(|p| p.dim() == 2 && p.values().iter().all(|v| v.abs() < 1e-12)));
    }
}
