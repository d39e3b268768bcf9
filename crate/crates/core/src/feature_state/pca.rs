//! Principal-component projection of raw embeddings down to the mixture
//! component count.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a component counts as absent.
const RANK_TOL: f64 = 1e-10;

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn fit_length(v: &[f64], k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().take(k).copied().collect();
    out.resize(k, 0.0);
    out
}

/// Projects `raw` (n vectors of dimension d) onto its top `target_k`
/// principal components.
///
/// Vectors are L2-normalized and mean-centered first. When fewer than
/// `target_k` components exist (rank limited by `n − 1` or `d`), the tail is
/// zero-padded. With fewer than two vectors no projection can be fitted and
/// the normalized raw vectors are truncated or padded instead. Component
/// signs are fixed so the largest-magnitude loading is positive.
pub fn reduce_dimensions(raw: &[Vec<f64>], target_k: usize) -> Result<Vec<Vec<f64>>> {
    if target_k == 0 {
        return Err(Error::InvalidArgument("target dimension must be positive".into()));
    }
    let n = raw.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = raw[0].len();
    if let Some(bad) = raw.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
            context: "raw embeddings must share one dimension".into(),
        });
    }
    let normed: Vec<Vec<f64>> = raw.iter().map(|v| l2_normalized(v)).collect();
    if n < 2 || d == 0 {
        return Ok(normed.iter().map(|v| fit_length(v, target_k)).collect());
    }

    let mut mean = vec![0.0; d];
    for v in &normed {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| normed[i][j] - mean[j]);
    // Gram-matrix route: n is the feature count, usually far below d.
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let threshold = RANK_TOL * top.max(1e-300);

    let mut out = vec![vec![0.0; target_k]; n];
    for (c, &idx) in order.iter().take(target_k.min(n - 1).min(d)).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= threshold || lambda <= 0.0 {
            break;
        }
        let u = eig.eigenvectors.column(idx);
        let pivot = (0..n).fold(0, |best, i| if u[i].abs() > u[best].abs() + 1e-12 { i } else { best });
        let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            out[i][c] = u[i] * scale;
        }
    }
    Ok(out)
}
