use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::euclidean;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdsPoint {
    pub x: f64,
    pub y: f64,
    pub group: String,
}

/// Classical MDS: eigendecomposition of the double-centred squared distance
/// matrix, keeping the top `dims` eigenpairs. Each axis is oriented so that
/// its largest-magnitude coordinate is positive.
pub fn mds_project(points: &[Vec<f64>], dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::input(format!("MDS needs at least 3 points, got {n}")));
    }
    if dims == 0 || dims > n {
        return Err(Error::input(format!("cannot embed {n} points in {dims} dimensions")));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| euclidean(&points[i], &points[j]).powi(2));
    let row_mean: Vec<f64> = (0..n).map(|i| d2.row(i).mean()).collect();
    let grand = d2.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let mut out = vec![vec![0.0; dims]; n];
    for (axis, &k) in order.iter().take(dims).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        let col = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[i][axis] = sign * scale * col[i];
        }
    }
    Ok(out)
}

/// Sum of squared differences between pairwise distances before and after
/// embedding.
pub fn stress(original: &[Vec<f64>], embedded: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..original.len() {
        for j in i + 1..original.len() {
            s += (euclidean(&original[i], &original[j]) - euclidean(&embedded[i], &embedded[j])).powi(2);
        }
    }
    s
}

pub fn write_mds_csv<W: Write>(w: W, points: &[MdsPoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for p in points {
        csv.serialize(p)?;
    }
    csv.flush()?;
    Ok(())
}
