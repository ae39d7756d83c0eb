use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Classical (Torgerson) scaling.
///
/// Double-centres the squared distances, `B = -1/2 J D^2 J`, and returns
/// the top `dim` eigenvectors of `B` scaled by the square roots of their
/// eigenvalues (negative eigenvalues clamp to zero). Each coordinate axis
/// is oriented so that its largest-magnitude entry is positive.
pub fn classical_mds(d: ArrayView2<'_, f64>, dim: usize) -> Result<Array2<f64>> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::Shape(format!("distance matrix is {:?}", d.dim())));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
    }
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            let v = d[[i, j]];
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("entry ({i}, {j}) = {v} is not a distance")));
            }
            if (v - d[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    if n == 0 {
        return Ok(Array2::zeros((0, dim)));
    }

    let sq = d.mapv(|v| v * v);
    let row_means: Vec<f64> = sq.rows().into_iter().map(|r| r.sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[[i, j]] - row_means[i] - row_means[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));

    let mut coords = Array2::zeros((n, dim));
    for (axis, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let vec = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..n {
            if vec[i].abs() > vec[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
        let s = sign * lambda.sqrt();
        for i in 0..n {
            coords[[i, axis]] = s * vec[i];
        }
    }
    Ok(coords)
}
