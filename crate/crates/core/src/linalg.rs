//! Ridge regression through the normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `min ||X w - y||^2 + lambda ||w||^2`. At `lambda == 0` a
/// rank-deficient design is reported instead of solved.
pub fn ridge(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidModel("no training samples".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidModel(format!("ridge penalty must be a finite non-negative number, got {lambda}")));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) || targets.len() != rows.len() {
        return Err(Error::InvalidModel("ragged design matrix".into()));
    }
    if rows.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("non-finite training value".into()));
    }
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(targets);
    let mut gram = x.transpose() * &x;
    let rhs = x.transpose() * y;

    if lambda == 0.0 {
        let rank = numerical_rank(&gram);
        if rank < p {
            return Err(Error::RankDeficient { rank, expected: p });
        }
    }
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let solution = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(Error::RankDeficient {
            rank: 0,
            expected: p,
        })?,
    };
    Ok(solution.iter().copied().collect())
}

fn numerical_rank(gram: &DMatrix<f64>) -> usize {
    let sv = gram.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let tol = max * f64::EPSILON * gram.nrows() as f64 * 16.0;
    sv.iter().filter(|&&s| s > tol).count()
}
