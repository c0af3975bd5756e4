use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Upper bound `C(d, d − n)` on the number of `n`-sparse exact solutions.
pub fn sparse_solution_bound(d: usize, n: usize) -> Result<u128> {
    if d <= n {
        return Err(Error::invalid("dimensions", format!("need d > n, got d = {d}, n = {n}")));
    }
    let k = n.min(d - n) as u128;
    let d = d as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc · (d − i) is divisible by (i + 1) at every step
        acc = acc
            .checked_mul(d - i)
            .ok_or_else(|| Error::Overflow(format!("C({d}, {k}) in u128")))?
            / (i + 1);
    }
    Ok(acc)
}

/// Orthonormal basis (as columns) of `{v : vᵀX = 0}`.
pub fn left_null_space(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = x.shape();
    // pad to square so the SVD returns a full set of left singular vectors
    let mut padded = DMatrix::zeros(d, d.max(n));
    padded.view_mut((0, 0), (d, n)).copy_from(x);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors were requested");
    let smax = svd.singular_values.max();
    let tol = smax.max(1.0) * (d.max(n) as f64) * f64::EPSILON * 16.0;
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= tol)
        .collect();
    DMatrix::from_fn(d, cols.len(), |r, c| u[(r, cols[c])])
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparserSolution {
    Solution(DVector<f64>),
    /// No combination of null-space directions moves both coordinates.
    Degenerate,
}

/// Another exact solution of `wᵀX = αᵀX` with `w_i = w_j = 0`, obtained by
/// adding left-null-space directions to `α`.
///
/// With a null basis `V`, solves `V[{i,j},:] γ = −α[{i,j}]`; for more than two
/// null dimensions the minimum-norm `γ` is used.
pub fn construct_sparser_solution(x: &DMatrix<f64>, alpha: &DVector<f64>, i: usize, j: usize) -> Result<SparserSolution> {
    let (d, n) = x.shape();
    if alpha.len() != d {
        return Err(Error::Shape(format!("alpha has {} entries, X has {d} rows", alpha.len())));
    }
    if d < n + 2 {
        return Err(Error::invalid("dimensions", format!("need d − n ≥ 2, got d = {d}, n = {n}")));
    }
    if i >= d || j >= d || i == j {
        return Err(Error::invalid("indices", format!("need distinct i, j < {d}, got {i}, {j}")));
    }
    let v = left_null_space(x);
    if v.ncols() < 2 {
        return Ok(SparserSolution::Degenerate);
    }
    let sub = v.select_rows(&[i, j]);
    let rhs = DVector::from_vec(vec![-alpha[i], -alpha[j]]);
    let svd = sub.svd(true, true);
    if svd.singular_values.min() < 1e-10 {
        return Ok(SparserSolution::Degenerate);
    }
    let gamma = svd.solve(&rhs, 0.0).expect("both singular-vector sets were computed");
    let mut w = alpha + v * gamma;
    w[i] = 0.0;
    w[j] = 0.0;
    Ok(SparserSolution::Solution(w))
}
