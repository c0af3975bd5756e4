use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `d × n` design with i.i.d. `N(0, 1/n)` entries, drawn from `rng`.
pub fn sample_rip_matrix_with<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    // column-major fill keeps the draw order independent of nalgebra internals
    let data: Vec<f64> = (0..d * n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DMatrix::from_vec(d, n, data)
}

/// Deterministic [`sample_rip_matrix_with`] for a fixed seed.
pub fn sample_rip_matrix(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    sample_rip_matrix_with(&mut ChaCha8Rng::seed_from_u64(seed), d, n)
}

fn regularized_gram(x: &DMatrix<f64>, lambda: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("{lambda} must be non-negative")));
    }
    let d = x.nrows();
    let gram = x * x.transpose() + DMatrix::identity(d, d) * lambda;
    let singular = || Error::Singular(format!("XXᵀ + {lambda}·I is not positive definite"));
    let chol = gram.cholesky().ok_or_else(singular)?;
    // rank-deficient Gram matrices can survive factorisation with round-off pivots
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if !(lo > 0.0 && (lo / hi).powi(2) > 1e-14) {
        return Err(singular());
    }
    Ok(chol)
}

/// Minimiser of `‖y − wᵀX‖² + λ‖w‖²`: `w = (XXᵀ + λI)⁻¹ X y`.
pub fn ridge_solution(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if y.len() != x.ncols() {
        return Err(Error::Shape(format!("y has {} entries, X has {} columns", y.len(), x.ncols())));
    }
    Ok(regularized_gram(x, lambda)?.solve(&(x * y)))
}

/// `A = (XXᵀ + λI)⁻¹ XXᵀ`, the map from ground truth to ridge solution.
pub fn ridge_operator(x: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let chol = regularized_gram(x, lambda)?;
    Ok(chol.solve(&(x * x.transpose())))
}

/// Ground truth taken from row `c` of the ridge operator with `α_c = 0`.
/// The ridge solution `Aα` then carries `Σ_{i≠c} A[c,i]²` on coordinate
/// `c`, so magnitude pruning tends to keep it.
pub fn adversarial_alpha(x: &DMatrix<f64>, lambda: f64, c: usize) -> Result<DVector<f64>> {
    let d = x.nrows();
    if c >= d {
        return Err(Error::invalid("zero index", format!("{c} is outside [0, {d})")));
    }
    let a = ridge_operator(x, lambda)?;
    let mut alpha: DVector<f64> = a.row(c).transpose();
    alpha[c] = 0.0;
    Ok(alpha)
}

/// A sparse regression instance with noiseless targets `y = αᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub alpha: DVector<f64>,
    pub zero_index: usize,
    pub lambda: f64,
}

impl LinearProblem {
    pub fn new(x: DMatrix<f64>, alpha: DVector<f64>, zero_index: usize, lambda: f64) -> Result<Self> {
        let d = x.nrows();
        if alpha.len() != d {
            return Err(Error::Shape(format!("alpha has {} entries, X has {d} rows", alpha.len())));
        }
        if zero_index >= d {
            return Err(Error::invalid("zero index", format!("{zero_index} is outside [0, {d})")));
        }
        if alpha[zero_index] != 0.0 {
            return Err(Error::invalid("alpha", format!("alpha[{zero_index}] must be zero")));
        }
        if lambda < 0.0 {
            return Err(Error::invalid("lambda", "must be non-negative"));
        }
        let y = x.transpose() * &alpha;
        Ok(Self {
            x,
            y,
            alpha,
            zero_index,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    /// `‖y − wᵀX‖²`.
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        (self.x.transpose() * w - &self.y).norm_squared()
    }

    pub fn ridge(&self) -> Result<DVector<f64>> {
        ridge_solution(&self.x, &self.y, self.lambda)
    }
}
