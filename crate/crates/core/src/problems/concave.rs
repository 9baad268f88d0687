//! Least squares with a concave penalty of the Gram matrix:
//! `min_X ||AX − Y||_F² + μ h(XXᵀ + δI)`.

use crate::engine::{ConcavePenalty, ConcaveProblem};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, DenseMatrix};

pub struct PenalizedLeastSquares<H> {
    pub a: DenseMatrix,
    pub y: DenseMatrix,
    pub mu: f64,
    pub delta: f64,
    pub penalty: H,
}

impl<H: ConcavePenalty> PenalizedLeastSquares<H> {
    pub fn new(a: DenseMatrix, y: DenseMatrix, mu: f64, delta: f64, penalty: H) -> Result<Self> {
        if a.nrows() != y.nrows() {
            return Err(Error::Shape(format!("A has {} rows, Y has {}", a.nrows(), y.nrows())));
        }
        if !(mu >= 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need mu >= 0 and delta > 0, got {mu} and {delta}"
            )));
        }
        Ok(Self { a, y, mu, delta, penalty })
    }

    pub fn zero_start(&self) -> DenseMatrix {
        DenseMatrix::zeros(self.a.ncols(), self.y.ncols())
    }
}

impl<H: ConcavePenalty> ConcaveProblem for PenalizedLeastSquares<H> {
    type Iterate = DenseMatrix;

    fn loss(&self, x: &DenseMatrix) -> f64 {
        (&self.a * x - &self.y).norm_squared()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn penalties(&self) -> Vec<&dyn ConcavePenalty> {
        vec![&self.penalty]
    }

    fn grams(&self, x: &DenseMatrix) -> Vec<DenseMatrix> {
        vec![x * x.transpose()]
    }

    fn solve_weighted(&self, weights: &[DenseMatrix], _x: &DenseMatrix) -> Result<DenseMatrix> {
        let k = self.a.transpose() * &self.a + &weights[0] * self.mu;
        spd_solve(&k, &(self.a.transpose() * &self.y))
    }

    fn stationarity(&self, x: &DenseMatrix, weights: &[DenseMatrix]) -> Option<f64> {
        let grad = self.a.transpose() * (&self.a * x - &self.y) * 2.0 + &weights[0] * x * (2.0 * self.mu);
        Some(grad.norm())
    }
}
