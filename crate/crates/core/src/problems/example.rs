//! `min_X ||AX − Y||_{p,p}^p + μ₁||BX − Z||_{2,p}^p + μ₂||X||_{S_p}^p`,
//! every term δ-smoothed.

use crate::engine::{run_irw, IrwConfig, IrwProblem, SolveTrace};
use crate::error::{Error, Result};
use crate::linalg::{
    smoothed_term_value, smoothed_weight, spd_solve, DenseMatrix, DenseVector, NormKind,
    SmoothedNormSpec, Weight,
};

#[derive(Clone, Debug)]
pub struct ExampleProblemData {
    pub a: DenseMatrix,
    pub y: DenseMatrix,
    pub b: DenseMatrix,
    pub z: DenseMatrix,
    pub mu1: f64,
    pub mu2: f64,
    /// Shared `p` and `δ`; the kind is fixed per term.
    pub spec: SmoothedNormSpec,
}

/// Frozen weights: `d1` holds the diagonal of `D₁^i` in column `i`, `d2`
/// the diagonal of `D₂`, and `d3` is the full `D₃`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleWeights {
    pub d1: DenseMatrix,
    pub d2: DenseVector,
    pub d3: DenseMatrix,
}

impl ExampleProblemData {
    pub fn new(
        a: DenseMatrix,
        y: DenseMatrix,
        b: DenseMatrix,
        z: DenseMatrix,
        mu1: f64,
        mu2: f64,
        spec: SmoothedNormSpec,
    ) -> Result<Self> {
        let data = Self { a, y, b, z, mu1, mu2, spec };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.ncols();
        let c = self.y.ncols();
        if self.y.nrows() != self.a.nrows() {
            return Err(Error::Shape(format!(
                "A has {} rows but Y has {}",
                self.a.nrows(),
                self.y.nrows()
            )));
        }
        if self.b.ncols() != d {
            return Err(Error::Shape(format!("A has {d} columns but B has {}", self.b.ncols())));
        }
        if self.z.nrows() != self.b.nrows() || self.z.ncols() != c {
            return Err(Error::Shape(format!(
                "Z is {}x{}, expected {}x{c}",
                self.z.nrows(),
                self.z.ncols(),
                self.b.nrows()
            )));
        }
        if !(self.mu1 >= 0.0) || !(self.mu2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu1 and mu2 must be >= 0, got {} and {}",
                self.mu1, self.mu2
            )));
        }
        Ok(())
    }

    fn term(&self, kind: NormKind) -> SmoothedNormSpec {
        self.spec.with_kind(kind)
    }

    fn residuals(&self, x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        (&self.a * x - &self.y, &self.b * x - &self.z)
    }

    /// Ridge start `(AᵀA + εI)⁻¹AᵀY`, `ε = 1e-6 · tr(AᵀA)/d`.
    pub fn initial_point(&self) -> Result<DenseMatrix> {
        let d = self.a.ncols();
        let mut gram = self.a.transpose() * &self.a;
        let eps = (1e-6 * gram.trace() / d.max(1) as f64).max(1e-12);
        for i in 0..d {
            gram[(i, i)] += eps;
        }
        spd_solve(&gram, &(self.a.transpose() * &self.y))
    }

    /// Gradient of the smoothed objective.
    pub fn gradient(&self, x: &DenseMatrix) -> DenseMatrix {
        let (r1, r2) = self.residuals(x);
        let xt = x.transpose();
        let g1 = smoothed_weight(&r1, &self.term(NormKind::Entrywise)).gradient(&r1);
        let g2 = smoothed_weight(&r2, &self.term(NormKind::Rowwise)).gradient(&r2);
        let g3 = smoothed_weight(&xt, &self.term(NormKind::Spectral)).gradient(&xt);
        self.a.transpose() * g1 + self.b.transpose() * g2 * self.mu1 + g3.transpose() * self.mu2
    }
}

impl IrwProblem for ExampleProblemData {
    type Iterate = DenseMatrix;
    type Weights = ExampleWeights;

    fn objective(&self, x: &DenseMatrix) -> f64 {
        let (r1, r2) = self.residuals(x);
        smoothed_term_value(&r1, &self.term(NormKind::Entrywise))
            + self.mu1 * smoothed_term_value(&r2, &self.term(NormKind::Rowwise))
            + self.mu2 * smoothed_term_value(&x.transpose(), &self.term(NormKind::Spectral))
    }

    fn weights(&self, x: &DenseMatrix) -> Result<ExampleWeights> {
        let (r1, r2) = self.residuals(x);
        let Weight::Entrywise(d1) = smoothed_weight(&r1, &self.term(NormKind::Entrywise)) else {
            unreachable!()
        };
        let Weight::Rowwise(d2) = smoothed_weight(&r2, &self.term(NormKind::Rowwise)) else {
            unreachable!()
        };
        let Weight::Spectral(d3) =
            smoothed_weight(&x.transpose(), &self.term(NormKind::Spectral))
        else {
            unreachable!()
        };
        Ok(ExampleWeights { d1, d2, d3 })
    }

    fn solve_surrogate(&self, w: &ExampleWeights, _x: &DenseMatrix) -> Result<DenseMatrix> {
        let (d, c) = (self.a.ncols(), self.y.ncols());
        let at = self.a.transpose();
        let bt = self.b.transpose();

        // μ₁BᵀD₂B + μ₂D₃ is shared by every column.
        let shared = &bt * w_rows(&self.b, &w.d2) * self.mu1 + &w.d3 * self.mu2;
        let bz = &bt * w_rows(&self.z, &w.d2) * self.mu1;

        let mut x = DenseMatrix::zeros(d, c);
        for i in 0..c {
            let a_weighted = w_rows(&self.a, &w.d1.column(i).into_owned());
            let k = &at * &a_weighted + &shared;
            let rhs = a_weighted.transpose() * self.y.column(i) + bz.column(i);
            let col = spd_solve(&k, &DenseMatrix::from_column_slice(d, 1, rhs.as_slice()))?;
            x.set_column(i, &col.column(0));
        }
        Ok(x)
    }

    fn surrogate_value(&self, w: &ExampleWeights, x: &DenseMatrix) -> Option<f64> {
        let (r1, r2) = self.residuals(x);
        Some(
            Weight::Entrywise(w.d1.clone()).quadratic(&r1)
                + self.mu1 * Weight::Rowwise(w.d2.clone()).quadratic(&r2)
                + self.mu2 * Weight::Spectral(w.d3.clone()).quadratic(&x.transpose()),
        )
    }

    fn kkt_residual(&self, x: &DenseMatrix) -> Option<f64> {
        Some(self.gradient(x).norm())
    }
}

fn w_rows(m: &DenseMatrix, w: &DenseVector) -> DenseMatrix {
    let mut out = m.clone();
    for (mut row, wk) in out.row_iter_mut().zip(w.iter()) {
        row *= *wk;
    }
    out
}

/// Runs the re-weighting loop from the ridge start.
pub fn solve_example(
    data: &ExampleProblemData,
    config: &IrwConfig,
) -> Result<(DenseMatrix, SolveTrace)> {
    data.validate()?;
    let x0 = data.initial_point()?;
    run_irw(data, x0, config)
}
