//! Robust feature selection:
//! `min_{M≥0, W, b} ||XᵀW + 1bᵀ − Y − Y∘M||_{2,1} + γ||W||_{2,p}^p`
//! with `Y ∈ {−1, +1}^{n×c}`. The slack `M` absorbs the loss of samples
//! that are already on the correct side of their target.

use crate::engine::{run_irw, IrwConfig, IrwProblem, SolveTrace};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, DenseMatrix, DenseVector, SmoothedNormSpec};

/// Fitted classifier state.
#[derive(Clone, Debug)]
pub struct FsModel {
    /// `d × c` projection; row norms rank the features.
    pub w: DenseMatrix,
    pub b: DenseVector,
    /// `n × c` slack, zero wherever the margin term is not positive.
    pub m: DenseMatrix,
    pub gamma: f64,
    pub spec: SmoothedNormSpec,
}

impl FsModel {
    /// `XᵀW + 1bᵀ` for features laid out `d × m`.
    pub fn scores(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.nrows() != self.w.nrows() {
            return Err(Error::Shape(format!(
                "model has {} features, data has {}",
                self.w.nrows(),
                x.nrows()
            )));
        }
        let mut s = x.transpose() * &self.w;
        for mut row in s.row_iter_mut() {
            row += self.b.transpose();
        }
        Ok(s)
    }
}

/// Current `(W, b)`; the slack is recomputed from them.
#[derive(Clone, Debug, PartialEq)]
pub struct FsState {
    pub w: DenseMatrix,
    pub b: DenseVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FsWeights {
    pub m: DenseMatrix,
    /// Loss weights, one per sample.
    pub d1: DenseVector,
    /// Regularizer weights, one per feature.
    pub d2: DenseVector,
}

pub struct FsProblem<'a> {
    x: &'a DenseMatrix,
    y: &'a DenseMatrix,
    gamma: f64,
    spec: SmoothedNormSpec,
}

/// Checks that `y` is a ±1 one-vs-rest encoding.
pub fn validate_encoding(y: &DenseMatrix) -> Result<()> {
    for (k, row) in y.row_iter().enumerate() {
        if row.iter().any(|v| *v != 1.0 && *v != -1.0) {
            return Err(Error::Encoding(format!("row {k} has entries other than -1/+1")));
        }
        let positives = row.iter().filter(|v| **v == 1.0).count();
        if positives != 1 {
            return Err(Error::Encoding(format!(
                "row {k} has {positives} positive entries, expected exactly one"
            )));
        }
    }
    Ok(())
}

impl<'a> FsProblem<'a> {
    pub fn new(x: &'a DenseMatrix, y: &'a DenseMatrix, gamma: f64, spec: SmoothedNormSpec) -> Result<Self> {
        if x.ncols() != y.nrows() {
            return Err(Error::Shape(format!(
                "X has {} samples, Y has {} rows",
                x.ncols(),
                y.nrows()
            )));
        }
        if y.nrows() < 2 {
            return Err(Error::InvalidParameter("at least two samples are required".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        validate_encoding(y)?;
        Ok(Self { x, y, gamma, spec })
    }

    fn residual(&self, s: &FsState) -> DenseMatrix {
        let mut r = self.x.transpose() * &s.w - self.y;
        for mut row in r.row_iter_mut() {
            row += s.b.transpose();
        }
        r
    }

    /// `M = max((XᵀW + 1bᵀ − Y)∘Y, 0)`.
    pub fn slack(&self, s: &FsState) -> DenseMatrix {
        self.residual(s).component_mul(self.y).map(|v| v.max(0.0))
    }

    fn loss_rows(&self, s: &FsState, m: &DenseMatrix) -> DenseMatrix {
        self.residual(s) - self.y.component_mul(m)
    }

    pub fn initial_state(&self) -> FsState {
        let n = self.y.nrows() as f64;
        let b = DenseVector::from_iterator(self.y.ncols(), self.y.column_iter().map(|c| c.sum() / n));
        FsState { w: DenseMatrix::zeros(self.x.nrows(), self.y.ncols()), b }
    }

    pub fn into_model(&self, s: FsState) -> FsModel {
        let m = self.slack(&s);
        FsModel { w: s.w, b: s.b, m, gamma: self.gamma, spec: self.spec }
    }
}

impl IrwProblem for FsProblem<'_> {
    type Iterate = FsState;
    type Weights = FsWeights;

    fn objective(&self, s: &FsState) -> f64 {
        let delta = self.spec.delta();
        let half_p = 0.5 * self.spec.p();
        let e = self.loss_rows(s, &self.slack(s));
        let loss: f64 = e.row_iter().map(|r| (r.norm_squared() + delta).sqrt()).sum();
        let reg: f64 = s.w.row_iter().map(|r| (r.norm_squared() + delta).powf(half_p)).sum();
        loss + self.gamma * reg
    }

    fn weights(&self, s: &FsState) -> Result<FsWeights> {
        let delta = self.spec.delta();
        let p = self.spec.p();
        let m = self.slack(s);
        let e = self.loss_rows(s, &m);
        let d1 = DenseVector::from_iterator(
            e.nrows(),
            e.row_iter().map(|r| 0.5 / (r.norm_squared() + delta).sqrt()),
        );
        let d2 = DenseVector::from_iterator(
            s.w.nrows(),
            s.w.row_iter().map(|r| 0.5 * p * (r.norm_squared() + delta).powf(0.5 * (p - 2.0))),
        );
        Ok(FsWeights { m, d1, d2 })
    }

    /// W step with `b` fixed, then b step with the new `W`.
    fn solve_surrogate(&self, w: &FsWeights, s: &FsState) -> Result<FsState> {
        let d = self.x.nrows();
        let target = self.y + self.y.component_mul(&w.m);

        let mut xd = self.x.clone();
        for (mut col, dk) in xd.column_iter_mut().zip(w.d1.iter()) {
            col *= *dk;
        }
        let mut k = &xd * self.x.transpose();
        for i in 0..d {
            k[(i, i)] += self.gamma * w.d2[i];
        }
        let mut shifted = target.clone();
        for mut row in shifted.row_iter_mut() {
            row -= s.b.transpose();
        }
        let new_w = spd_solve(&k, &(&xd * shifted))?;

        let resid = target - self.x.transpose() * &new_w;
        let total = w.d1.sum();
        let b = resid.transpose() * &w.d1 / total;
        Ok(FsState { w: new_w, b })
    }

    fn surrogate_value(&self, w: &FsWeights, s: &FsState) -> Option<f64> {
        let e = self.loss_rows(s, &w.m);
        let loss: f64 = e.row_iter().zip(w.d1.iter()).map(|(r, dk)| dk * r.norm_squared()).sum();
        let reg: f64 = s.w.row_iter().zip(w.d2.iter()).map(|(r, dk)| dk * r.norm_squared()).sum();
        Some(loss + self.gamma * reg)
    }
}

/// Fits the model on features `x` (`d × n`) and ±1 labels `y` (`n × c`).
pub fn fs_fit(
    x: &DenseMatrix,
    y: &DenseMatrix,
    gamma: f64,
    spec: SmoothedNormSpec,
    config: &IrwConfig,
) -> Result<(FsModel, SolveTrace)> {
    let problem = FsProblem::new(x, y, gamma, spec)?;
    let (state, trace) = run_irw(&problem, problem.initial_state(), config)?;
    Ok((problem.into_model(state), trace))
}

/// Class index of every column of `x`: the argmax of `XᵀW + 1bᵀ`, lowest
/// index on ties.
pub fn fs_predict(model: &FsModel, x: &DenseMatrix) -> Result<Vec<usize>> {
    let scores = model.scores(x)?;
    Ok(scores.row_iter().map(|r| argmax(r.iter().copied())).collect())
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}
