//! Proximal subproblem
//! `min_X ||X − V||_F² + γ₁'||X||_{p,p}^p + γ₂'||X||_{2,p}^p + γ₃'||X||_{S_p}^p`
//! and the outer proximal-gradient loop that produces it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{run_irw, IrwConfig, IrwProblem, SolveTrace, Termination};
use crate::error::{Error, Result};
use crate::linalg::{
    smoothed_term_value, smoothed_weight, spd_solve, DenseMatrix, DenseVector, NormKind,
    SmoothedNormSpec, Weight,
};

#[derive(Clone, Debug)]
pub struct ProximalProblemData {
    pub v: DenseMatrix,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    /// Shared `p` and `δ`; the kind is fixed per term.
    pub spec: SmoothedNormSpec,
}

/// Weights of the active terms; a term with zero coefficient has none.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximalWeights {
    pub entry: Option<DenseMatrix>,
    pub row: Option<DenseVector>,
    pub spectral: Option<DenseMatrix>,
}

impl ProximalProblemData {
    pub fn new(v: DenseMatrix, g1: f64, g2: f64, g3: f64, spec: SmoothedNormSpec) -> Result<Self> {
        let data = Self { v, g1, g2, g3, spec };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.g1, self.g2, self.g3] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "proximal coefficients must be finite and >= 0, got {g}"
                )));
            }
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("V has non-finite entries".into()));
        }
        Ok(())
    }

    fn term(&self, kind: NormKind) -> SmoothedNormSpec {
        self.spec.with_kind(kind)
    }

    /// `γ₁' Σ(x²+δ)^{p/2} + γ₂' Σ_k(||x^k||²+δ)^{p/2} + γ₃' tr((XXᵀ+δI)^{p/2})`.
    pub fn penalty(&self, x: &DenseMatrix) -> f64 {
        let mut total = 0.0;
        if self.g1 > 0.0 {
            total += self.g1 * smoothed_term_value(x, &self.term(NormKind::Entrywise));
        }
        if self.g2 > 0.0 {
            total += self.g2 * smoothed_term_value(x, &self.term(NormKind::Rowwise));
        }
        if self.g3 > 0.0 {
            total += self.g3 * smoothed_term_value(&x.transpose(), &self.term(NormKind::Spectral));
        }
        total
    }

    /// Gradient of the penalty part.
    pub fn penalty_gradient(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut grad = DenseMatrix::zeros(x.nrows(), x.ncols());
        if self.g1 > 0.0 {
            grad += smoothed_weight(x, &self.term(NormKind::Entrywise)).gradient(x) * self.g1;
        }
        if self.g2 > 0.0 {
            grad += smoothed_weight(x, &self.term(NormKind::Rowwise)).gradient(x) * self.g2;
        }
        if self.g3 > 0.0 {
            let xt = x.transpose();
            grad += smoothed_weight(&xt, &self.term(NormKind::Spectral))
                .gradient(&xt)
                .transpose()
                * self.g3;
        }
        grad
    }
}

impl IrwProblem for ProximalProblemData {
    type Iterate = DenseMatrix;
    type Weights = ProximalWeights;

    fn objective(&self, x: &DenseMatrix) -> f64 {
        (x - &self.v).norm_squared() + self.penalty(x)
    }

    fn weights(&self, x: &DenseMatrix) -> Result<ProximalWeights> {
        let entry = (self.g1 > 0.0).then(|| match smoothed_weight(x, &self.term(NormKind::Entrywise)) {
            Weight::Entrywise(d) => d,
            _ => unreachable!(),
        });
        let row = (self.g2 > 0.0).then(|| match smoothed_weight(x, &self.term(NormKind::Rowwise)) {
            Weight::Rowwise(d) => d,
            _ => unreachable!(),
        });
        let spectral = (self.g3 > 0.0).then(|| {
            match smoothed_weight(&x.transpose(), &self.term(NormKind::Spectral)) {
                Weight::Spectral(d) => d,
                _ => unreachable!(),
            }
        });
        Ok(ProximalWeights { entry, row, spectral })
    }

    fn solve_surrogate(&self, w: &ProximalWeights, _x: &DenseMatrix) -> Result<DenseMatrix> {
        let (d, c) = self.v.shape();
        // Diagonal part of I + γ₁'diag(d1_j) + γ₂'D₂, per column.
        let mut diag = DenseMatrix::from_element(d, c, 1.0);
        if let Some(e) = &w.entry {
            diag += e * self.g1;
        }
        if let Some(r) = &w.row {
            for (mut row, rk) in diag.row_iter_mut().zip(r.iter()) {
                row.add_scalar_mut(self.g2 * rk);
            }
        }
        match &w.spectral {
            None => Ok(self.v.component_div(&diag)),
            Some(d3) => {
                let base = d3 * self.g3;
                let mut x = DenseMatrix::zeros(d, c);
                for j in 0..c {
                    let mut k = base.clone();
                    for i in 0..d {
                        k[(i, i)] += diag[(i, j)];
                    }
                    let rhs = DenseMatrix::from_column_slice(d, 1, self.v.column(j).as_slice());
                    x.set_column(j, &spd_solve(&k, &rhs)?.column(0));
                }
                Ok(x)
            }
        }
    }

    fn surrogate_value(&self, w: &ProximalWeights, x: &DenseMatrix) -> Option<f64> {
        let mut total = (x - &self.v).norm_squared();
        if let Some(e) = &w.entry {
            total += self.g1 * Weight::Entrywise(e.clone()).quadratic(x);
        }
        if let Some(r) = &w.row {
            total += self.g2 * Weight::Rowwise(r.clone()).quadratic(x);
        }
        if let Some(s) = &w.spectral {
            total += self.g3 * Weight::Spectral(s.clone()).quadratic(&x.transpose());
        }
        Some(total)
    }

    fn kkt_residual(&self, x: &DenseMatrix) -> Option<f64> {
        Some(((x - &self.v) * 2.0 + self.penalty_gradient(x)).norm())
    }
}

/// Solves the proximal subproblem starting from `X₀ = V`.
pub fn solve_proximal_inner(
    data: &ProximalProblemData,
    config: &IrwConfig,
) -> Result<(DenseMatrix, SolveTrace)> {
    solve_proximal_inner_from(data, data.v.clone(), config)
}

/// Solves the proximal subproblem from an arbitrary start.
pub fn solve_proximal_inner_from(
    data: &ProximalProblemData,
    x0: DenseMatrix,
    config: &IrwConfig,
) -> Result<(DenseMatrix, SolveTrace)> {
    data.validate()?;
    if x0.shape() != data.v.shape() {
        return Err(Error::Shape(format!(
            "start is {:?}, V is {:?}",
            x0.shape(),
            data.v.shape()
        )));
    }
    run_irw(data, x0, config)
}

/// Smooth part `f` of the outer problem.
pub trait SmoothLoss {
    fn value(&self, x: &DenseMatrix) -> f64;
    fn gradient(&self, x: &DenseMatrix) -> DenseMatrix;
    /// Lipschitz constant of the gradient, when it can be estimated.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `f(X) = ||AX − Y||_F²`.
#[derive(Clone, Debug)]
pub struct LeastSquaresLoss {
    pub a: DenseMatrix,
    pub y: DenseMatrix,
}

impl SmoothLoss for LeastSquaresLoss {
    fn value(&self, x: &DenseMatrix) -> f64 {
        (&self.a * x - &self.y).norm_squared()
    }

    fn gradient(&self, x: &DenseMatrix) -> DenseMatrix {
        self.a.transpose() * (&self.a * x - &self.y) * 2.0
    }

    /// `2 λ_max(AᵀA)` by power iteration.
    fn lipschitz(&self) -> Option<f64> {
        Some(2.0 * largest_eigenvalue(&(self.a.transpose() * &self.a), 50, 1e-8))
    }
}

/// Loss given by value and gradient closures.
pub struct FnLoss<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> SmoothLoss for FnLoss<F, G>
where
    F: Fn(&DenseMatrix) -> f64,
    G: Fn(&DenseMatrix) -> DenseMatrix,
{
    fn value(&self, x: &DenseMatrix) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DenseMatrix) -> DenseMatrix {
        (self.gradient)(x)
    }
}

/// Power iteration on a symmetric PSD matrix.
pub fn largest_eigenvalue(s: &DenseMatrix, max_steps: usize, tol: f64) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DenseVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..max_steps {
        let w = s * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let done = (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lipschitz {
    Fixed(f64),
    /// Ask the loss for an estimate.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxOuterConfig {
    pub lipschitz: Lipschitz,
    pub outer_iters: usize,
    /// Relative objective change that ends the outer loop.
    pub rel_tol: f64,
    pub descent_slack: f64,
    pub inner: IrwConfig,
}

impl Default for ProxOuterConfig {
    fn default() -> Self {
        Self {
            lipschitz: Lipschitz::Auto,
            outer_iters: 100,
            rel_tol: 1e-10,
            descent_slack: 1e-10,
            inner: IrwConfig::default(),
        }
    }
}

/// Proximal gradient on `f(X) + γ₁||X||_{p,p}^p + γ₂||X||_{2,p}^p +
/// γ₃||X||_{S_p}^p`.
///
/// Each step forms `V = X − f'(X)/L` and solves the subproblem with
/// coefficients `2γ_i/L`, warm-started at the current `X` so the outer
/// objective cannot increase.
pub fn solve_proximal_outer<L: SmoothLoss>(
    loss: &L,
    x0: DenseMatrix,
    gammas: [f64; 3],
    spec: SmoothedNormSpec,
    cfg: &ProxOuterConfig,
) -> Result<(DenseMatrix, SolveTrace)> {
    let lip = match cfg.lipschitz {
        Lipschitz::Fixed(l) => l,
        Lipschitz::Auto => loss.lipschitz().ok_or_else(|| {
            Error::InvalidParameter("loss cannot estimate its Lipschitz constant".into())
        })?,
    };
    if !(lip > 0.0 && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!("Lipschitz constant must be > 0, got {lip}")));
    }
    if cfg.outer_iters == 0 {
        return Err(Error::InvalidParameter("outer_iters must be at least 1".into()));
    }
    let mut prox = ProximalProblemData::new(
        x0.clone(),
        2.0 * gammas[0] / lip,
        2.0 * gammas[1] / lip,
        2.0 * gammas[2] / lip,
        spec,
    )?;
    let outer_penalty = ProximalProblemData::new(x0.clone(), gammas[0], gammas[1], gammas[2], spec)?;
    let objective = |x: &DenseMatrix| loss.value(x) + outer_penalty.penalty(x);

    let start = Instant::now();
    let mut trace = SolveTrace {
        objectives: Vec::new(),
        log10_objectives: cfg.inner.record_log10.then(Vec::new),
        kkt_residuals: None,
        termination: Termination::MaxIters,
        elapsed: Vec::new(),
        majorization_violations: 0,
    };
    let record = |trace: &mut SolveTrace, obj: f64| {
        trace.objectives.push(obj);
        if let Some(l) = trace.log10_objectives.as_mut() {
            l.push(obj.log10());
        }
        trace.elapsed.push(start.elapsed().as_secs_f64());
    };

    let mut x = x0;
    let mut obj = objective(&x);
    record(&mut trace, obj);
    if !obj.is_finite() {
        return Err(Error::Divergence { iteration: 0, trace: Box::new(trace) });
    }
    for iteration in 1..=cfg.outer_iters {
        let grad = loss.gradient(&x);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration, trace: Box::new(trace) });
        }
        prox.v = &x - grad / lip;
        let (next, _) = solve_proximal_inner_from(&prox, x.clone(), &cfg.inner)?;
        let next_obj = objective(&next);
        record(&mut trace, next_obj);
        if !next_obj.is_finite() {
            return Err(Error::Divergence { iteration, trace: Box::new(trace) });
        }
        if next_obj > obj + cfg.descent_slack * (1.0 + obj.abs()) {
            trace.termination = Termination::DescentViolation;
            return Ok((x, trace));
        }
        let converged = (obj - next_obj).abs() <= cfg.rel_tol * (1.0 + obj.abs());
        x = next;
        obj = next_obj;
        if converged {
            trace.termination = Termination::ToleranceMet;
            break;
        }
    }
    Ok((x, trace))
}
