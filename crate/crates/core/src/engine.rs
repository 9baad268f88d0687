//! The re-weighting loop.
//!
//! Every problem is written as `f(x) + μ Σ_i h_i(g_i(x)ᵀ g_i(x) + δI)`. One
//! iteration freezes the weights `D_i` at the current iterate and replaces
//! each `h_i` term by `tr(g_iᵀ g_i D_i)`; the resulting smooth surrogate is
//! minimized exactly by the problem itself. For `h_i(M) = tr(M^{p/2})` the
//! weights are `(p/2)(gᵀg + δI)^{(p-2)/2}` ([`run_irw`]); for a general
//! concave `h_i` they are `h_i'(gᵀg + δI)` ([`run_irw_concave`]).

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_psd_power, validate_power, DenseMatrix};

/// A problem the re-weighting loop can drive.
///
/// `solve_surrogate` must return a global minimizer of the surrogate built
/// from `weights`; the monotone-descent guarantee depends on it. The
/// constraint set, if any, is handled inside `solve_surrogate`.
pub trait IrwProblem {
    type Iterate: Clone;
    type Weights: PartialEq;

    /// Smoothed objective value.
    fn objective(&self, x: &Self::Iterate) -> f64;

    /// Weights of every smoothed term, frozen at `x`.
    fn weights(&self, x: &Self::Iterate) -> Result<Self::Weights>;

    /// Minimizer of the surrogate. `x` is the iterate the weights came from.
    fn solve_surrogate(&self, weights: &Self::Weights, x: &Self::Iterate)
        -> Result<Self::Iterate>;

    /// Surrogate value `f(x) + μ Σ tr(g_iᵀ g_i D_i)`, used for the
    /// majorization check.
    fn surrogate_value(&self, _weights: &Self::Weights, _x: &Self::Iterate) -> Option<f64> {
        None
    }

    /// Norm of the stationarity residual, for unconstrained problems.
    fn kkt_residual(&self, _x: &Self::Iterate) -> Option<f64> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrwConfig {
    pub max_iters: usize,
    /// Stop when `|obj_t − obj_{t+1}| ≤ rel_tol · (1 + |obj_t|)`.
    pub rel_tol: f64,
    /// Relative increase tolerated before declaring a descent violation.
    pub descent_slack: f64,
    pub max_seconds: Option<f64>,
    pub record_log10: bool,
    pub record_kkt: bool,
    /// Verify that each update does not increase the surrogate.
    pub check_majorization: bool,
}

impl Default for IrwConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-8,
            descent_slack: 1e-10,
            max_seconds: None,
            record_log10: true,
            record_kkt: false,
            check_majorization: cfg!(debug_assertions),
        }
    }
}

impl IrwConfig {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_kkt(mut self, record: bool) -> Self {
        self.record_kkt = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        if !(self.descent_slack >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "descent_slack must be >= 0, got {}",
                self.descent_slack
            )));
        }
        if let Some(s) = self.max_seconds {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("max_seconds must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ToleranceMet,
    MaxIters,
    DescentViolation,
    TimeLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ToleranceMet => "tolerance-met",
            Termination::MaxIters => "max-iters",
            Termination::DescentViolation => "descent-violation",
            Termination::TimeLimit => "time-limit",
        }
    }
}

/// Objective history of one solve. `objectives[0]` is the starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub objectives: Vec<f64>,
    pub log10_objectives: Option<Vec<f64>>,
    pub kkt_residuals: Option<Vec<f64>>,
    pub termination: Termination,
    /// Seconds since the start of the solve, one stamp per objective.
    pub elapsed: Vec<f64>,
    /// Updates whose surrogate value rose above the previous one.
    pub majorization_violations: usize,
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    objectives: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    log10: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    kkt: Option<Vec<f64>>,
    termination: Termination,
    iters: usize,
    seconds: Option<f64>,
}

impl SolveTrace {
    fn new(record_log10: bool, record_kkt: bool) -> Self {
        Self {
            objectives: Vec::new(),
            log10_objectives: record_log10.then(Vec::new),
            kkt_residuals: record_kkt.then(Vec::new),
            termination: Termination::MaxIters,
            elapsed: Vec::new(),
            majorization_violations: 0,
        }
    }

    fn push(&mut self, objective: f64, kkt: Option<f64>, seconds: f64) {
        self.objectives.push(objective);
        if let Some(logs) = self.log10_objectives.as_mut() {
            logs.push(objective.log10());
        }
        if let (Some(res), Some(k)) = (self.kkt_residuals.as_mut(), kkt) {
            res.push(k);
        }
        self.elapsed.push(seconds);
    }

    /// Number of surrogate updates performed.
    pub fn iters(&self) -> usize {
        self.objectives.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("trace always holds the initial objective")
    }

    pub fn seconds(&self) -> f64 {
        self.elapsed.last().copied().unwrap_or(0.0)
    }

    /// True when no consecutive pair rises by more than `slack · (1 + |obj|)`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objectives
            .windows(2)
            .all(|w| w[1] <= w[0] + slack * (1.0 + w[0].abs()))
    }

    /// JSON form `{"objectives", "log10", "termination", "iters", "seconds"}`.
    /// Wall-clock time is written only when `include_timing` is set, so that
    /// repeated runs can produce identical files.
    pub fn to_json(&self, include_timing: bool) -> String {
        let record = TraceRecord {
            objectives: self.objectives.clone(),
            log10: self
                .log10_objectives
                .as_ref()
                .map(|v| v.iter().map(|x| x.is_finite().then_some(*x)).collect()),
            kkt: self.kkt_residuals.clone(),
            termination: self.termination,
            iters: self.iters(),
            seconds: include_timing.then(|| self.seconds()),
        };
        serde_json::to_string_pretty(&record).expect("trace serialization cannot fail")
    }

    /// Parses the JSON written by [`SolveTrace::to_json`]. Per-iteration time
    /// stamps are not part of the file and come back empty.
    pub fn from_json(text: &str) -> Result<Self> {
        let record: TraceRecord = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        Ok(Self {
            objectives: record.objectives,
            log10_objectives: record
                .log10
                .map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()),
            kkt_residuals: record.kkt,
            termination: record.termination,
            elapsed: Vec::new(),
            majorization_violations: 0,
        })
    }
}

fn kkt_if<P: IrwProblem>(problem: &P, x: &P::Iterate, config: &IrwConfig) -> Option<f64> {
    if config.record_kkt {
        problem.kkt_residual(x)
    } else {
        None
    }
}

/// Runs the re-weighting loop from `x0`.
///
/// Besides the relative-change rule, the loop also stops when the weights
/// at the new iterate equal the ones that produced it: the iterate is then a
/// fixed point of the update (this is what happens at `p = 2`).
pub fn run_irw<P: IrwProblem>(
    problem: &P,
    x0: P::Iterate,
    config: &IrwConfig,
) -> Result<(P::Iterate, SolveTrace)> {
    config.validate()?;
    let start = Instant::now();
    let mut trace = SolveTrace::new(config.record_log10, config.record_kkt);

    let mut x = x0;
    let mut obj = problem.objective(&x);
    trace.push(obj, kkt_if(problem, &x, config), start.elapsed().as_secs_f64());
    if !obj.is_finite() {
        return Err(Error::Divergence { iteration: 0, trace: Box::new(trace) });
    }
    let mut weights = problem.weights(&x)?;

    for iteration in 1..=config.max_iters {
        let next = problem.solve_surrogate(&weights, &x)?;

        if config.check_majorization {
            if let (Some(before), Some(after)) = (
                problem.surrogate_value(&weights, &x),
                problem.surrogate_value(&weights, &next),
            ) {
                if after > before + 1e-9 * (1.0 + before.abs()) {
                    warn!("surrogate increased at iteration {iteration}: {before} -> {after}");
                    trace.majorization_violations += 1;
                }
            }
        }

        let next_obj = problem.objective(&next);
        trace.push(next_obj, kkt_if(problem, &next, config), start.elapsed().as_secs_f64());
        if !next_obj.is_finite() {
            return Err(Error::Divergence { iteration, trace: Box::new(trace) });
        }
        if next_obj > obj + config.descent_slack * (1.0 + obj.abs()) {
            warn!("objective increased at iteration {iteration}: {obj} -> {next_obj}");
            trace.termination = Termination::DescentViolation;
            return Ok((x, trace));
        }

        let next_weights = problem.weights(&next)?;
        let converged = (obj - next_obj).abs() <= config.rel_tol * (1.0 + obj.abs())
            || next_weights == weights;
        x = next;
        obj = next_obj;
        weights = next_weights;

        if converged {
            debug!("converged after {iteration} iterations, objective {obj}");
            trace.termination = Termination::ToleranceMet;
            return Ok((x, trace));
        }
        if let Some(limit) = config.max_seconds {
            if start.elapsed().as_secs_f64() >= limit {
                trace.termination = Termination::TimeLimit;
                return Ok((x, trace));
            }
        }
    }
    trace.termination = Termination::MaxIters;
    Ok((x, trace))
}

/// Stationarity residual of `problem` at `x`, or `None` when the problem
/// does not provide one.
pub fn check_kkt<P: IrwProblem>(problem: &P, x: &P::Iterate) -> Option<f64> {
    problem.kkt_residual(x)
}

/// A concave, differentiable function of a symmetric positive definite
/// matrix argument.
pub trait ConcavePenalty {
    fn value(&self, m: &DenseMatrix) -> Result<f64>;
    /// Gradient `∂h/∂M`, symmetric.
    fn derivative(&self, m: &DenseMatrix) -> Result<DenseMatrix>;
}

/// `h(M) = tr(M^{p/2})`; gives the fixed-power weights.
#[derive(Clone, Copy, Debug)]
pub struct TracePower {
    p: f64,
}

impl TracePower {
    pub fn new(p: f64) -> Result<Self> {
        validate_power(p)?;
        Ok(Self { p })
    }
}

impl ConcavePenalty for TracePower {
    fn value(&self, m: &DenseMatrix) -> Result<f64> {
        Ok(sym_psd_power(m, 0.5 * self.p)?.trace())
    }

    fn derivative(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(sym_psd_power(m, 0.5 * (self.p - 2.0))? * (0.5 * self.p))
    }
}

/// `h(M) = (tr M)^{p/2}`.
#[derive(Clone, Copy, Debug)]
pub struct PowerOfTrace {
    p: f64,
}

impl PowerOfTrace {
    pub fn new(p: f64) -> Result<Self> {
        validate_power(p)?;
        Ok(Self { p })
    }
}

impl ConcavePenalty for PowerOfTrace {
    fn value(&self, m: &DenseMatrix) -> Result<f64> {
        Ok(m.trace().powf(0.5 * self.p))
    }

    fn derivative(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        let n = m.nrows();
        let scale = 0.5 * self.p * m.trace().powf(0.5 * (self.p - 2.0));
        Ok(DenseMatrix::identity(n, n) * scale)
    }
}

/// `h(M) = c · tr M`, linear so its weights never change.
#[derive(Clone, Copy, Debug)]
pub struct ScaledTrace {
    pub scale: f64,
}

impl ConcavePenalty for ScaledTrace {
    fn value(&self, m: &DenseMatrix) -> Result<f64> {
        Ok(self.scale * m.trace())
    }

    fn derivative(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        let n = m.nrows();
        Ok(DenseMatrix::identity(n, n) * self.scale)
    }
}

/// `f(x) + μ Σ_i h_i(g_i(x)ᵀ g_i(x) + δI)` with concave `h_i`.
pub trait ConcaveProblem {
    type Iterate: Clone;

    fn loss(&self, x: &Self::Iterate) -> f64;
    fn mu(&self) -> f64;
    fn delta(&self) -> f64;
    fn penalties(&self) -> Vec<&dyn ConcavePenalty>;
    /// `g_i(x)ᵀ g_i(x)` for every term, in the order of `penalties`.
    fn grams(&self, x: &Self::Iterate) -> Vec<DenseMatrix>;
    /// Exact minimizer of `f(x) + μ Σ tr(g_iᵀ g_i D_i)`.
    fn solve_weighted(&self, weights: &[DenseMatrix], x: &Self::Iterate) -> Result<Self::Iterate>;
    /// `||f'(x) + μ Σ_i ∂tr(g_iᵀ g_i D_i)/∂x||` with `D_i` frozen.
    fn stationarity(&self, _x: &Self::Iterate, _weights: &[DenseMatrix]) -> Option<f64> {
        None
    }
}

struct ConcaveAdapter<'a, P>(&'a P);

impl<P: ConcaveProblem> ConcaveAdapter<'_, P> {
    fn shifted(&self, x: &P::Iterate) -> Vec<DenseMatrix> {
        let delta = self.0.delta();
        self.0
            .grams(x)
            .into_iter()
            .map(|g| {
                let n = g.nrows();
                g + DenseMatrix::identity(n, n) * delta
            })
            .collect()
    }
}

impl<P: ConcaveProblem> IrwProblem for ConcaveAdapter<'_, P> {
    type Iterate = P::Iterate;
    type Weights = Vec<DenseMatrix>;

    fn objective(&self, x: &P::Iterate) -> f64 {
        let penalty: Result<f64> = self
            .0
            .penalties()
            .iter()
            .zip(self.shifted(x))
            .map(|(h, m)| h.value(&m))
            .sum();
        match penalty {
            Ok(v) => self.0.loss(x) + self.0.mu() * v,
            Err(_) => f64::NAN,
        }
    }

    fn weights(&self, x: &P::Iterate) -> Result<Vec<DenseMatrix>> {
        self.0
            .penalties()
            .iter()
            .zip(self.shifted(x))
            .map(|(h, m)| h.derivative(&m))
            .collect()
    }

    fn solve_surrogate(&self, weights: &Vec<DenseMatrix>, x: &P::Iterate) -> Result<P::Iterate> {
        self.0.solve_weighted(weights, x)
    }

    fn surrogate_value(&self, weights: &Vec<DenseMatrix>, x: &P::Iterate) -> Option<f64> {
        let quad: f64 = self
            .0
            .grams(x)
            .iter()
            .zip(weights)
            .map(|(g, d)| (g * d).trace())
            .sum();
        Some(self.0.loss(x) + self.0.mu() * quad)
    }

    fn kkt_residual(&self, x: &P::Iterate) -> Option<f64> {
        let weights = self.weights(x).ok()?;
        self.0.stationarity(x, &weights)
    }
}

/// Runs the loop with weights `D_i = h_i'(g_iᵀ g_i + δI)`.
pub fn run_irw_concave<P: ConcaveProblem>(
    problem: &P,
    x0: P::Iterate,
    config: &IrwConfig,
) -> Result<(P::Iterate, SolveTrace)> {
    run_irw(&ConcaveAdapter(problem), x0, config)
}

/// Stationarity residual of a concave problem at `x`, weights taken at `x`.
pub fn check_kkt_concave<P: ConcaveProblem>(problem: &P, x: &P::Iterate) -> Option<f64> {
    check_kkt(&ConcaveAdapter(problem), x)
}
