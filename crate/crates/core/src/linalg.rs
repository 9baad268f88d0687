//! Dense linear-algebra primitives: mixed `l_{r,p}` and Schatten norms,
//! fractional powers of symmetric PSD matrices, SPD solves and the
//! δ-smoothed norm terms together with their re-weighting matrices.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Relative asymmetry tolerated by [`sym_psd_power`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Which sparsity-inducing norm a smoothed term stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// `||G||_{p,p}^p`, every entry is its own term.
    Entrywise,
    /// `||G||_{2,p}^p`, every row is its own term.
    Rowwise,
    /// Schatten `||G||_{S_p}^p`.
    Spectral,
}

/// Exponent, smoothing and kind of one term `tr((GᵀG + δI)^{p/2})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedNormSpec {
    p: f64,
    delta: f64,
    kind: NormKind,
}

impl SmoothedNormSpec {
    /// Rejects `p` outside `(0, 2]` and non-positive `delta`.
    pub fn new(p: f64, delta: f64, kind: NormKind) -> Result<Self> {
        validate_power(p)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing delta must be positive and finite, got {delta}"
            )));
        }
        Ok(Self { p, delta, kind })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn with_kind(self, kind: NormKind) -> Self {
        Self { kind, ..self }
    }
}

pub(crate) fn validate_power(p: f64) -> Result<()> {
    if p > 0.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "power p must lie in (0, 2], got {p}"
        )))
    }
}

/// Default smoothing: `1e-6` times the mean squared entry over all data
/// matrices, never below `1e-12`.
pub fn auto_delta(data: &[&DenseMatrix]) -> f64 {
    let (sum, count) = data.iter().fold((0.0, 0usize), |(s, c), m| {
        (s + m.iter().map(|v| v * v).sum::<f64>(), c + m.len())
    });
    if count == 0 {
        return 1e-12;
    }
    (1e-6 * sum / count as f64).max(1e-12)
}

/// `(Σ_i ||m^i||_r^p)^{1/p}` over the rows of `m`.
pub fn lrp_norm(m: &DenseMatrix, r: f64, p: f64) -> Result<f64> {
    if !(r > 0.0) || !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l_{{r,p}} norm needs r > 0 and p > 0, got r={r}, p={p}"
        )));
    }
    let total: f64 = m
        .row_iter()
        .map(|row| {
            let row_norm = row.iter().map(|v| v.abs().powf(r)).sum::<f64>().powf(1.0 / r);
            row_norm.powf(p)
        })
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Schatten p-norm computed from the singular values.
pub fn schatten_norm(m: &DenseMatrix, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Schatten norm needs p > 0, got {p}"
        )));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let sv = m.clone().singular_values();
    Ok(sv.iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p))
}

fn check_square(s: &DenseMatrix, what: &str) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(())
}

/// Checks symmetry and returns the eigendecomposition of the symmetrized
/// matrix.
fn symmetric_eigen(s: &DenseMatrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_square(s, "symmetric matrix")?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let scale = s.norm();
    let asym = (s - s.transpose()).norm();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym / scale));
    }
    let sym = (s + s.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(s: &DenseMatrix) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(s)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

fn rebuild(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DenseMatrix {
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let fj = f(*lambda);
        scaled.column_mut(j).scale_mut(fj);
    }
    let out = scaled * u.transpose();
    (&out + out.transpose()) * 0.5
}

/// `S^e` for symmetric PSD `S`.
///
/// Eigenvalues slightly below zero are treated as zero. For negative
/// exponents every eigenvalue is clamped to `1e-12 * λ_max` before powering.
/// `e == 0` returns the exact identity.
pub fn sym_psd_power(s: &DenseMatrix, e: f64) -> Result<DenseMatrix> {
    let eig = symmetric_eigen(s)?;
    let n = s.nrows();
    if e == 0.0 {
        return Ok(DenseMatrix::identity(n, n));
    }
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let lambda_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let tol_eig = 1e-10 * lambda_max.max(1e-300);
    if lambda_min < -tol_eig {
        return Err(Error::NotPsd(lambda_min));
    }
    if e < 0.0 {
        let floor = 1e-12 * lambda_max;
        if floor <= 0.0 {
            return Err(Error::Singular);
        }
        Ok(rebuild(&eig, |l| l.max(floor).powf(e)))
    } else {
        Ok(rebuild(&eig, |l| l.max(0.0).powf(e)))
    }
}

/// Solves `K X = R` for symmetric positive definite `K`.
///
/// Uses a Cholesky factorization. If `K` is numerically singular the
/// factorization is retried once with `1e-10 * tr(K)/n` added to the
/// diagonal. One step of iterative refinement against the original `K`
/// follows.
pub fn spd_solve(k: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(k, "system matrix")?;
    if r.nrows() != k.nrows() {
        return Err(Error::Shape(format!(
            "right-hand side has {} rows, system has {}",
            r.nrows(),
            k.nrows()
        )));
    }
    let n = k.nrows();
    let chol = match Cholesky::new(k.clone()) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) => c,
        _ => {
            let eps_reg = 1e-10 * k.trace() / n.max(1) as f64;
            if !(eps_reg > 0.0 && eps_reg.is_finite()) {
                return Err(Error::Singular);
            }
            let mut reg = k.clone();
            for i in 0..n {
                reg[(i, i)] += eps_reg;
            }
            Cholesky::new(reg).ok_or(Error::Singular)?
        }
    };
    let mut x = chol.solve(r);
    let residual = r - k * &x;
    x += chol.solve(&residual);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// Eigenvalues of `GᵀG`, computed from whichever Gram matrix is smaller.
/// Returns the nonzero-side spectrum padded with zeros to `cols` entries.
fn gram_spectrum(g: &DenseMatrix) -> Vec<f64> {
    let (rows, cols) = g.shape();
    let gram = if rows < cols {
        g * g.transpose()
    } else {
        g.transpose() * g
    };
    let mut vals: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect();
    vals.resize(cols, 0.0);
    vals
}

/// `tr((GᵀG + δI)^{p/2})` in the form selected by `spec.kind`:
/// per-entry, per-row or spectral.
pub fn smoothed_term_value(g: &DenseMatrix, spec: &SmoothedNormSpec) -> f64 {
    let (p, delta) = (spec.p, spec.delta);
    let half = p / 2.0;
    match spec.kind {
        NormKind::Entrywise => g.iter().map(|v| (v * v + delta).powf(half)).sum(),
        NormKind::Rowwise => g
            .row_iter()
            .map(|row| (row.norm_squared() + delta).powf(half))
            .sum(),
        NormKind::Spectral => gram_spectrum(g)
            .into_iter()
            .map(|l| (l + delta).powf(half))
            .sum(),
    }
}

/// Re-weighting matrix `D = (p/2)(GᵀG + δI)^{(p-2)/2}` of one smoothed term.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    /// One weight per entry of `G`.
    Entrywise(DenseMatrix),
    /// Diagonal weight per row of `G`.
    Rowwise(DenseVector),
    /// Full symmetric `cols × cols` matrix.
    Spectral(DenseMatrix),
}

impl Weight {
    /// `2·G·D`, the gradient of the smoothed term at the `G` the weight was
    /// computed from.
    pub fn gradient(&self, g: &DenseMatrix) -> DenseMatrix {
        match self {
            Weight::Entrywise(d) => g.component_mul(d) * 2.0,
            Weight::Rowwise(d) => {
                let mut out = g * 2.0;
                for (mut row, w) in out.row_iter_mut().zip(d.iter()) {
                    row *= *w;
                }
                out
            }
            Weight::Spectral(d) => g * d * 2.0,
        }
    }

    /// `tr(GᵀG D)`, the weighted quadratic that replaces the term in the
    /// surrogate.
    pub fn quadratic(&self, g: &DenseMatrix) -> f64 {
        match self {
            Weight::Entrywise(d) => g.iter().zip(d.iter()).map(|(v, w)| w * v * v).sum(),
            Weight::Rowwise(d) => g
                .row_iter()
                .zip(d.iter())
                .map(|(row, w)| w * row.norm_squared())
                .sum(),
            Weight::Spectral(d) => (g * d).component_mul(g).sum(),
        }
    }

    /// True when every weight (or eigenvalue) is strictly positive.
    pub fn is_positive(&self) -> bool {
        match self {
            Weight::Entrywise(d) => d.iter().all(|v| *v > 0.0),
            Weight::Rowwise(d) => d.iter().all(|v| *v > 0.0),
            Weight::Spectral(d) => SymmetricEigen::new(d.clone())
                .eigenvalues
                .iter()
                .all(|v| *v > 0.0),
        }
    }
}

/// Computes the re-weighting matrix of one smoothed term at `G`.
pub fn smoothed_weight(g: &DenseMatrix, spec: &SmoothedNormSpec) -> Weight {
    let (p, delta) = (spec.p, spec.delta);
    let coef = p / 2.0;
    let expo = (p - 2.0) / 2.0;
    match spec.kind {
        NormKind::Entrywise => Weight::Entrywise(g.map(|v| coef * (v * v + delta).powf(expo))),
        NormKind::Rowwise => Weight::Rowwise(DenseVector::from_iterator(
            g.nrows(),
            g.row_iter().map(|row| coef * (row.norm_squared() + delta).powf(expo)),
        )),
        NormKind::Spectral => {
            let n = g.ncols();
            if expo == 0.0 {
                return Weight::Spectral(DenseMatrix::identity(n, n) * coef);
            }
            let eig = SymmetricEigen::new(g.transpose() * g);
            Weight::Spectral(rebuild(&eig, |l| coef * (l.max(0.0) + delta).powf(expo)))
        }
    }
}
