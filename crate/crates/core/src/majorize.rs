//! Slack of the inequalities that make the re-weighted surrogate a
//! majorizer. Each function returns `rhs - lhs`, which is non-negative
//! whenever the inequality holds; they exist so the descent guarantees can
//! be checked numerically at run time and in tests.

use crate::linalg::{sym_eigenvalues, sym_psd_power, validate_power, DenseMatrix};
use crate::error::{Error, Result};

/// `(p/2)σ − σ^{p/2} + (2−p)/2`, non-negative for `σ > 0`, `0 < p ≤ 2`.
pub fn scalar_gap(sigma: f64, p: f64) -> f64 {
    0.5 * p * sigma - sigma.powf(0.5 * p) + 0.5 * (2.0 - p)
}

/// `tr(M̃M) − tr(ΣΛ)` with the eigenvalues of `M̃` ascending and those of
/// `M` descending.
pub fn trace_rearrangement_gap(m_tilde: &DenseMatrix, m: &DenseMatrix) -> Result<f64> {
    same_shape(m_tilde, m)?;
    let sigma = sym_eigenvalues(m_tilde)?;
    let mut lambda = sym_eigenvalues(m)?;
    lambda.reverse();
    let paired: f64 = sigma.iter().zip(&lambda).map(|(s, l)| s * l).sum();
    Ok((m_tilde * m).trace() - paired)
}

/// Slack of
/// `tr(M̃^{p/2}) − (p/2)tr(M̃ M^{(p−2)/2}) ≤ tr(M^{p/2}) − (p/2)tr(M M^{(p−2)/2})`
/// for positive definite `M̃`, `M`.
pub fn trace_power_gap(m_tilde: &DenseMatrix, m: &DenseMatrix, p: f64) -> Result<f64> {
    validate_power(p)?;
    same_shape(m_tilde, m)?;
    let weight = sym_psd_power(m, 0.5 * (p - 2.0))? * (0.5 * p);
    let lhs = sym_psd_power(m_tilde, 0.5 * p)?.trace() - (m_tilde * &weight).trace();
    let rhs = sym_psd_power(m, 0.5 * p)?.trace() - (m * &weight).trace();
    Ok(rhs - lhs)
}

/// The δ-shifted version of [`trace_power_gap`] for arbitrary `Ã`, `A`:
/// `tr((ÃᵀÃ+δI)^{p/2}) − (p/2)tr(ÃᵀÃ (AᵀA+δI)^{(p−2)/2})` is bounded by the
/// same expression at `Ã = A`.
pub fn smoothed_gap(a_tilde: &DenseMatrix, a: &DenseMatrix, delta: f64, p: f64) -> Result<f64> {
    validate_power(p)?;
    same_shape(a_tilde, a)?;
    let n = a.ncols();
    let shift = DenseMatrix::identity(n, n) * delta;
    let gram_t = a_tilde.transpose() * a_tilde;
    let gram = a.transpose() * a;
    let weight = sym_psd_power(&(&gram + &shift), 0.5 * (p - 2.0))? * (0.5 * p);
    let lhs = sym_psd_power(&(&gram_t + &shift), 0.5 * p)?.trace() - (&gram_t * &weight).trace();
    let rhs = sym_psd_power(&(&gram + &shift), 0.5 * p)?.trace() - (&gram * &weight).trace();
    Ok(rhs - lhs)
}

fn same_shape(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}
