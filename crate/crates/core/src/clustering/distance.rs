//! Distances in the redescription space.
//!
//! An encoded instance stores `ln P(X^(n) | C_j)` at index `n * J + j`.
//! Summing over `n` gives the naive-Bayes class log-likelihood
//! `ln P(X | C_j)`, which the class-level distances compare.

use crate::error::{Error, Result};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("Minkowski order p = {p} must be >= 1")));
    }
    Ok(())
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Euclidean distance over all `d * J` components.
pub fn euclidean_phi(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(squared_euclidean(a, b).sqrt())
}

/// `ln P(X | C_j)` for each class, summing the per-feature components.
pub fn class_log_likelihoods(encoded: &[f64], n_classes: usize) -> Result<Vec<f64>> {
    if n_classes == 0 || encoded.len() % n_classes != 0 {
        return Err(Error::InvalidParameter(format!(
            "encoded length {} is not a multiple of J = {n_classes}",
            encoded.len()
        )));
    }
    let mut agg = vec![0.0; n_classes];
    for chunk in encoded.chunks_exact(n_classes) {
        for (s, v) in agg.iter_mut().zip(chunk) {
            *s += v;
        }
    }
    Ok(agg)
}

/// `ln P(X) = ln Σ_j P(C_j) P(X | C_j)`, computed stably.
pub fn log_evidence(class_ll: &[f64], priors: &[f64]) -> f64 {
    let terms: Vec<f64> = class_ll.iter().zip(priors).map(|(l, p)| l + p.ln()).collect();
    log_sum_exp(&terms)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log posteriors `ln P(C_j | X)` under the naive-Bayes model.
pub fn log_posteriors(encoded: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    let ll = class_log_likelihoods(encoded, priors.len())?;
    let evidence = log_evidence(&ll, priors);
    Ok(ll.iter().zip(priors).map(|(l, p)| l + p.ln() - evidence).collect())
}

/// `Σ_j ‖ln P(X1 | C_j) − ln P(X2 | C_j)‖_p`. Each class term is a scalar,
/// so its Minkowski norm is the absolute value for every `p >= 1`.
pub fn dist_b_p(a: &[f64], b: &[f64], n_classes: usize, p: f64) -> Result<f64> {
    check_lengths(a, b)?;
    check_p(p)?;
    let la = class_log_likelihoods(a, n_classes)?;
    let lb = class_log_likelihoods(b, n_classes)?;
    Ok(la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).sum())
}

/// `Σ_j ‖ln P(C_j | X1) − ln P(C_j | X2)‖_p` between naive-Bayes log
/// posteriors.
pub fn delta_p(a: &[f64], b: &[f64], priors: &[f64], p: f64) -> Result<f64> {
    check_lengths(a, b)?;
    check_p(p)?;
    let total: f64 = priors.iter().sum();
    if priors.is_empty() || (total - 1.0).abs() > 1e-9 || priors.iter().any(|&q| q.is_nan() || q <= 0.0) {
        return Err(Error::InvalidParameter(
            "priors must be positive and sum to 1".into(),
        ));
    }
    let pa = log_posteriors(a, priors)?;
    let pb = log_posteriors(b, priors)?;
    if pa.iter().chain(&pb).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("zero-probability posterior".into()));
    }
    Ok(pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean_phi(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_phi(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(euclidean_phi(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn dist_b_single_class_is_abs_sum_difference() {
        let a = [-1.0, -2.0, -0.5];
        let b = [-0.25, -1.0, -3.0];
        let d = dist_b_p(&a, &b, 1, 2.0).unwrap();
        assert!((d - ((-3.5f64) - (-4.25)).abs()).abs() < 1e-12);
        assert_eq!(dist_b_p(&a, &a, 1, 1.0).unwrap(), 0.0);
        assert!(dist_b_p(&a, &b, 1, 0.5).is_err());
    }

    #[test]
    fn delta_identity_and_equal_posteriors() {
        let priors = [0.5, 0.5];
        let a = [-0.7, -0.7, -1.2, -1.2];
        assert_eq!(delta_p(&a, &a, &priors, 2.0).unwrap(), 0.0);
        // Both instances have P(C1|X) = P(C2|X) = 1/2.
        let b = [-0.1, -0.1, -2.0, -2.0];
        assert!(delta_p(&a, &b, &priors, 1.0).unwrap().abs() < 1e-12);
        assert!(delta_p(&a, &b, &[0.3, 0.3], 1.0).is_err());
    }
}
