//! Operations on single probability vectors: softmax, log-sum-exp, the
//! softmax Jacobian `H(π) = diag(π) − ππᵀ`, and KL divergence.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row sums of probability vectors must match 1 within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `log Σ exp(x)` with the max subtracted first.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax of a logit vector.
pub fn softmax(theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    softmax_into(theta, &mut out);
    out
}

pub fn softmax_into(theta: &[f64], out: &mut [f64]) {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &t) in out.iter_mut().zip(theta) {
        *o = (t - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// `log softmax(θ)`, computed as `θ − logsumexp(θ)` so tiny probabilities keep
/// their full relative precision.
pub fn log_softmax(theta: &[f64]) -> Vec<f64> {
    let lse = logsumexp(theta);
    theta.iter().map(|t| t - lse).collect()
}

pub fn log_softmax_into(theta: &[f64], out: &mut [f64]) {
    let lse = logsumexp(theta);
    for (o, t) in out.iter_mut().zip(theta) {
        *o = t - lse;
    }
}

pub fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid(format!("{what}: empty probability vector")));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("{what}: entries sum to {s}, expected 1")));
    }
    Ok(())
}

/// `H(π) = diag(π) − ππᵀ`, the transposed Jacobian of the softmax map.
pub fn h_matrix(pi: &[f64]) -> Result<DMatrix<f64>> {
    check_probability_vector(pi, "h_matrix")?;
    let k = pi.len();
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { pi[i] } else { 0.0 };
        diag - pi[i] * pi[j]
    }))
}

/// `H(π)·x` without materializing the matrix: `π ⊙ (x − πᵀx)`.
pub fn h_apply(pi: &[f64], x: &[f64], out: &mut [f64]) {
    let mean: f64 = pi.iter().zip(x).map(|(p, v)| p * v).sum();
    for ((o, &p), &v) in out.iter_mut().zip(pi).zip(x) {
        *o = p * (v - mean);
    }
}

/// `KL(p ‖ q) = Σ p (log p − log q)`; zero entries of `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi.ln() - qi.ln())).sum()
}

/// KL divergence between two softmax policies given by their logits. Works in
/// log space, so it stays accurate when some probabilities underflow.
pub fn kl_from_logits(theta_p: &[f64], theta_q: &[f64]) -> f64 {
    let lp = log_softmax(theta_p);
    let lq = log_softmax(theta_q);
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

/// Shannon entropy `−Σ π log π`.
pub fn entropy(pi: &[f64]) -> f64 {
    -pi.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `x − mean(x)·1`.
pub fn center(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    center_in_place(&mut y);
    y
}

pub fn center_in_place(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_uniform_and_log_square_instances() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for x in &p {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = softmax(&[9f64.ln(), 16f64.ln(), 25f64.ln()]);
        assert_abs_diff_eq!(p[0], 9.0 / 50.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 16.0 / 50.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 25.0 / 50.0, epsilon = 1e-15);
        let p = softmax(&[3f64.ln(), 4f64.ln(), 5f64.ln()]);
        assert_abs_diff_eq!(p[0], 3.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 5.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0, 999.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(logsumexp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn h_matrix_small_cases() {
        let h = h_matrix(&[1.0, 0.0]).unwrap();
        assert!(h.iter().all(|x| *x == 0.0));
        let h = h_matrix(&[0.5, 0.5]).unwrap();
        assert_eq!(h[(0, 0)], 0.25);
        assert_eq!(h[(0, 1)], -0.25);
        assert_eq!(h[(1, 0)], -0.25);
        assert_eq!(h[(1, 1)], 0.25);
        assert!(h_matrix(&[0.5, 0.6]).is_err());
        assert!(h_matrix(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn h_apply_matches_dense() {
        let pi = [0.1, 0.2, 0.3, 0.4];
        let x = [1.0, -2.0, 0.5, 3.0];
        let h = h_matrix(&pi).unwrap();
        let dense = &h * nalgebra::DVector::from_column_slice(&x);
        let mut out = [0.0; 4];
        h_apply(&pi, &x, &mut out);
        for i in 0..4 {
            assert_abs_diff_eq!(out[i], dense[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn kl_logit_forms_agree() {
        let a = [0.3, -1.0, 2.0];
        let b = [1.0, 0.0, -0.5];
        let direct = kl_divergence(&softmax(&a), &softmax(&b));
        assert_abs_diff_eq!(direct, kl_from_logits(&a, &b), epsilon = 1e-14);
        assert_abs_diff_eq!(kl_from_logits(&a, &a), 0.0, epsilon = 1e-15);
    }
}
