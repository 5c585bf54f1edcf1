//! Proxy Inception Score and Fréchet distance on probe outputs.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("matrix square root: eigenvalue {0:e} is too negative")]
    NegativeEigenvalue(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Per group `exp(mean_x KL(p(y|x) ‖ p̄))`; returns mean and (population)
/// standard deviation across groups. `probs` is row-major `n × k`; samples
/// are split into `n_groups` contiguous groups of `n / n_groups`, dropping
/// the remainder.
pub fn proxy_inception_score(probs: &[f64], k: usize, n_groups: usize) -> Result<(f64, f64), MetricError> {
    let n = probs.len() / k;
    if n_groups == 0 || n < n_groups {
        return Err(MetricError::TooFewSamples {
            needed: n_groups.max(1),
            got: n,
        });
    }
    let per = n / n_groups;
    let mut scores = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let rows = &probs[g * per * k..(g + 1) * per * k];
        let mut marginal = vec![0.0; k];
        for row in rows.chunks(k) {
            for (m, &p) in marginal.iter_mut().zip(row) {
                *m += p / per as f64;
            }
        }
        let mut kl = 0.0;
        for row in rows.chunks(k) {
            for (&p, &m) in row.iter().zip(&marginal) {
                if p > 0.0 {
                    kl += p * (p / m).ln();
                }
            }
        }
        scores.push((kl / per as f64).exp());
    }
    let mean = scores.iter().sum::<f64>() / n_groups as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_groups as f64;
    if !mean.is_finite() {
        return Err(MetricError::NonFinite("inception score"));
    }
    Ok((mean, var.sqrt()))
}

/// Sample mean and covariance (divisor `n − 1`) of row-major `n × d` data.
pub fn moments(x: &[f64], d: usize) -> Result<(DVector<f64>, DMatrix<f64>), MetricError> {
    let n = x.len() / d;
    if n < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got: n });
    }
    let m = DMatrix::from_row_slice(n, d, x);
    let mu = m.row_mean().transpose();
    let mut centered = m;
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mu, cov))
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues in `[-1e-6, 0)` are treated as zero.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-6 {
            return Err(MetricError::NegativeEigenvalue(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// `‖μ_r − μ_g‖² + Tr(C_r + C_g − 2 (C_r C_g)^{1/2})`, with the trace of the
/// cross term taken from the eigenvalues of `C_r^{1/2} C_g C_r^{1/2}`.
pub fn fid_from_moments(
    mu_r: &DVector<f64>,
    c_r: &DMatrix<f64>,
    mu_g: &DVector<f64>,
    c_g: &DMatrix<f64>,
) -> Result<f64, MetricError> {
    let s = sqrt_psd(c_r)?;
    let inner = &s * c_g * &s;
    let inner = (&inner + inner.transpose()) * 0.5;
    let mut cross = 0.0;
    for v in inner.symmetric_eigenvalues().iter() {
        if *v < -1e-6 {
            return Err(MetricError::NegativeEigenvalue(*v));
        }
        cross += v.max(0.0).sqrt();
    }
    let fid = (mu_r - mu_g).norm_squared() + c_r.trace() + c_g.trace() - 2.0 * cross;
    if !fid.is_finite() {
        return Err(MetricError::NonFinite("FID"));
    }
    Ok(fid.max(0.0))
}

/// FID between two row-major `n × d` feature sets; each needs `d + 1` rows.
pub fn proxy_fid(real: &[f64], gen: &[f64], d: usize) -> Result<f64, MetricError> {
    for set in [real, gen] {
        if set.len() / d < d + 1 {
            return Err(MetricError::TooFewSamples {
                needed: d + 1,
                got: set.len() / d,
            });
        }
    }
    let (mr, cr) = moments(real, d)?;
    let (mg, cg) = moments(gen, d)?;
    fid_from_moments(&mr, &cr, &mg, &cg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_conditionals_score_one() {
        let p = vec![0.25; 40 * 4];
        let (m, s) = proxy_inception_score(&p, 4, 10).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn one_hot_uniform_marginal_scores_k() {
        let k = 5;
        let p: Vec<f64> = (0..k * 10).flat_map(|i| (0..k).map(move |j| if j == i % k { 1.0 } else { 0.0 })).collect();
        let (m, _) = proxy_inception_score(&p, k, 1).unwrap();
        assert!((m - k as f64).abs() < 1e-9);
    }

    #[test]
    fn two_sample_case() {
        let (m, _) = proxy_inception_score(&[0.9, 0.1, 0.1, 0.9], 2, 1).unwrap();
        let expect = (0.9f64 * 1.8f64.ln() + 0.1 * 0.2f64.ln()).exp();
        assert!((m - expect).abs() < 1e-12);
        assert!((m - 1.4454).abs() < 1e-3);
    }

    #[test]
    fn too_few_samples_is_rejected() {
        assert!(proxy_inception_score(&[0.5, 0.5], 2, 10).is_err());
    }

    #[test]
    fn scalar_closed_form() {
        let f = fid_from_moments(
            &DVector::from_vec(vec![0.0]),
            &DMatrix::from_vec(1, 1, vec![1.0]),
            &DVector::from_vec(vec![1.0]),
            &DMatrix::from_vec(1, 1, vec![4.0]),
        )
        .unwrap();
        assert!((f - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 * 0.1 + (i % 3) as f64).collect();
        assert!(proxy_fid(&x, &x, 3).unwrap().abs() < 1e-6);
    }
}
