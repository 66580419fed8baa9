//! Criteria for comparing sample principal components against population
//! components.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EigenSystem, Estimator};

/// Negative eigenvalues down to `-CLAMP_TOL * lambda_max` are treated as zero.
pub const CLAMP_TOL: f64 = 1e-10;

/// PC metrics of one decomposition against the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcMetrics {
    pub method: Estimator,
    /// 1-based component index.
    pub pc_index: usize,
    pub explained_pct: f64,
    pub cse: f64,
    pub overdispersion: f64,
}

/// `lambda_i / sum(lambda)` after clamping tiny negative eigenvalues to zero.
pub fn explained_variance_proportions(eig: &EigenSystem) -> Result<DVector<f64>> {
    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let mut clamped = eig.eigenvalues.clone();
    for l in clamped.iter_mut() {
        if *l < 0.0 {
            if -*l <= CLAMP_TOL * lmax {
                *l = 0.0;
            } else {
                return Err(Error::numerical(format!(
                    "eigenvalue {l} is negative beyond tolerance (lambda_max {lmax})"
                )));
            }
        }
    }
    let total = clamped.sum();
    if !(total > 0.0) {
        return Err(Error::input("degenerate spectrum"));
    }
    Ok(clamped / total)
}

/// `1 - |cos(theta)|` between two vectors; invariant to sign flips.
pub fn cosine_similarity_error(pc_hat: &[f64], pc_pop: &[f64]) -> Result<f64> {
    if pc_hat.len() != pc_pop.len() {
        return Err(Error::input(format!(
            "length mismatch: {} vs {}",
            pc_hat.len(),
            pc_pop.len()
        )));
    }
    let sa: f64 = pc_hat.iter().map(|v| v * v).sum();
    let sb: f64 = pc_pop.iter().map(|v| v * v).sum();
    if !(sa > 0.0) || !(sb > 0.0) {
        return Err(Error::input("zero vector in cosine similarity"));
    }
    let dot: f64 = pc_hat.iter().zip(pc_pop).map(|(a, b)| a * b).sum();
    let denom = if (sa * sb).is_normal() {
        (sa * sb).sqrt()
    } else {
        sa.sqrt() * sb.sqrt()
    };
    let cos = (dot / denom).abs().min(1.0);
    Ok(1.0 - cos)
}

/// `(pi_hat - pi_pop)^2 * p / (n - 1)`.
pub fn overdispersion(pi_hat: f64, pi_pop: f64, p: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::input("overdispersion needs n >= 2"));
    }
    let d = pi_hat - pi_pop;
    Ok(d * d * p as f64 / (n - 1) as f64)
}

/// Metrics for the first `k` components of `sample` against `population`.
/// `n` is the sample size used for the overdispersion factor.
pub fn pc_metrics(
    method: Estimator,
    sample: &EigenSystem,
    population: &EigenSystem,
    n: usize,
    k: usize,
) -> Result<Vec<PcMetrics>> {
    let p = population.dim();
    if sample.dim() != p {
        return Err(Error::input("sample and population dimensions differ"));
    }
    let k = k.min(p);
    let pi_hat = explained_variance_proportions(sample)?;
    let pi_pop = explained_variance_proportions(population)?;
    (0..k)
        .map(|i| {
            Ok(PcMetrics {
                method,
                pc_index: i + 1,
                explained_pct: 100.0 * pi_hat[i],
                cse: cosine_similarity_error(
                    sample.eigenvectors.column(i).as_slice(),
                    population.eigenvectors.column(i).as_slice(),
                )?,
                overdispersion: overdispersion(pi_hat[i], pi_pop[i], p, n)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sym_eigen, SymmetricMatrix};

    #[test]
    fn identity_and_diagonal_proportions() {
        let eig = sym_eigen(&SymmetricMatrix::identity(4)).unwrap();
        let pi = explained_variance_proportions(&eig).unwrap();
        assert!(pi.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let eig = sym_eigen(&SymmetricMatrix::from_diagonal(&[3.0, 1.0]).unwrap()).unwrap();
        let pi = explained_variance_proportions(&eig).unwrap();
        assert_eq!(pi.as_slice(), &[0.75, 0.25]);
    }

    #[test]
    fn degenerate_spectrum() {
        let eig = sym_eigen(&SymmetricMatrix::zeros(3)).unwrap();
        assert!(matches!(explained_variance_proportions(&eig), Err(Error::Input(m)) if m.contains("degenerate")));
    }

    #[test]
    fn negative_eigenvalues() {
        let tiny = sym_eigen(&SymmetricMatrix::from_diagonal(&[1.0, -1e-12]).unwrap()).unwrap();
        assert_eq!(explained_variance_proportions(&tiny).unwrap().as_slice(), &[1.0, 0.0]);
        let big = sym_eigen(&SymmetricMatrix::from_diagonal(&[1.0, -1e-3]).unwrap()).unwrap();
        assert!(matches!(explained_variance_proportions(&big), Err(Error::Numerical(_))));
    }

    #[test]
    fn cse_cases() {
        assert_eq!(cosine_similarity_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity_error(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity_error(&[1.0, 2.0], &[-1.0, -2.0]).unwrap(), 0.0);
        assert!(cosine_similarity_error(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity_error(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn overdispersion_cases() {
        assert_eq!(overdispersion(0.4, 0.4, 20, 10).unwrap(), 0.0);
        let v = overdispersion(0.9, 0.765, 20, 10).unwrap();
        // (0.135)^2 * 20 / 9
        assert!((v - 0.0405).abs() < 1e-15, "{v}");
        assert!(overdispersion(0.5, 0.4, 20, 1).is_err());
    }
}
