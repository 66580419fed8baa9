//! MLE, Ledoit-Wolf and the pairwise-differences estimator family.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovarianceEstimate, DataMatrix, Estimator, SymmetricMatrix};
use crate::pairdiff::{accumulate_e, ScalerKind, ScalerScope, ScalerSpec, DEFAULT_EPSILON_FLOOR};

/// Normalizing constant applied to `E` by the PDC family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdcNormalization {
    /// `2 / (n^2 (n - 1))`
    Eq1,
    /// `1 / (n * num_pairs)` with `num_pairs = n!/(n-2)! + C(n-1,2) n`
    #[default]
    Listing,
}

impl fmt::Display for PdcNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PdcNormalization::Eq1 => "eq1",
            PdcNormalization::Listing => "listing",
        })
    }
}

impl FromStr for PdcNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eq1" => Ok(PdcNormalization::Eq1),
            "listing" => Ok(PdcNormalization::Listing),
            other => Err(Error::input(format!("unknown PDC normalization {other:?}"))),
        }
    }
}

impl PdcNormalization {
    pub fn factor(self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            PdcNormalization::Eq1 => 2.0 / (nf * nf * (nf - 1.0)),
            PdcNormalization::Listing => {
                1.0 / (nf * crate::pairdiff::num_pairs(n) as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: Estimator,
    pub pdc_normalization: PdcNormalization,
    pub scaler_scope: Option<ScalerScope>,
    pub epsilon_floor: Option<f64>,
}

impl EstimatorSpec {
    pub fn new(method: Estimator) -> Result<Self> {
        if method == Estimator::Pop {
            return Err(Error::input("POP is not a sample estimator"));
        }
        Ok(Self {
            method,
            pdc_normalization: PdcNormalization::default(),
            scaler_scope: None,
            epsilon_floor: None,
        })
    }

    pub fn with_normalization(mut self, norm: PdcNormalization) -> Self {
        self.pdc_normalization = norm;
        self
    }

    pub fn with_scope(mut self, scope: ScalerScope) -> Self {
        self.scaler_scope = Some(scope);
        self
    }

    /// The scaler implied by the method, with any overrides applied.
    /// `None` for MLE and LW.
    pub fn scaler(&self) -> Option<ScalerSpec> {
        let kind = match self.method {
            Estimator::Pdc => ScalerKind::None,
            Estimator::Spdc => ScalerKind::Standardize,
            Estimator::Lspdc => ScalerKind::Local,
            Estimator::Maxpdc => ScalerKind::MaxAbs,
            Estimator::Rpdc => ScalerKind::Range,
            _ => return None,
        };
        let mut spec = ScalerSpec::with_default_scope(kind);
        if let Some(scope) = self.scaler_scope {
            spec.scope = scope;
        }
        spec.epsilon_floor = self.epsilon_floor.unwrap_or(DEFAULT_EPSILON_FLOOR);
        Some(spec)
    }
}

fn require_two(data: &DataMatrix) -> Result<()> {
    if data.nrows() < 2 {
        return Err(Error::input("need at least 2 observations"));
    }
    Ok(())
}

fn mle_matrix(data: &DataMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let xc = data.centered();
    let s = xc.tr_mul(&xc) / data.nrows() as f64;
    (xc, s)
}

/// Sample covariance with denominator `n`.
pub fn estimate_mle(data: &DataMatrix) -> Result<CovarianceEstimate> {
    require_two(data)?;
    let (_, s) = mle_matrix(data);
    CovarianceEstimate::new(SymmetricMatrix::symmetrize(s)?, Estimator::Mle, data.nrows(), None)
}

/// Ledoit-Wolf linear shrinkage toward `mu I`, `mu = trace(S) / p`:
///
/// ```text
/// d2  = ||S - mu I||_F^2
/// b2  = min(d2, 1/n^2 sum_k ||x_k x_k^T - S||_F^2)
/// delta = b2 / d2
/// ```
///
/// where `x_k` are the centered observations.
pub fn estimate_ledoit_wolf(data: &DataMatrix) -> Result<CovarianceEstimate> {
    let (matrix, _) = ledoit_wolf_with_intensity(data)?;
    CovarianceEstimate::new(matrix, Estimator::Lw, data.nrows(), None)
}

/// Ledoit-Wolf estimate together with the shrinkage intensity `delta`.
pub fn ledoit_wolf_with_intensity(data: &DataMatrix) -> Result<(SymmetricMatrix, f64)> {
    require_two(data)?;
    let (xc, s) = mle_matrix(data);
    let n = data.nrows() as f64;
    let p = data.ncols();
    let mu = s.trace() / p as f64;

    let mut target_gap = s.clone();
    for i in 0..p {
        target_gap[(i, i)] -= mu;
    }
    let d2 = target_gap.norm_squared();

    let mut b_bar2 = 0.0;
    for row in xc.row_iter() {
        let x = row.transpose();
        let outer = &x * x.transpose();
        b_bar2 += (outer - &s).norm_squared();
    }
    b_bar2 /= n * n;

    let delta = if d2 > 0.0 {
        (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let mut shrunk = s * (1.0 - delta);
    for i in 0..p {
        shrunk[(i, i)] += delta * mu;
    }
    Ok((SymmetricMatrix::symmetrize(shrunk)?, delta))
}

/// PDC, SPDC, LSPDC, MAXPDC or RPDC as selected by `spec.method`.
pub fn estimate_pdc_family(data: &DataMatrix, spec: &EstimatorSpec) -> Result<CovarianceEstimate> {
    require_two(data)?;
    let scaler = spec.scaler().ok_or_else(|| {
        Error::input(format!("{} is not a PDC-family estimator", spec.method))
    })?;
    let e = accumulate_e(data, &scaler)?;
    let factor = spec.pdc_normalization.factor(data.nrows());
    let scope = (scaler.kind != ScalerKind::None).then_some(scaler.scope);
    CovarianceEstimate::new(e.matrix.scaled(factor), spec.method, data.nrows(), scope)
}

/// Dispatches to the estimator named in `spec`.
pub fn estimate(data: &DataMatrix, spec: &EstimatorSpec) -> Result<CovarianceEstimate> {
    match spec.method {
        Estimator::Mle => estimate_mle(data),
        Estimator::Lw => estimate_ledoit_wolf(data),
        Estimator::Pop => Err(Error::input("POP is not a sample estimator")),
        _ => estimate_pdc_family(data, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{condition_number, numerical_rank, sym_eigen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        DataMatrix::from_row_slice(n, p, &v).unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn mle_two_points() {
        let d = DataMatrix::from_row_slice(2, 1, &[0.0, 2.0]).unwrap();
        assert_eq!(estimate_mle(&d).unwrap().matrix.get(0, 0), 1.0);
    }

    #[test]
    fn identical_observations_give_zero() {
        let d = DataMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0].repeat(4)).unwrap();
        for m in Estimator::SAMPLE {
            let est = estimate(&d, &EstimatorSpec::new(m).unwrap()).unwrap();
            assert!(est.matrix.as_matrix().iter().all(|&v| v == 0.0), "{m}");
        }
    }

    #[test]
    fn mle_rank_deficient() {
        let d = gaussian(5, 20, 1);
        let s = estimate_mle(&d).unwrap();
        assert!(numerical_rank(&s.matrix, 1e-10).unwrap() <= 4);
        assert!(condition_number(&s.matrix).unwrap().is_infinite());
        let lw = estimate_ledoit_wolf(&d).unwrap();
        assert!(condition_number(&lw.matrix).unwrap().is_finite());
    }

    #[test]
    fn lw_spherical_fixed_point() {
        // centered points +-e_k give S = (1/p) I exactly
        let p = 3;
        let mut rows = Vec::new();
        for k in 0..p {
            let mut a = vec![0.0; p];
            a[k] = 1.0;
            rows.push(a.clone());
            a[k] = -1.0;
            rows.push(a);
        }
        let d = DataMatrix::from_rows(&rows).unwrap();
        let s = estimate_mle(&d).unwrap();
        let (lw, delta) = ledoit_wolf_with_intensity(&d).unwrap();
        assert!((0.0..=1.0).contains(&delta));
        assert!(rel(lw.as_matrix(), s.matrix.as_matrix()) < 1e-15);
    }

    #[test]
    fn lw_intensity_clamped() {
        for seed in 0..20 {
            let d = gaussian(3 + (seed as usize % 5), 2 + (seed as usize % 7), seed);
            let (_, delta) = ledoit_wolf_with_intensity(&d).unwrap();
            assert!((0.0..=1.0).contains(&delta));
        }
    }

    #[test]
    fn pdc_eq1_multiple_of_mle() {
        let d = gaussian(6, 4, 3);
        let n = 6.0;
        let s = estimate_mle(&d).unwrap();
        let spec = EstimatorSpec::new(Estimator::Pdc).unwrap().with_normalization(PdcNormalization::Eq1);
        let pdc = estimate_pdc_family(&d, &spec).unwrap();
        let expected = s.matrix.as_matrix() * ((n + 2.0) / (n - 1.0));
        assert!(rel(pdc.matrix.as_matrix(), &expected) < 1e-10);
    }

    #[test]
    fn listing_normalization_from_num_pairs() {
        // n = 3: num_pairs = 9, factor = 1/27
        assert!((PdcNormalization::Listing.factor(3) - 1.0 / 27.0).abs() < 1e-18);
        assert!((PdcNormalization::Eq1.factor(3) - 2.0 / 18.0).abs() < 1e-18);
    }

    #[test]
    fn spdc_lowers_pc1_share() {
        use crate::simlab::{generate_population_sigma, MvnSampler};
        let (mut spdc, mut pdc) = (0.0, 0.0);
        for seed in 0..20u64 {
            let sigma = generate_population_sigma(20, seed).unwrap();
            let d = MvnSampler::new(&sigma).unwrap().sample(5, seed + 1000).unwrap();
            let share = |m: Estimator| {
                let est = estimate(&d, &EstimatorSpec::new(m).unwrap()).unwrap();
                let eig = sym_eigen(&est.matrix).unwrap();
                eig.eigenvalues[0] / eig.eigenvalues.sum()
            };
            spdc += share(Estimator::Spdc);
            pdc += share(Estimator::Pdc);
        }
        assert!(spdc < pdc, "{spdc} vs {pdc}");
    }

    #[test]
    fn translation_invariance() {
        let d = gaussian(6, 5, 4);
        let shift = [10.0, -3.0, 0.5, 7.0, 100.0];
        let shifted: Vec<f64> = (0..6)
            .flat_map(|i| (0..5).map(move |c| (i, c)))
            .map(|(i, c)| d.values()[(i, c)] + shift[c])
            .collect();
        let d2 = DataMatrix::from_row_slice(6, 5, &shifted).unwrap();
        for m in Estimator::SAMPLE {
            let spec = EstimatorSpec::new(m).unwrap();
            let a = estimate(&d, &spec).unwrap();
            let b = estimate(&d2, &spec).unwrap();
            assert!(rel(b.matrix.as_matrix(), a.matrix.as_matrix()) < 1e-10, "{m}");
        }
    }

    #[test]
    fn pop_rejected() {
        assert!(EstimatorSpec::new(Estimator::Pop).is_err());
        let spec = EstimatorSpec::new(Estimator::Mle).unwrap();
        assert!(estimate_pdc_family(&gaussian(3, 2, 0), &spec).is_err());
    }

    #[test]
    fn one_observation_rejected() {
        let d = gaussian(1, 3, 0);
        for m in Estimator::SAMPLE {
            assert!(matches!(estimate(&d, &EstimatorSpec::new(m).unwrap()), Err(Error::Input(_))));
        }
    }
}
