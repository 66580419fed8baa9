//! Levene's test for equality of variances, with the F-distribution tail
//! evaluated through the regularized incomplete beta function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SymmetricMatrix;

/// p-values below this are reported as exactly zero with `p_underflow` set.
pub const P_VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeveneResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: usize,
    pub group_sizes: Vec<usize>,
    /// Set when the p-value fell below [`P_VALUE_FLOOR`] and was reported as 0.
    pub p_underflow: bool,
}

/// Classic (mean-centered) Levene test.
pub fn levene_test<G: AsRef<[f64]>>(groups: &[G]) -> Result<LeveneResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::input("Levene's test needs at least 2 groups"));
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    if let Some(i) = sizes.iter().position(|&s| s < 2) {
        return Err(Error::input(format!("group {i} has fewer than 2 points")));
    }
    if groups.iter().any(|g| g.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::input("non-finite value in Levene group"));
    }

    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|v| (v - mean).abs()).collect()
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let group_means: Vec<f64> = deviations
        .iter()
        .map(|z| z.iter().sum::<f64>() / z.len() as f64)
        .collect();
    // sum_g n_g (m_g - grand)^2 written over pairs of groups, which is exactly
    // zero when group means coincide
    let mut between = 0.0;
    for g in 0..k {
        for h in (g + 1)..k {
            between += (sizes[g] * sizes[h]) as f64 * (group_means[g] - group_means[h]).powi(2);
        }
    }
    between /= total as f64;
    let within: f64 = deviations
        .iter()
        .zip(&group_means)
        .map(|(z, &m)| z.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();

    let df1 = k - 1;
    let df2 = total - k;
    let statistic = if within > 0.0 {
        (df2 as f64 / df1 as f64) * between / within
    } else if between > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let raw_p = f_sf(statistic, df1 as f64, df2 as f64);
    let p_underflow = raw_p < P_VALUE_FLOOR;
    Ok(LeveneResult {
        statistic,
        p_value: if p_underflow { 0.0 } else { raw_p },
        df1,
        df2,
        group_sizes: sizes,
        p_underflow,
    })
}

/// Diagonal entries and upper-triangle entries of two matrices, paired for
/// a diagonal-vs-diagonal and an off-diagonal-vs-off-diagonal comparison.
pub fn matrix_element_groups(
    a: &SymmetricMatrix,
    b: &SymmetricMatrix,
) -> Result<([Vec<f64>; 2], [Vec<f64>; 2])> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.dim() < 2 {
        return Err(Error::input("matrix_element_groups needs p >= 2"));
    }
    let diag = |m: &SymmetricMatrix| (0..m.dim()).map(|i| m.get(i, i)).collect::<Vec<_>>();
    let upper = |m: &SymmetricMatrix| {
        let p = m.dim();
        (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j))
            .collect::<Vec<_>>()
    };
    Ok(([diag(a), diag(b)], [upper(a), upper(b)]))
}

/// Upper tail `P(F > x)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    // P(F > x) = I_{d2 / (d2 + d1 x)}(d2/2, d1/2)
    let t = d2 / (d2 + d1 * x);
    regularized_incomplete_beta(t, d2 / 2.0, d1 / 2.0)
}

/// Lower tail `P(F <= x)`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let t = d1 * x / (d1 * x + d2);
    regularized_incomplete_beta(t, d1 / 2.0, d2 / 2.0)
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms), `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)`, evaluated by Lentz's continued fraction on whichever side
/// converges fastest.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Average ranks (1-based), ties sharing their mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input("spearman_rho needs two equal-length series of length >= 2"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in spearman_rho"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::input("spearman_rho of a constant series"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
