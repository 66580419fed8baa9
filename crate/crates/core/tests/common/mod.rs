#![allow(dead_code)]

use nalgebra::DMatrix;
use pdcov::pairdiff::{apply_scaler, fit_scaler, pairwise_differences, ScalerSpec};
use pdcov::DataMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    DataMatrix::from_row_slice(n, p, &v).unwrap()
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let num = (a - b).norm();
    let den = b.norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Builds the stacked difference matrices row by row, exactly as the
/// published listing does, and returns `(M + M^T) / 2` with `M = D1^T D2`.
///
/// For each observation `i` the differences `x_i - x_j` are listed for
/// `j != i` in ascending `j`; the pair plan is `(a, a)` for every slot, then
/// `(a, b)` for `a < b`.
pub fn explicit_e(x: &[Vec<f64>], scale: impl Fn(&[f64], usize, usize) -> Vec<f64>) -> Vec<Vec<f64>> {
    let n = x.len();
    let p = x[0].len();
    let mut d1: Vec<Vec<f64>> = Vec::new();
    let mut d2: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let partners: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let diffs: Vec<Vec<f64>> = partners
            .iter()
            .map(|&j| {
                let raw: Vec<f64> = (0..p).map(|c| x[i][c] - x[j][c]).collect();
                scale(&raw, i, j)
            })
            .collect();
        let m = partners.len();
        let mut plan: Vec<(usize, usize)> = (0..m).map(|a| (a, a)).collect();
        for a in 0..m {
            for b in (a + 1)..m {
                plan.push((a, b));
            }
        }
        for (a, b) in plan {
            d1.push(diffs[a].clone());
            d2.push(diffs[b].clone());
        }
    }
    let mut m = vec![vec![0.0; p]; p];
    for (r1, r2) in d1.iter().zip(&d2) {
        for u in 0..p {
            for v in 0..p {
                m[u][v] += r1[u] * r2[v];
            }
        }
    }
    (0..p)
        .map(|u| (0..p).map(|v| 0.5 * (m[u][v] + m[v][u])).collect())
        .collect()
}

pub fn rows_of(data: &DataMatrix) -> Vec<Vec<f64>> {
    (0..data.nrows())
        .map(|i| data.row(i).iter().copied().collect())
        .collect()
}

pub fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), m[0].len(), |i, j| m[i][j])
}

/// The explicit oracle with each difference passed through the fitted scaler.
pub fn explicit_e_scaled(data: &DataMatrix, spec: &ScalerSpec) -> DMatrix<f64> {
    let diffs = pairwise_differences(data).unwrap();
    let state = fit_scaler(&diffs, spec).unwrap();
    let e = explicit_e(&rows_of(data), |raw, i, j| {
        let v = nalgebra::DVector::from_column_slice(raw);
        apply_scaler(&v, (i, j), &state).iter().copied().collect()
    });
    to_dmatrix(&e)
}

/// `P(|T| <= t)` for Student's t with 6 degrees of freedom, from the
/// closed-form even-df series `sin(th) (1 + cos^2(th)/2 + 3 cos^4(th)/8)`
/// with `th = atan(t / sqrt(6))`.
pub fn t6_two_sided_inner(t: f64) -> f64 {
    let th = (t / 6f64.sqrt()).atan();
    let c2 = th.cos().powi(2);
    th.sin() * (1.0 + c2 / 2.0 + 3.0 * c2 * c2 / 8.0)
}
