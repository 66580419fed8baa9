//! Pairwise differences, per-difference scalers and the symmetrized product
//! matrix `E` that every PDC-family estimator is built on.
//!
//! For each observation `i` the `n - 1` differences `d_ij = x_i - x_j`
//! (ascending `j != i`) are combined over the index plan `(j, j)` for every
//! `j`, followed by `(j, k)` for every `j < k`. Summing `d_ij d_ik^T` over the
//! plan and symmetrizing gives, per group,
//!
//! ```text
//! 1/2 (D_i^T D_i + s_i s_i^T),   s_i = sum_j d_ij
//! ```
//!
//! which is what [`accumulate_e`] evaluates, so the stacked `D1`/`D2`
//! matrices (`O(n^3 p)` rows) are never built.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, SymmetricMatrix};

pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-12;

/// All ordered differences `x_i - x_j`, `i != j`, grouped by `i` and within a
/// group by ascending `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDifferenceSet {
    n: usize,
    diffs: DMatrix<f64>,
}

impl PairwiseDifferenceSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.diffs.ncols()
    }

    pub fn len(&self) -> usize {
        self.diffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.nrows() == 0
    }

    /// The `n(n-1) x p` matrix of difference rows.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.diffs
    }

    /// Row index of `d_ij` (0-based observation indices, `i != j`).
    pub fn row_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j && i < self.n && j < self.n);
        i * (self.n - 1) + if j < i { j } else { j - 1 }
    }

    pub fn get(&self, i: usize, j: usize) -> DVector<f64> {
        self.diffs.row(self.row_index(i, j)).transpose()
    }

    /// The partner observation of the `slot`-th difference in group `i`.
    pub fn partner(&self, i: usize, slot: usize) -> usize {
        if slot < i {
            slot
        } else {
            slot + 1
        }
    }
}

pub fn pairwise_differences(data: &DataMatrix) -> Result<PairwiseDifferenceSet> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::input("need at least 2 observations"));
    }
    let p = data.ncols();
    let x = data.values();
    let mut diffs = DMatrix::zeros(n * (n - 1), p);
    let mut r = 0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for c in 0..p {
                diffs[(r, c)] = x[(i, c)] - x[(j, c)];
            }
            r += 1;
        }
    }
    Ok(PairwiseDifferenceSet { n, diffs })
}

/// Per-observation index pairs over that observation's `n - 1` differences.
/// Indices are 0-based here; the plan for `n = 3` is `[(0,0), (1,1), (0,1)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPairPlan {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl IndexPairPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The plan shared by every observation.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pairs_per_observation(&self) -> usize {
        self.pairs.len()
    }

    /// Total planned pairs over all `n` observations.
    pub fn total_pairs(&self) -> usize {
        self.n * self.pairs.len()
    }
}

pub fn index_pair_plan(n: usize) -> Result<IndexPairPlan> {
    if n < 2 {
        return Err(Error::input("need at least 2 observations"));
    }
    let m = n - 1;
    let mut pairs = Vec::with_capacity(m + m * (m - 1) / 2);
    pairs.extend((0..m).map(|j| (j, j)));
    for j in 0..m {
        for k in (j + 1)..m {
            pairs.push((j, k));
        }
    }
    Ok(IndexPairPlan { n, pairs })
}

/// `n!/(n-2)! + C(n-1, 2) * n`: the number of rows of the stacked
/// difference matrices.
pub fn num_pairs(n: usize) -> u128 {
    if n < 2 {
        return 0;
    }
    let n = n as u128;
    let permutations = n * (n - 1);
    let choose = (n - 1) * (n - 2) / 2;
    permutations + choose * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScalerKind {
    None,
    /// `(d - mu) / sigma`
    Standardize,
    /// `d_ij / sqrt(var(d_i.) + var(d_j.))`
    Local,
    /// `d / max|d|`
    MaxAbs,
    /// `d / (max d - min d)`
    Range,
}

/// Where scaler statistics are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerScope {
    /// One statistic per column.
    PerDimension,
    /// One scalar pooled over every coordinate.
    GlobalScalar,
    /// Computed from each difference vector's own coordinates.
    PerPair,
}

impl fmt::Display for ScalerScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerScope::PerDimension => "per_dimension",
            ScalerScope::GlobalScalar => "global_scalar",
            ScalerScope::PerPair => "per_pair",
        })
    }
}

impl FromStr for ScalerScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "per_dimension" => Ok(ScalerScope::PerDimension),
            "global_scalar" | "global" => Ok(ScalerScope::GlobalScalar),
            "per_pair" => Ok(ScalerScope::PerPair),
            other => Err(Error::input(format!("unknown scaler scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerSpec {
    pub kind: ScalerKind,
    pub scope: ScalerScope,
    pub epsilon_floor: f64,
}

impl ScalerSpec {
    pub fn new(kind: ScalerKind, scope: ScalerScope, epsilon_floor: f64) -> Result<Self> {
        if !(epsilon_floor > 0.0) {
            return Err(Error::input("epsilon_floor must be positive"));
        }
        Ok(Self {
            kind,
            scope,
            epsilon_floor,
        })
    }

    /// Default scope: global for `MaxAbs`, per-dimension otherwise.
    pub fn with_default_scope(kind: ScalerKind) -> Self {
        let scope = match kind {
            ScalerKind::MaxAbs => ScalerScope::GlobalScalar,
            _ => ScalerScope::PerDimension,
        };
        Self {
            kind,
            scope,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        }
    }

    pub fn none() -> Self {
        Self::with_default_scope(ScalerKind::None)
    }
}

/// A fitted statistic at the configured scope.
#[derive(Debug, Clone, PartialEq)]
pub enum Stat {
    PerDimension(DVector<f64>),
    Global(f64),
    /// Evaluated from the difference vector at apply time.
    PerPair,
}

/// Statistics fitted by [`fit_scaler`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScalerState {
    Identity,
    Standardize { mean: Stat, std: Stat, eps: f64 },
    /// Variance of each observation's `n - 1` differences, indexed by
    /// observation (`PerDimension`: one vector each, `Global`: one scalar each).
    Local { variances: LocalVariances, eps: f64 },
    MaxAbs { scale: Stat, eps: f64 },
    Range { scale: Stat, eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalVariances {
    PerDimension(Vec<DVector<f64>>),
    Global(Vec<f64>),
    PerPair,
}

fn floor_or_one(v: f64, eps: f64) -> f64 {
    if v < eps {
        1.0
    } else {
        v
    }
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / count as f64).sqrt())
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Fits the statistics a scaler needs. Standard deviations and variances use
/// the population convention (divide by the row count). Any scale statistic
/// below `epsilon_floor` is replaced by 1.
pub fn fit_scaler(diffs: &PairwiseDifferenceSet, spec: &ScalerSpec) -> Result<ScalerState> {
    if diffs.is_empty() {
        return Err(Error::input("empty difference set"));
    }
    let eps = spec.epsilon_floor;
    let d = diffs.rows();
    let p = diffs.p();

    let per_column = |f: &dyn Fn(usize) -> f64| DVector::from_fn(p, |c, _| f(c));

    let state = match spec.kind {
        ScalerKind::None => ScalerState::Identity,
        ScalerKind::Standardize => {
            let (mean, std) = match spec.scope {
                ScalerScope::PerDimension => {
                    let stats: Vec<(f64, f64)> =
                        (0..p).map(|c| mean_and_std(d.column(c).iter().copied())).collect();
                    (
                        Stat::PerDimension(DVector::from_iterator(p, stats.iter().map(|s| s.0))),
                        Stat::PerDimension(DVector::from_iterator(
                            p,
                            stats.iter().map(|s| floor_or_one(s.1, eps)),
                        )),
                    )
                }
                ScalerScope::GlobalScalar => {
                    let (m, s) = mean_and_std(d.iter().copied());
                    (Stat::Global(m), Stat::Global(floor_or_one(s, eps)))
                }
                ScalerScope::PerPair => (Stat::PerPair, Stat::PerPair),
            };
            ScalerState::Standardize { mean, std, eps }
        }
        ScalerKind::Local => {
            let n = diffs.n();
            let m = n - 1;
            let variances = match spec.scope {
                ScalerScope::PerDimension => LocalVariances::PerDimension(
                    (0..n)
                        .map(|i| {
                            let block = d.rows(i * m, m);
                            DVector::from_fn(p, |c, _| {
                                mean_and_std(block.column(c).iter().copied()).1.powi(2)
                            })
                        })
                        .collect(),
                ),
                ScalerScope::GlobalScalar => LocalVariances::Global(
                    (0..n)
                        .map(|i| mean_and_std(d.rows(i * m, m).iter().copied()).1.powi(2))
                        .collect(),
                ),
                ScalerScope::PerPair => LocalVariances::PerPair,
            };
            ScalerState::Local { variances, eps }
        }
        ScalerKind::MaxAbs => {
            let scale = match spec.scope {
                ScalerScope::PerDimension => Stat::PerDimension(per_column(&|c| {
                    floor_or_one(max_abs(d.column(c).iter().copied()), eps)
                })),
                ScalerScope::GlobalScalar => {
                    Stat::Global(floor_or_one(max_abs(d.iter().copied()), eps))
                }
                ScalerScope::PerPair => Stat::PerPair,
            };
            ScalerState::MaxAbs { scale, eps }
        }
        ScalerKind::Range => {
            let scale = match spec.scope {
                ScalerScope::PerDimension => Stat::PerDimension(per_column(&|c| {
                    floor_or_one(range(d.column(c).iter().copied()), eps)
                })),
                ScalerScope::GlobalScalar => {
                    Stat::Global(floor_or_one(range(d.iter().copied()), eps))
                }
                ScalerScope::PerPair => Stat::PerPair,
            };
            ScalerState::Range { scale, eps }
        }
    };
    Ok(state)
}

fn divide_by(d: &mut [f64], stat: &Stat, per_pair: impl FnOnce(&[f64]) -> f64, eps: f64) {
    match stat {
        Stat::PerDimension(v) => d.iter_mut().zip(v.iter()).for_each(|(x, s)| *x /= s),
        Stat::Global(s) => d.iter_mut().for_each(|x| *x /= s),
        Stat::PerPair => {
            let s = floor_or_one(per_pair(d), eps);
            d.iter_mut().for_each(|x| *x /= s);
        }
    }
}

impl ScalerState {
    /// Scales the difference `d = x_i - x_j` in place.
    pub fn apply_in_place(&self, d: &mut [f64], i: usize, j: usize) {
        match self {
            ScalerState::Identity => {}
            ScalerState::Standardize { mean, std, eps } => {
                match mean {
                    Stat::PerDimension(v) => d.iter_mut().zip(v.iter()).for_each(|(x, m)| *x -= m),
                    Stat::Global(m) => d.iter_mut().for_each(|x| *x -= m),
                    Stat::PerPair => {
                        let (m, _) = mean_and_std(d.iter().copied());
                        d.iter_mut().for_each(|x| *x -= m);
                    }
                }
                // the per-pair spread is unchanged by the shift above
                divide_by(d, std, |v| mean_and_std(v.iter().copied()).1, *eps);
            }
            ScalerState::Local { variances, eps } => match variances {
                LocalVariances::PerDimension(v) => {
                    for (c, x) in d.iter_mut().enumerate() {
                        *x /= floor_or_one((v[i][c] + v[j][c]).sqrt(), *eps);
                    }
                }
                LocalVariances::Global(v) => {
                    let s = floor_or_one((v[i] + v[j]).sqrt(), *eps);
                    d.iter_mut().for_each(|x| *x /= s);
                }
                LocalVariances::PerPair => {
                    // var(d_ij) == var(d_ji) over coordinates
                    let var = mean_and_std(d.iter().copied()).1.powi(2);
                    let s = floor_or_one((2.0 * var).sqrt(), *eps);
                    d.iter_mut().for_each(|x| *x /= s);
                }
            },
            ScalerState::MaxAbs { scale, eps } => {
                divide_by(d, scale, |v| max_abs(v.iter().copied()), *eps)
            }
            ScalerState::Range { scale, eps } => {
                divide_by(d, scale, |v| range(v.iter().copied()), *eps)
            }
        }
    }
}

/// Scales one difference vector for the ordered pair `(i, j)`.
pub fn apply_scaler(d: &DVector<f64>, pair: (usize, usize), state: &ScalerState) -> DVector<f64> {
    let mut out = d.clone();
    state.apply_in_place(out.as_mut_slice(), pair.0, pair.1);
    out
}

/// The symmetrized product matrix `E = (M + M^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedE {
    pub matrix: SymmetricMatrix,
    pub n: usize,
    pub num_pairs: u128,
}

/// Accumulates `E` over every observation group without materializing the
/// stacked difference matrices.
pub fn accumulate_e(data: &DataMatrix, spec: &ScalerSpec) -> Result<AccumulatedE> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::input("need at least 2 observations"));
    }
    let p = data.ncols();
    let diffs = pairwise_differences(data)?;
    let state = fit_scaler(&diffs, spec)?;

    let m = n - 1;
    let mut e = DMatrix::<f64>::zeros(p, p);
    let mut block = DMatrix::<f64>::zeros(m, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for slot in 0..m {
            let j = diffs.partner(i, slot);
            let r = i * m + slot;
            for (c, v) in row.iter_mut().enumerate() {
                *v = diffs.rows()[(r, c)];
            }
            state.apply_in_place(&mut row, i, j);
            for (c, v) in row.iter().enumerate() {
                block[(slot, c)] = *v;
            }
        }
        let sums = block.row_sum().transpose();
        e.gemm_tr(0.5, &block, &block, 1.0);
        e.ger(0.5, &sums, &sums, 1.0);
    }
    Ok(AccumulatedE {
        matrix: SymmetricMatrix::symmetrize(e)?,
        n,
        num_pairs: num_pairs(n),
    })
}
