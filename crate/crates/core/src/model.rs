//! Matrix, dataset and eigensystem types shared by every other module.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairdiff::ScalerScope;

/// Relative tolerance used when validating symmetry of caller-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default relative tolerance for [`numerical_rank`] and [`condition_number`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Formats a float with 17 significant digits (round-trip exact for `f64`).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// An `n x p` observation matrix: rows are observations, columns dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::input(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::input(format!(
                "non-finite entry at row {r}, column {c}"
            )));
        }
        Ok(Self {
            values,
            row_labels: None,
            col_labels: None,
        })
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_slice(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::input(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(n, p, &flat)
    }

    pub fn with_labels(
        mut self,
        row_labels: Option<Vec<String>>,
        col_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(r) = &row_labels {
            if r.len() != self.nrows() {
                return Err(Error::input(format!(
                    "{} row labels for {} rows",
                    r.len(),
                    self.nrows()
                )));
            }
        }
        if let Some(c) = &col_labels {
            if c.len() != self.ncols() {
                return Err(Error::input(format!(
                    "{} column labels for {} columns",
                    c.len(),
                    self.ncols()
                )));
            }
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    /// Number of observations `n`.
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of dimensions `p`.
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    /// Column means.
    pub fn mean(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }

    /// Returns the matrix with the column means subtracted.
    pub fn centered(&self) -> DMatrix<f64> {
        let mean = self.values.row_mean();
        let mut out = self.values.clone();
        for mut row in out.row_iter_mut() {
            row -= &mean;
        }
        out
    }
}

/// A real symmetric `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Validates symmetry within [`SYMMETRY_TOL`] and finiteness, then stores
    /// the exactly symmetrized matrix `(A + A^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::input(format!(
                        "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self::symmetrize_unchecked(m))
    }

    /// Symmetrizes `(A + A^T) / 2` without a tolerance check. Only finiteness
    /// and squareness are enforced.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self::symmetrize_unchecked(m))
    }

    fn symmetrize_unchecked(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Writes the full matrix as CSV: `p` lines of `p` comma-separated values
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.0.row_iter() {
            let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::input(format!("line {}: {e}", lineno + 1)))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::input(format!("line {}: bad number {s:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("matrix CSV is not square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(DMatrix::from_row_slice(p, p, &flat))
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    Ok(())
}

/// Which estimator produced a covariance matrix. `Pop` marks the population
/// (true or full-dataset) covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    Pop,
    Mle,
    Lw,
    Pdc,
    Spdc,
    Lspdc,
    Maxpdc,
    Rpdc,
}

impl Estimator {
    /// The seven sample estimators in the fixed reporting (and tie-break) order.
    pub const SAMPLE: [Estimator; 7] = [
        Estimator::Mle,
        Estimator::Lw,
        Estimator::Pdc,
        Estimator::Spdc,
        Estimator::Lspdc,
        Estimator::Maxpdc,
        Estimator::Rpdc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Pop => "POP",
            Estimator::Mle => "MLE",
            Estimator::Lw => "LW",
            Estimator::Pdc => "PDC",
            Estimator::Spdc => "SPDC",
            Estimator::Lspdc => "LSPDC",
            Estimator::Maxpdc => "MAXPDC",
            Estimator::Rpdc => "RPDC",
        }
    }

    pub fn is_pdc_family(self) -> bool {
        matches!(
            self,
            Estimator::Pdc
                | Estimator::Spdc
                | Estimator::Lspdc
                | Estimator::Maxpdc
                | Estimator::Rpdc
        )
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POP" => Ok(Estimator::Pop),
            "MLE" => Ok(Estimator::Mle),
            "LW" => Ok(Estimator::Lw),
            "PDC" => Ok(Estimator::Pdc),
            "SPDC" => Ok(Estimator::Spdc),
            "LSPDC" => Ok(Estimator::Lspdc),
            "MAXPDC" => Ok(Estimator::Maxpdc),
            "RPDC" => Ok(Estimator::Rpdc),
            other => Err(Error::input(format!("unknown estimator {other:?}"))),
        }
    }
}

/// A covariance matrix tagged with the estimator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: SymmetricMatrix,
    pub estimator: Estimator,
    pub n_used: usize,
    /// Scope of the per-difference scaler, for the regularized PDC variants.
    pub scaler_scope: Option<ScalerScope>,
}

impl CovarianceEstimate {
    pub(crate) fn new(
        matrix: SymmetricMatrix,
        estimator: Estimator,
        n_used: usize,
        scaler_scope: Option<ScalerScope>,
    ) -> Result<Self> {
        if let Some(i) = (0..matrix.dim()).find(|&i| matrix.get(i, i) < -1e-10) {
            return Err(Error::numerical(format!(
                "{estimator} produced a negative variance {} at index {i}",
                matrix.get(i, i)
            )));
        }
        Ok(Self {
            matrix,
            estimator,
            n_used,
            scaler_scope,
        })
    }
}

/// Eigenvalues in non-increasing order with matching unit eigenvectors
/// (column `i` of `eigenvectors` pairs with `eigenvalues[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
///
/// Each eigenvector's sign is fixed so its largest-magnitude component is
/// positive (first such component on exact ties).
pub fn sym_eigen(m: &SymmetricMatrix) -> Result<EigenSystem> {
    if m.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite matrix entries"));
    }
    let p = m.dim();
    let eig = SymmetricEigen::try_new(m.0.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        let mut pivot = 0;
        for k in 1..p {
            if col[k].abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok((&a.0 - &b.0).norm())
}

/// Count of eigenvalues strictly greater than `tol * lambda_max`.
pub fn numerical_rank(m: &SymmetricMatrix, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::input("rank tolerance must be positive"));
    }
    let eig = sym_eigen(m)?;
    Ok(rank_of(&eig, tol))
}

pub(crate) fn rank_of(eig: &EigenSystem, tol: f64) -> usize {
    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    if lmax <= 0.0 {
        return 0;
    }
    eig.eigenvalues.iter().filter(|&&l| l > tol * lmax).count()
}

/// `lambda_max / lambda_min`, or `f64::INFINITY` when the matrix is
/// numerically singular: `lambda_min <= DEFAULT_RANK_TOL * lambda_max`.
pub fn condition_number(m: &SymmetricMatrix) -> Result<f64> {
    let eig = sym_eigen(m)?;
    let lmax = eig.eigenvalues[0];
    let lmin = eig.eigenvalues[eig.dim() - 1];
    if lmax <= 0.0 || lmin <= DEFAULT_RANK_TOL * lmax {
        Ok(f64::INFINITY)
    } else {
        Ok(lmax / lmin)
    }
}
