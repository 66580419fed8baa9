//! C interface to the `pdcov` covariance toolkit.
//!
//! Every object crosses the boundary as an opaque handle that the caller
//! releases with the matching `*_free` function. Functions return a
//! [`PdcStatus`]; on failure the message is available from
//! [`pdc_last_error_message`] on the same thread until the next failing call.
//! Matrices are exchanged as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pdcov::ingest::{load_expression_table, subsample_rows, Delimiter, ExpressionTable};
use pdcov::metrics::pc_metrics;
use pdcov::pairdiff::ScalerScope;
use pdcov::report::{ConfigFile, RunError};
use pdcov::simlab::{generate_population_sigma, run_sweep, sample_mvn, SweepResult};
use pdcov::stats::levene_test;
use pdcov::{
    condition_number, estimate, frobenius_distance, numerical_rank, sym_eigen, DataMatrix, Error,
    Estimator, EstimatorSpec, PdcNormalization, SymmetricMatrix,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    FailureBudget = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdcMethod {
    Pop = 0,
    Mle = 1,
    Lw = 2,
    Pdc = 3,
    Spdc = 4,
    Lspdc = 5,
    Maxpdc = 6,
    Rpdc = 7,
}

/// Normalizing constant of the PDC family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdcNorm {
    Listing = 0,
    Eq1 = 1,
}

/// Scaler scope; `Default` keeps the estimator's own default.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdcScope {
    Default = 0,
    PerDimension = 1,
    GlobalScalar = 2,
    PerPair = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdcMetric {
    Overdispersion = 0,
    ExplainedPct = 1,
    Cse = 2,
    OverdispersionOfMean = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdcLeveneResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: usize,
    /// Set when the p-value underflowed and was reported as 0.
    pub p_underflow: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdcPcMetrics {
    pub explained_pct: f64,
    pub cse: f64,
    pub overdispersion: f64,
}

/// An `n x p` data matrix, optionally backed by an expression table.
pub struct PdcData {
    matrix: DataMatrix,
    table: Option<ExpressionTable>,
}

/// A `p x p` symmetric covariance matrix.
pub struct PdcCovariance {
    matrix: SymmetricMatrix,
}

/// Averaged metrics of a Monte Carlo sweep.
pub struct PdcSweep {
    result: SweepResult,
    config_hash: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(PdcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Input(_) => PdcStatus::InvalidArgument,
            Error::Numerical(_) => PdcStatus::Numerical,
            Error::FailureBudget { .. } => PdcStatus::FailureBudget,
            Error::Io { .. } => PdcStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Core(e) => e.into(),
            RunError::Config(msg) => Failure(PdcStatus::InvalidArgument, msg),
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PdcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PdcStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PdcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PdcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_to(values: impl ExactSizeIterator<Item = f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    if len < values.len() {
        return Err(Failure(
            PdcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    if values.len() > 0 && out.is_null() {
        return Err(null("output buffer"));
    }
    for (i, v) in values.enumerate() {
        out.add(i).write(v);
    }
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn method(m: PdcMethod) -> Estimator {
    match m {
        PdcMethod::Pop => Estimator::Pop,
        PdcMethod::Mle => Estimator::Mle,
        PdcMethod::Lw => Estimator::Lw,
        PdcMethod::Pdc => Estimator::Pdc,
        PdcMethod::Spdc => Estimator::Spdc,
        PdcMethod::Lspdc => Estimator::Lspdc,
        PdcMethod::Maxpdc => Estimator::Maxpdc,
        PdcMethod::Rpdc => Estimator::Rpdc,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pdc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Copies a row-major `n x p` buffer into a new data handle.
///
/// # Safety
/// `values` must point to `n * p` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_from_rows(
    values: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut PdcData,
) -> PdcStatus {
    guard(|| {
        let len = n.checked_mul(p).ok_or_else(|| invalid("n * p overflows"))?;
        let matrix = DataMatrix::from_row_slice(n, p, slice(values, len, "values")?)?;
        write_handle(out, PdcData { matrix, table: None })
    })
}

/// Loads a gene-by-condition expression table (tab or comma separated).
/// Rows are genes, columns are conditions.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_load(path: *const c_char, out: *mut *mut PdcData) -> PdcStatus {
    guard(|| {
        let table = load_expression_table(Path::new(str_arg(path, "path")?), Delimiter::Auto)?;
        let matrix = table.as_data_matrix()?;
        write_handle(
            out,
            PdcData {
                matrix,
                table: Some(table),
            },
        )
    })
}

/// Draws `n` distinct rows of a loaded table uniformly without replacement.
///
/// # Safety
/// `data` must be a live handle from [`pdc_data_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_subsample(
    data: *const PdcData,
    n: usize,
    seed: u64,
    out: *mut *mut PdcData,
) -> PdcStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let table = data
            .table
            .as_ref()
            .ok_or_else(|| invalid("subsampling needs a handle loaded from a file"))?;
        let matrix = subsample_rows(table, n, seed)?;
        write_handle(out, PdcData { matrix, table: None })
    })
}

/// Draws `n` rows from `N(0, sigma)`; the result depends only on `seed`.
///
/// # Safety
/// `sigma` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_sample_mvn(
    sigma: *const PdcCovariance,
    n: usize,
    seed: u64,
    out: *mut *mut PdcData,
) -> PdcStatus {
    guard(|| {
        let sigma = deref(sigma, "sigma")?;
        let matrix = sample_mvn(&sigma.matrix, n, seed)?;
        write_handle(out, PdcData { matrix, table: None })
    })
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_nrows(data: *const PdcData) -> usize {
    data.as_ref().map_or(0, |d| d.matrix.nrows())
}

/// # Safety
/// `data` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_ncols(data: *const PdcData) -> usize {
    data.as_ref().map_or(0, |d| d.matrix.ncols())
}

/// Copies the data row-major into `out` (capacity `len`).
///
/// # Safety
/// `data` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_values(data: *const PdcData, out: *mut f64, len: usize) -> PdcStatus {
    guard(|| {
        let m = deref(data, "data")?.matrix.values();
        let rows = m.nrows();
        let cols = m.ncols();
        copy_to((0..rows * cols).map(|k| m[(k / cols, k % cols)]), out, len)
    })
}

/// # Safety
/// `data` must be a handle from this library or NULL, and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdc_data_free(data: *mut PdcData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Estimates the covariance of `data` with `method` (not `Pop`).
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_estimate(
    data: *const PdcData,
    method_tag: PdcMethod,
    norm: PdcNorm,
    scope: PdcScope,
    out: *mut *mut PdcCovariance,
) -> PdcStatus {
    guard(|| {
        let data = deref(data, "data")?;
        let mut spec = EstimatorSpec::new(method(method_tag))?.with_normalization(match norm {
            PdcNorm::Listing => PdcNormalization::Listing,
            PdcNorm::Eq1 => PdcNormalization::Eq1,
        });
        spec = match scope {
            PdcScope::Default => spec,
            PdcScope::PerDimension => spec.with_scope(ScalerScope::PerDimension),
            PdcScope::GlobalScalar => spec.with_scope(ScalerScope::GlobalScalar),
            PdcScope::PerPair => spec.with_scope(ScalerScope::PerPair),
        };
        let est = estimate(&data.matrix, &spec)?;
        write_handle(out, PdcCovariance { matrix: est.matrix })
    })
}

/// Wraps a row-major symmetric `p x p` buffer.
///
/// # Safety
/// `values` must point to `p * p` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_from_values(
    values: *const f64,
    p: usize,
    out: *mut *mut PdcCovariance,
) -> PdcStatus {
    guard(|| {
        let len = p.checked_mul(p).ok_or_else(|| invalid("p * p overflows"))?;
        let m = nalgebra::DMatrix::from_row_slice(p, p, slice(values, len, "values")?);
        let matrix = SymmetricMatrix::new(m)?;
        write_handle(out, PdcCovariance { matrix })
    })
}

/// Seeded random population covariance `t t^T`, `t` with standard normal entries.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_population_sigma(p: usize, seed: u64, out: *mut *mut PdcCovariance) -> PdcStatus {
    guard(|| {
        let matrix = generate_population_sigma(p, seed)?;
        write_handle(out, PdcCovariance { matrix })
    })
}

/// # Safety
/// `cov` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_dim(cov: *const PdcCovariance) -> usize {
    cov.as_ref().map_or(0, |c| c.matrix.dim())
}

/// Copies the matrix row-major into `out` (capacity `len`).
///
/// # Safety
/// `cov` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_values(cov: *const PdcCovariance, out: *mut f64, len: usize) -> PdcStatus {
    guard(|| {
        let m = &deref(cov, "cov")?.matrix;
        let p = m.dim();
        copy_to((0..p * p).map(|k| m.get(k / p, k % p)), out, len)
    })
}

/// Eigenvalues in non-increasing order (capacity `len`).
///
/// # Safety
/// `cov` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_eigenvalues(
    cov: *const PdcCovariance,
    out: *mut f64,
    len: usize,
) -> PdcStatus {
    guard(|| {
        let eig = sym_eigen(&deref(cov, "cov")?.matrix)?;
        copy_to(eig.eigenvalues.iter().copied(), out, len)
    })
}

/// `lambda_max / lambda_min`, or infinity for a numerically singular matrix.
///
/// # Safety
/// `cov` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_condition_number(cov: *const PdcCovariance, out: *mut f64) -> PdcStatus {
    guard(|| write_out(out, condition_number(&deref(cov, "cov")?.matrix)?))
}

/// Number of eigenvalues above `tol * lambda_max`.
///
/// # Safety
/// `cov` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_rank(cov: *const PdcCovariance, tol: f64, out: *mut usize) -> PdcStatus {
    guard(|| write_out(out, numerical_rank(&deref(cov, "cov")?.matrix, tol)?))
}

/// Frobenius norm of `a - b`.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_frobenius_distance(
    a: *const PdcCovariance,
    b: *const PdcCovariance,
    out: *mut f64,
) -> PdcStatus {
    guard(|| write_out(out, frobenius_distance(&deref(a, "a")?.matrix, &deref(b, "b")?.matrix)?))
}

/// Metrics of component `pc` (1-based) of `estimate` against `population`,
/// with `n` the sample size behind the estimate.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_pc_metrics(
    estimate: *const PdcCovariance,
    population: *const PdcCovariance,
    n: usize,
    pc: usize,
    out: *mut PdcPcMetrics,
) -> PdcStatus {
    guard(|| {
        let est = sym_eigen(&deref(estimate, "estimate")?.matrix)?;
        let pop = sym_eigen(&deref(population, "population")?.matrix)?;
        if pc == 0 || pc > pop.dim() {
            return Err(invalid(format!("pc must be in 1..={}", pop.dim())));
        }
        let m = pc_metrics(Estimator::Mle, &est, &pop, n, pc)?[pc - 1];
        write_out(
            out,
            PdcPcMetrics {
                explained_pct: m.explained_pct,
                cse: m.cse,
                overdispersion: m.overdispersion,
            },
        )
    })
}

/// # Safety
/// `cov` must be a handle from this library or NULL, and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdc_covariance_free(cov: *mut PdcCovariance) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// Classic two-group Levene test.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_levene(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut PdcLeveneResult,
) -> PdcStatus {
    guard(|| {
        let r = levene_test(&[slice(a, na, "a")?, slice(b, nb, "b")?])?;
        write_out(
            out,
            PdcLeveneResult {
                statistic: r.statistic,
                p_value: r.p_value,
                df1: r.df1,
                df2: r.df2,
                p_underflow: r.p_underflow,
            },
        )
    })
}

/// Runs a sweep described by a TOML config (same keys as the CLI config
/// file). Unset keys take the CLI defaults. `threads = 0` uses all cores;
/// results do not depend on it.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_sweep_run(config_toml: *const c_char, threads: usize, out: *mut *mut PdcSweep) -> PdcStatus {
    guard(|| {
        let cfg = ConfigFile::parse_toml(str_arg(config_toml, "config_toml")?)?.resolve_for_sweep()?;
        let experiment = cfg.to_experiment()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure(PdcStatus::Numerical, format!("thread pool: {e}")))?;
        let result = pool.install(|| run_sweep(&experiment))?;
        let config_hash = CString::new(cfg.hash()).expect("hex digest");
        write_handle(out, PdcSweep { result, config_hash })
    })
}

/// One averaged cell of a sweep.
///
/// # Safety
/// `sweep` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdc_sweep_value(
    sweep: *const PdcSweep,
    n: usize,
    method_tag: PdcMethod,
    pc: usize,
    metric: PdcMetric,
    out: *mut f64,
) -> PdcStatus {
    guard(|| {
        let row = deref(sweep, "sweep")?
            .result
            .get(n, method(method_tag), pc)
            .ok_or_else(|| invalid(format!("no sweep cell for n = {n}, {method_tag:?}, pc {pc}")))?;
        let v = match metric {
            PdcMetric::Overdispersion => row.mean_overdispersion,
            PdcMetric::ExplainedPct => row.mean_explained_pct,
            PdcMetric::Cse => row.mean_cse,
            PdcMetric::OverdispersionOfMean => row.overdispersion_of_mean,
        };
        write_out(out, v)
    })
}

/// SHA-256 of the resolved config; valid for the life of the handle.
///
/// # Safety
/// `sweep` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pdc_sweep_config_hash(sweep: *const PdcSweep) -> *const c_char {
    sweep.as_ref().map_or(ptr::null(), |s| s.config_hash.as_ptr())
}

/// Writes the long-format sweep CSV, headed by the config hash line.
///
/// # Safety
/// `sweep` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pdc_sweep_write_csv(sweep: *const PdcSweep, path: *const c_char) -> PdcStatus {
    guard(|| {
        let sweep = deref(sweep, "sweep")?;
        let path = str_arg(path, "path")?;
        let mut buf = format!("# config_hash={}\n", sweep.config_hash.to_string_lossy()).into_bytes();
        sweep
            .result
            .write_csv(&mut buf)
            .map_err(|e| Failure(PdcStatus::Io, e.to_string()))?;
        std::fs::write(path, buf).map_err(|e| Failure(PdcStatus::Io, format!("{path}: {e}")))
    })
}

/// # Safety
/// `sweep` must be a handle from this library or NULL, and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdc_sweep_free(sweep: *mut PdcSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}
