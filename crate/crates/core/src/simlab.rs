//! Population models, multivariate normal sampling and the seeded Monte Carlo
//! sweep that aggregates PC metrics per `(n, estimator)`.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, estimate_mle, EstimatorSpec};
use crate::ingest::{load_expression_table, subsample_rows, Delimiter, ExpressionTable};
use crate::metrics::{explained_variance_proportions, pc_metrics, PcMetrics};
use crate::model::{fmt17, sym_eigen, DataMatrix, EigenSystem, Estimator, SymmetricMatrix};

/// Fraction of replicates allowed to fail per `(n, estimator)` cell.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Distribution of the entries of `t` in `Sigma = t t^T`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaModel {
    /// Independent `N(0, 1)` entries.
    #[default]
    StandardNormal,
    /// Independent `U[0, 1)` entries; yields one dominant component.
    Uniform,
}

impl fmt::Display for SigmaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaModel::StandardNormal => "standard_normal",
            SigmaModel::Uniform => "uniform",
        })
    }
}

impl FromStr for SigmaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard_normal" | "normal" => Ok(SigmaModel::StandardNormal),
            "uniform" => Ok(SigmaModel::Uniform),
            other => Err(Error::input(format!("unknown sigma model {other:?}"))),
        }
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of counters; distinct paths
/// give independent-looking streams regardless of evaluation order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |h, &w| splitmix64(h ^ splitmix64(w.wrapping_add(h))))
}

/// `Sigma = t t^T` with `t` a `p x p` matrix of standard normal entries.
pub fn generate_population_sigma(p: usize, seed: u64) -> Result<SymmetricMatrix> {
    generate_population_sigma_with(p, seed, SigmaModel::StandardNormal)
}

pub fn generate_population_sigma_with(
    p: usize,
    seed: u64,
    model: SigmaModel,
) -> Result<SymmetricMatrix> {
    if p < 2 {
        return Err(Error::input("population dimension must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(p * p);
    for _ in 0..p * p {
        entries.push(match model {
            SigmaModel::StandardNormal => rng.sample::<f64, _>(StandardNormal),
            SigmaModel::Uniform => rng.random::<f64>(),
        });
    }
    let t = DMatrix::from_row_slice(p, p, &entries);
    SymmetricMatrix::symmetrize(&t * t.transpose())
}

/// Lower-triangular `L` with `L L^T = sigma` for positive semidefinite input.
/// Zero pivots (within tolerance) yield zero columns.
pub fn psd_cholesky(sigma: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    let p = sigma.dim();
    let a = sigma.as_matrix();
    let scale = (0..p).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let pivot_tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * p as f64;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -pivot_tol.max(1e-8 * scale) {
            return Err(Error::input(format!(
                "sigma is not positive semidefinite (pivot {d} at {j})"
            )));
        }
        if d <= pivot_tol {
            // the rest of the column must vanish for a PSD matrix
            for i in (j + 1)..p {
                let mut r = a[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-6 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::input(format!(
                        "sigma is not positive semidefinite (column {j})"
                    )));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut r = a[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / djj;
        }
    }
    Ok(l)
}

/// Draws `N(0, Sigma)` rows as `L z`. Row `r` uses its own generator seeded
/// by `derive_seed(seed, [r])`, so output does not depend on thread count.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    factor: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(sigma: &SymmetricMatrix) -> Result<Self> {
        Ok(Self {
            factor: psd_cholesky(sigma)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<DataMatrix> {
        let p = self.dim();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
                let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&self.factor * z).iter().copied().collect()
            })
            .collect();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        DataMatrix::from_row_slice(n, p, &flat)
    }
}

pub fn sample_mvn(sigma: &SymmetricMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    MvnSampler::new(sigma)?.sample(n, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic,
    File { path: PathBuf, delimiter: Delimiter },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n_values: Vec<usize>,
    pub m: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub master_seed: u64,
    pub sigma_seed: u64,
    pub data_source: DataSource,
    pub pcs_reported: usize,
    pub sigma_model: SigmaModel,
}

impl ExperimentConfig {
    /// Synthetic sweep over every sample estimator with default settings.
    pub fn synthetic(p: usize, n_values: Vec<usize>, m: usize) -> Self {
        Self {
            p,
            n_values,
            m,
            estimators: Estimator::SAMPLE
                .iter()
                .map(|&e| EstimatorSpec::new(e).expect("sample estimator"))
                .collect(),
            master_seed: 0,
            sigma_seed: 0,
            data_source: DataSource::Synthetic,
            pcs_reported: 1,
            sigma_model: SigmaModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::input("p must be at least 2"));
        }
        if self.m < 1 {
            return Err(Error::input("m must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(Error::input("n_values is empty"));
        }
        if let Some(n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::input(format!("n = {n} is below 2")));
        }
        if self.estimators.is_empty() {
            return Err(Error::input("no estimators configured"));
        }
        if self.pcs_reported < 1 || self.pcs_reported > self.p {
            return Err(Error::input(format!(
                "pcs_reported must be in 1..={}",
                self.p
            )));
        }
        Ok(())
    }

    /// Seed of replicate `r` at sample size `n`.
    pub fn replicate_seed(&self, n: usize, r: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, r as u64])
    }
}

/// Population covariance and its eigensystem, plus how to draw replicates.
#[derive(Debug, Clone)]
pub struct Population {
    pub sigma: SymmetricMatrix,
    pub eigen: EigenSystem,
    pub proportions: DVector<f64>,
    source: PopulationSource,
}

#[derive(Debug, Clone)]
enum PopulationSource {
    Gaussian(MvnSampler),
    Table(ExpressionTable),
}

impl Population {
    pub fn gaussian(sigma: SymmetricMatrix) -> Result<Self> {
        let sampler = MvnSampler::new(&sigma)?;
        Self::build(sigma, PopulationSource::Gaussian(sampler))
    }

    /// The whole table's MLE covariance stands in for the population.
    pub fn from_table(table: ExpressionTable) -> Result<Self> {
        let sigma = estimate_mle(&table.as_data_matrix()?)?.matrix;
        Self::build(sigma, PopulationSource::Table(table))
    }

    fn build(sigma: SymmetricMatrix, source: PopulationSource) -> Result<Self> {
        let eigen = sym_eigen(&sigma)?;
        let proportions = explained_variance_proportions(&eigen)?;
        Ok(Self {
            sigma,
            eigen,
            proportions,
            source,
        })
    }

    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        match &config.data_source {
            DataSource::Synthetic => Self::gaussian(generate_population_sigma_with(
                config.p,
                config.sigma_seed,
                config.sigma_model,
            )?),
            DataSource::File { path, delimiter } => {
                let table = load_expression_table(path, *delimiter)?;
                if table.n_conditions() != config.p {
                    return Err(Error::input(format!(
                        "config p = {} but {} has {} conditions",
                        config.p,
                        path.display(),
                        table.n_conditions()
                    )));
                }
                Self::from_table(table)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Largest `n` that can be drawn (`usize::MAX` for Gaussian populations).
    pub fn max_n(&self) -> usize {
        match &self.source {
            PopulationSource::Gaussian(_) => usize::MAX,
            PopulationSource::Table(t) => t.n_genes(),
        }
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<DataMatrix> {
        match &self.source {
            PopulationSource::Gaussian(s) => s.sample(n, seed),
            PopulationSource::Table(t) => subsample_rows(t, n, seed),
        }
    }
}

/// Averages for one `(n, method, pc)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub method: Estimator,
    pub pc: usize,
    /// Mean over replicates of the per-replicate overdispersion.
    pub mean_overdispersion: f64,
    pub mean_explained_pct: f64,
    pub mean_cse: f64,
    /// `(mean_explained - pi_pop)^2 * p / (n - 1)`: overdispersion of the
    /// replicate-averaged proportion.
    pub overdispersion_of_mean: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub p: usize,
    pub m: usize,
    pub master_seed: u64,
    pub sigma_seed: u64,
    /// Population explained-variance proportions of the reported PCs.
    pub population_proportions: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Metric columns in the long-format CSV, with the row field they come from.
pub const SWEEP_METRICS: [&str; 4] = ["overdispersion", "explained_pct", "cse", "overdispersion_of_mean"];

impl SweepRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "overdispersion" => Some(self.mean_overdispersion),
            "explained_pct" => Some(self.mean_explained_pct),
            "cse" => Some(self.mean_cse),
            "overdispersion_of_mean" => Some(self.overdispersion_of_mean),
            _ => None,
        }
    }
}

impl SweepResult {
    pub fn get(&self, n: usize, method: Estimator, pc: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.method == method && r.pc == pc)
    }

    pub fn n_values(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.n) {
                out.push(r.n);
            }
        }
        out
    }

    /// Methods in first-appearance order (POP first).
    pub fn methods(&self) -> Vec<Estimator> {
        let mut out: Vec<Estimator> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    pub fn max_pc(&self) -> usize {
        self.rows.iter().map(|r| r.pc).max().unwrap_or(0)
    }

    /// Long-format CSV: `p,n,method,metric,mean_value,m,sigma_seed,master_seed`.
    /// Metric names carry the component index, e.g. `cse_pc1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "p,n,method,metric,mean_value,m,sigma_seed,master_seed")?;
        for row in &self.rows {
            for metric in SWEEP_METRICS {
                writeln!(
                    w,
                    "{},{},{},{}_pc{},{},{},{},{}",
                    self.p,
                    row.n,
                    row.method,
                    metric,
                    row.pc,
                    fmt17(row.metric(metric).unwrap_or(f64::NAN)),
                    self.m,
                    self.sigma_seed,
                    self.master_seed
                )?;
            }
        }
        Ok(())
    }
}

type ReplicateOutcome = Vec<std::result::Result<Vec<PcMetrics>, String>>;

fn run_replicate(
    population: &Population,
    estimators: &[EstimatorSpec],
    n: usize,
    seed: u64,
    pcs: usize,
) -> ReplicateOutcome {
    let data = match population.draw(n, seed) {
        Ok(d) => d,
        Err(e) => return estimators.iter().map(|_| Err(e.to_string())).collect(),
    };
    estimators
        .iter()
        .map(|spec| {
            let est = estimate(&data, spec)?;
            let eig = sym_eigen(&est.matrix)?;
            pc_metrics(spec.method, &eig, &population.eigen, n, pcs)
        })
        .map(|r| r.map_err(|e| e.to_string()))
        .collect()
}

/// Runs the sweep described by `config`, drawing the population from it.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let population = Population::for_config(config)?;
    run_sweep_with_population(config, &population)
}

/// Runs the sweep against an already-built population. Replicates run on the
/// current rayon pool; results are reduced in `(n, r)` order so the output is
/// independent of the worker count.
pub fn run_sweep_with_population(
    config: &ExperimentConfig,
    population: &Population,
) -> Result<SweepResult> {
    config.validate()?;
    if population.dim() != config.p {
        return Err(Error::input(format!(
            "population dimension {} does not match p = {}",
            population.dim(),
            config.p
        )));
    }
    if let Some(&n) = config.n_values.iter().find(|&&n| n > population.max_n()) {
        return Err(Error::input(format!(
            "n = {n} exceeds the {} available observations",
            population.max_n()
        )));
    }
    let p = config.p;
    let pcs = config.pcs_reported;
    let pi_pop = &population.proportions;
    let mut rows = Vec::new();

    for &n in &config.n_values {
        for pc in 1..=pcs {
            rows.push(SweepRow {
                n,
                method: Estimator::Pop,
                pc,
                mean_overdispersion: 0.0,
                mean_explained_pct: 100.0 * pi_pop[pc - 1],
                mean_cse: 0.0,
                overdispersion_of_mean: 0.0,
                replicates: config.m,
                failures: 0,
            });
        }

        let outcomes: Vec<ReplicateOutcome> = (0..config.m)
            .into_par_iter()
            .map(|r| {
                run_replicate(
                    population,
                    &config.estimators,
                    n,
                    config.replicate_seed(n, r),
                    pcs,
                )
            })
            .collect();

        for (k, spec) in config.estimators.iter().enumerate() {
            let ok: Vec<&Vec<PcMetrics>> = outcomes
                .iter()
                .filter_map(|o| o[k].as_ref().ok())
                .collect();
            let failures = config.m - ok.len();
            if failures as f64 > FAILURE_BUDGET * config.m as f64 {
                return Err(Error::FailureBudget {
                    n,
                    method: spec.method.to_string(),
                    failed: failures,
                    total: config.m,
                });
            }
            let count = ok.len() as f64;
            for pc in 1..=pcs {
                let mean = |f: fn(&PcMetrics) -> f64| {
                    ok.iter().map(|v| f(&v[pc - 1])).sum::<f64>() / count
                };
                let mean_explained_pct = mean(|m| m.explained_pct);
                let bias = mean_explained_pct / 100.0 - pi_pop[pc - 1];
                rows.push(SweepRow {
                    n,
                    method: spec.method,
                    pc,
                    mean_overdispersion: mean(|m| m.overdispersion),
                    mean_explained_pct,
                    mean_cse: mean(|m| m.cse),
                    overdispersion_of_mean: bias * bias * p as f64 / (n - 1) as f64,
                    replicates: ok.len(),
                    failures,
                });
            }
        }
    }

    Ok(SweepResult {
        p,
        m: config.m,
        master_seed: config.master_seed,
        sigma_seed: config.sigma_seed,
        population_proportions: pi_pop.iter().take(pcs).copied().collect(),
        rows,
    })
}
