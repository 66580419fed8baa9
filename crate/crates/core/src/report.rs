//! Run configuration files, run manifests, table output and the four CLI
//! commands (`simulate`, `analyze`, `estimate`, `report`).
//!
//! Each command returns a [`RunError`] that maps onto the process exit code:
//! 2 for configuration or input problems, 3 for runtime failures such as an
//! exceeded replicate failure budget.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimators::{estimate, EstimatorSpec, PdcNormalization};
use crate::ingest::{load_expression_table, subsample_rows, Delimiter};
use crate::model::{
    condition_number, fmt17, frobenius_distance, numerical_rank, DataMatrix, Estimator,
    SymmetricMatrix, DEFAULT_RANK_TOL,
};
use crate::pairdiff::ScalerScope;
use crate::simlab::{
    generate_population_sigma_with, run_sweep_with_population, DataSource, ExperimentConfig,
    MvnSampler, Population, SigmaModel, SweepResult,
};
use crate::stats::{levene_test, matrix_element_groups, LeveneResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Wide-table files written by `simulate`/`analyze`, keyed by metric.
pub const TABLE_FILES: [(&str, &str); 4] = [
    ("overdispersion", "overdispersion"),
    ("explained_pct", "explained"),
    ("cse", "cse"),
    ("overdispersion_of_mean", "overdispersion_of_mean"),
];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_INPUT,
            RunError::Core(Error::Input(_) | Error::Io { .. }) => EXIT_INPUT,
            RunError::Core(Error::Numerical(_) | Error::FailureBudget { .. }) => EXIT_RUNTIME,
        }
    }
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Core(Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

/// Flat key-value configuration. Every key is optional; command-specific
/// defaults fill the gaps. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_seed: Option<u64>,
    /// `"synthetic"` or `"file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcs_reported: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pdc_normalization: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spdc_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lspdc_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxpdc_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpdc_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_floor: Option<f64>,
}

/// A run manifest: the fully resolved configuration plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: ConfigFile,
    pub threads: usize,
    pub wall_time_secs: f64,
}

impl ConfigFile {
    pub fn parse_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))
    }

    /// Loads a TOML config, or the `config` table of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("invalid manifest {}: {e}", path.display())))?;
            Ok(manifest.config)
        } else {
            Self::parse_toml(&text)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(v: &Option<String>) -> Result<Option<T>, RunError> {
        v.as_deref().map(str::parse).transpose().map_err(RunError::from)
    }

    fn data_source_is_file(&self) -> Result<bool, RunError> {
        match self.data_source.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None => Ok(self.data_file.is_some()),
            Some("synthetic") => Ok(false),
            Some("file") => Ok(true),
            Some(other) => Err(config_err(format!("unknown data_source {other:?}"))),
        }
    }

    /// Fills defaults for every unset key. `file_conditions` is the column
    /// count of the data file when the source is a file.
    fn resolve(mut self, defaults: &Defaults, file_conditions: Option<usize>) -> Result<Self, RunError> {
        let is_file = self.data_source_is_file()?;
        self.data_source = Some(if is_file { "file" } else { "synthetic" }.into());
        if is_file {
            let cols = file_conditions.expect("file source resolved with a column count");
            match self.p {
                Some(p) if p != cols => {
                    return Err(config_err(format!(
                        "config p = {p} but the data file has {cols} conditions"
                    )))
                }
                _ => self.p = Some(cols),
            }
            self.delimiter.get_or_insert_with(|| "auto".into());
        }
        self.p.get_or_insert(defaults.p);
        self.n_values.get_or_insert_with(|| defaults.n_values.clone());
        self.m.get_or_insert(defaults.m);
        self.estimators.get_or_insert_with(|| {
            Estimator::SAMPLE.iter().map(|e| e.name().to_string()).collect()
        });
        self.master_seed.get_or_insert(defaults.master_seed);
        self.sigma_seed.get_or_insert(defaults.sigma_seed);
        self.pcs_reported.get_or_insert(1);
        self.sigma_model.get_or_insert_with(|| SigmaModel::default().to_string());
        self.pdc_normalization
            .get_or_insert_with(|| PdcNormalization::default().to_string());
        self.epsilon_floor.get_or_insert(crate::pairdiff::DEFAULT_EPSILON_FLOOR);
        Ok(self)
    }

    /// Fills unset keys with the `simulate` defaults, or the `analyze`
    /// defaults when the data source is a file.
    pub fn resolve_for_sweep(self) -> Result<Self, RunError> {
        if self.data_source_is_file()? {
            let cols = file_conditions(&self)?;
            self.resolve(&ANALYZE_DEFAULTS(), Some(cols))
        } else {
            self.resolve(&SIMULATE_DEFAULTS(), None)
        }
    }

    fn estimator_specs(&self) -> Result<Vec<EstimatorSpec>, RunError> {
        let norm: PdcNormalization = Self::parsed(&self.pdc_normalization)?.unwrap_or_default();
        let scopes: [(Estimator, Option<ScalerScope>); 4] = [
            (Estimator::Spdc, Self::parsed(&self.spdc_scope)?),
            (Estimator::Lspdc, Self::parsed(&self.lspdc_scope)?),
            (Estimator::Maxpdc, Self::parsed(&self.maxpdc_scope)?),
            (Estimator::Rpdc, Self::parsed(&self.rpdc_scope)?),
        ];
        let names = self.estimators.clone().unwrap_or_default();
        if names.is_empty() {
            return Err(config_err("no estimators configured"));
        }
        names
            .iter()
            .map(|name| {
                let method: Estimator = name.parse()?;
                let mut spec = EstimatorSpec::new(method)?.with_normalization(norm);
                if let Some((_, Some(scope))) = scopes.iter().find(|(e, _)| *e == method) {
                    spec = spec.with_scope(*scope);
                }
                if let Some(eps) = self.epsilon_floor {
                    if !(eps > 0.0) {
                        return Err(Error::input("epsilon_floor must be positive"));
                    }
                    spec.epsilon_floor = Some(eps);
                }
                Ok(spec)
            })
            .collect::<Result<_, Error>>()
            .map_err(RunError::from)
    }

    /// Converts a resolved config into an experiment description.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, RunError> {
        let data_source = if self.data_source_is_file()? {
            let path = self
                .data_file
                .clone()
                .ok_or_else(|| config_err("data_source = \"file\" needs data_file"))?;
            DataSource::File {
                path: PathBuf::from(path),
                delimiter: Self::parsed(&self.delimiter)?.unwrap_or_default(),
            }
        } else {
            DataSource::Synthetic
        };
        let cfg = ExperimentConfig {
            p: self.p.ok_or_else(|| config_err("p is not set"))?,
            n_values: self.n_values.clone().unwrap_or_default(),
            m: self.m.unwrap_or(0),
            estimators: self.estimator_specs()?,
            master_seed: self.master_seed.unwrap_or(0),
            sigma_seed: self.sigma_seed.unwrap_or(0),
            data_source,
            pcs_reported: self.pcs_reported.unwrap_or(1),
            sigma_model: Self::parsed(&self.sigma_model)?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Defaults {
    p: usize,
    n_values: Vec<usize>,
    m: usize,
    master_seed: u64,
    sigma_seed: u64,
}

const SIMULATE_DEFAULTS: fn() -> Defaults = || Defaults {
    p: 20,
    n_values: (3..=20).collect(),
    m: 500,
    master_seed: 1,
    sigma_seed: 1,
};

const ANALYZE_DEFAULTS: fn() -> Defaults = || Defaults {
    p: 0,
    n_values: (5..=15).collect(),
    m: 100,
    master_seed: 1,
    sigma_seed: 0,
};

const ESTIMATE_DEFAULTS: fn() -> Defaults = || Defaults {
    p: 20,
    n_values: vec![5],
    m: 1,
    master_seed: 1,
    sigma_seed: 1,
};

/// Options shared by every command (the CLI flags).
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub seed: Option<u64>,
    /// 0 selects the rayon default.
    pub threads: usize,
    pub pcs: Option<usize>,
    /// Data file override for `analyze`/`estimate`.
    pub data: Option<PathBuf>,
    /// Input directory for `report`.
    pub input: Option<PathBuf>,
    pub verbose: bool,
}

/// What a command wrote.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub config_hash: Option<String>,
}

fn load_config(opts: &RunOptions) -> Result<ConfigFile, RunError> {
    let mut cfg = match &opts.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.master_seed = Some(seed);
    }
    if let Some(k) = opts.pcs {
        cfg.pcs_reported = Some(k);
    }
    if let Some(path) = &opts.data {
        cfg.data_file = Some(path.display().to_string());
        cfg.data_source = Some("file".into());
    }
    Ok(cfg)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Core(Error::numerical(format!("thread pool: {e}"))))?;
    Ok(pool.install(f))
}

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

/// Wide table: one row per `n`, one column per method (POP first).
pub fn wide_table(result: &SweepResult, metric: &str, pc: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let methods = result.methods();
    let mut header = vec!["n".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    let rows = result
        .n_values()
        .into_iter()
        .map(|n| {
            let mut row = vec![n.to_string()];
            for &method in &methods {
                let v = result
                    .get(n, method, pc)
                    .and_then(|r| r.metric(metric))
                    .unwrap_or(f64::NAN);
                row.push(fmt17(v));
            }
            row
        })
        .collect();
    (header, rows)
}

fn render_csv(hash: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("# config_hash={hash}\n{}\n", header.join(","));
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", header.join(" | "));
    s.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

fn table_file_name(stem: &str, pc: usize) -> String {
    if pc == 1 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_pc{pc}.csv")
    }
}

fn write_sweep_outputs(
    out: &mut OutDir,
    result: &SweepResult,
    hash: &str,
    format: OutputFormat,
) -> Result<(), RunError> {
    let mut long = Vec::new();
    result.write_csv(&mut long).map_err(|e| io_err(&out.dir, e))?;
    let mut with_hash = format!("# config_hash={hash}\n").into_bytes();
    with_hash.extend(long);
    out.write("sweep.csv", &with_hash)?;

    let mut md = String::new();
    for pc in 1..=result.max_pc() {
        for (metric, stem) in TABLE_FILES {
            let (header, rows) = wide_table(result, metric, pc);
            out.write(&table_file_name(stem, pc), render_csv(hash, &header, &rows).as_bytes())?;
            if format == OutputFormat::Markdown {
                let _ = writeln!(md, "## {metric} (PC{pc})\n");
                md.push_str(&markdown_table(&header, &rows));
                md.push('\n');
            }
        }
    }
    if format == OutputFormat::Markdown {
        out.write("tables.md", format!("<!-- config_hash={hash} -->\n\n{md}").as_bytes())?;
    }
    Ok(())
}

fn write_manifest(
    out: &mut OutDir,
    command: &str,
    cfg: &ConfigFile,
    threads: usize,
    started: Instant,
) -> Result<(), RunError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        threads,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.write("manifest.json", json.as_bytes())?;
    out.write("config.resolved.toml", cfg.to_toml().as_bytes())
}

fn run_sweep_command(
    command: &str,
    cfg: ConfigFile,
    opts: &RunOptions,
    started: Instant,
) -> Result<RunOutput, RunError> {
    let experiment = cfg.to_experiment()?;
    let population = Population::for_config(&experiment)?;
    if opts.verbose {
        eprintln!(
            "{command}: p={} n={:?} m={} estimators={}",
            experiment.p,
            experiment.n_values,
            experiment.m,
            experiment.estimators.len()
        );
    }
    let result = with_pool(opts.threads, || run_sweep_with_population(&experiment, &population))??;
    let hash = cfg.hash();
    let mut out = OutDir::create(&opts.out)?;
    write_sweep_outputs(&mut out, &result, &hash, opts.format)?;
    write_manifest(&mut out, command, &cfg, opts.threads, started)?;
    Ok(RunOutput {
        files: out.files,
        config_hash: Some(hash),
    })
}

/// Monte Carlo sweep on a synthetic Gaussian population.
pub fn cmd_simulate(opts: &RunOptions) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    let cfg = load_config(opts)?;
    if cfg.data_source_is_file()? {
        return Err(config_err("simulate needs data_source = \"synthetic\"; use analyze for files"));
    }
    let cfg = cfg.resolve(&SIMULATE_DEFAULTS(), None)?;
    run_sweep_command("simulate", cfg, opts, started)
}

fn file_conditions(cfg: &ConfigFile) -> Result<usize, RunError> {
    let path = cfg
        .data_file
        .as_ref()
        .ok_or_else(|| config_err("no data file: set data_file or pass --data"))?;
    let delimiter: Delimiter = ConfigFile::parsed(&cfg.delimiter)?.unwrap_or_default();
    Ok(load_expression_table(Path::new(path), delimiter)?.n_conditions())
}

/// Subsampling sweep on a data file whose full MLE covariance is the population.
pub fn cmd_analyze(opts: &RunOptions) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    let mut cfg = load_config(opts)?;
    if cfg.data_source.is_none() {
        cfg.data_source = Some("file".into());
    }
    if !cfg.data_source_is_file()? {
        return Err(config_err("analyze needs data_source = \"file\""));
    }
    let cols = file_conditions(&cfg)?;
    let cfg = cfg.resolve(&ANALYZE_DEFAULTS(), Some(cols))?;
    run_sweep_command("analyze", cfg, opts, started)
}

/// Per-estimator diagnostics written by [`cmd_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub label: String,
    pub frobenius_to_population: Option<f64>,
    pub condition_number: f64,
    pub numerical_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevenePair {
    pub a: String,
    pub b: String,
    pub diagonal: LeveneResult,
    pub off_diagonal: LeveneResult,
}

fn levene_pair(a: (&str, &SymmetricMatrix), b: (&str, &SymmetricMatrix)) -> Result<LevenePair, Error> {
    let (diag, off) = matrix_element_groups(a.1, b.1)?;
    Ok(LevenePair {
        a: a.0.into(),
        b: b.0.into(),
        diagonal: levene_test(&diag)?,
        off_diagonal: levene_test(&off)?,
    })
}

/// Estimates covariance matrices for one dataset and compares them.
pub fn cmd_estimate(opts: &RunOptions) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    let cfg = load_config(opts)?;
    let is_file = cfg.data_source_is_file()?;
    let explicit_n = cfg.n_values.is_some();
    let cfg = if is_file {
        let cols = file_conditions(&cfg)?;
        cfg.resolve(&ESTIMATE_DEFAULTS(), Some(cols))?
    } else {
        cfg.resolve(&ESTIMATE_DEFAULTS(), None)?
    };
    let experiment = {
        // only the first n is used
        let mut c = cfg.clone();
        c.n_values = c.n_values.map(|v| v.into_iter().take(1).collect());
        c.to_experiment()?
    };
    let n = experiment.n_values[0];

    let (data, population): (DataMatrix, Option<SymmetricMatrix>) = match &experiment.data_source {
        DataSource::Synthetic => {
            let sigma =
                generate_population_sigma_with(experiment.p, experiment.sigma_seed, experiment.sigma_model)?;
            let data = MvnSampler::new(&sigma)?.sample(n, experiment.master_seed)?;
            (data, Some(sigma))
        }
        DataSource::File { path, delimiter } => {
            let table = load_expression_table(path, *delimiter)?;
            if explicit_n {
                let data = subsample_rows(&table, n, experiment.master_seed)?;
                let pop = Population::from_table(table)?;
                (data, Some(pop.sigma))
            } else {
                (table.as_data_matrix()?, None)
            }
        }
    };

    let mut out = OutDir::create(&opts.out)?;
    let hash = cfg.hash();
    let mut estimates: Vec<(String, SymmetricMatrix)> = Vec::new();
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    for spec in &experiment.estimators {
        let est = estimate(&data, spec)?;
        let count = used.entry(spec.method.to_string()).or_insert(0);
        *count += 1;
        let label = if *count == 1 {
            spec.method.to_string()
        } else {
            format!("{}_{}", spec.method, count)
        };
        estimates.push((label, est.matrix));
    }

    let write_matrix = |out: &mut OutDir, label: &str, m: &SymmetricMatrix| -> Result<(), RunError> {
        let mut buf = Vec::new();
        m.write_csv(&mut buf).map_err(|e| io_err(&opts.out, e))?;
        out.write(&format!("{label}.csv"), &buf)
    };
    if let Some(pop) = &population {
        write_matrix(&mut out, "POP", pop)?;
    }
    for (label, m) in &estimates {
        write_matrix(&mut out, label, m)?;
    }

    let summaries = estimates
        .iter()
        .map(|(label, m)| {
            Ok(EstimateSummary {
                label: label.clone(),
                frobenius_to_population: population
                    .as_ref()
                    .map(|pop| frobenius_distance(pop, m))
                    .transpose()?,
                condition_number: condition_number(m)?,
                numerical_rank: numerical_rank(m, DEFAULT_RANK_TOL)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut pairs = Vec::new();
    for i in 0..estimates.len() {
        for j in (i + 1)..estimates.len() {
            let (a, b) = (&estimates[i], &estimates[j]);
            pairs.push(levene_pair((&a.0, &a.1), (&b.0, &b.1))?);
        }
    }

    let mut csv = format!(
        "# config_hash={hash}\nestimator,frobenius_to_population,condition_number,numerical_rank\n"
    );
    for s in &summaries {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            s.label,
            s.frobenius_to_population.map(fmt17).unwrap_or_default(),
            fmt17(s.condition_number),
            s.numerical_rank
        );
    }
    out.write("summary.csv", csv.as_bytes())?;
    if !pairs.is_empty() {
        let mut lev = format!(
            "# config_hash={hash}\na,b,elements,statistic,p_value,df1,df2,p_underflow\n"
        );
        for pair in &pairs {
            for (kind, r) in [("diagonal", &pair.diagonal), ("off_diagonal", &pair.off_diagonal)] {
                let _ = writeln!(
                    lev,
                    "{},{},{kind},{},{},{},{},{}",
                    pair.a,
                    pair.b,
                    fmt17(r.statistic),
                    fmt17(r.p_value),
                    r.df1,
                    r.df2,
                    r.p_underflow
                );
            }
        }
        out.write("levene.csv", lev.as_bytes())?;
    }
    out.write(
        "summary.md",
        render_estimate_summary(&hash, n, data.ncols(), &summaries, &pairs).as_bytes(),
    )?;
    write_manifest(&mut out, "estimate", &cfg, opts.threads, started)?;
    Ok(RunOutput {
        files: out.files,
        config_hash: Some(hash),
    })
}

fn render_estimate_summary(
    hash: &str,
    n: usize,
    p: usize,
    summaries: &[EstimateSummary],
    pairs: &[LevenePair],
) -> String {
    let mut s = format!("<!-- config_hash={hash} -->\n\n# Covariance estimates (n = {n}, p = {p})\n\n");
    s.push_str("| estimator | Frobenius distance to population | condition number | numerical rank |\n");
    s.push_str("|---|---|---|---|\n");
    for e in summaries {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            e.label,
            e.frobenius_to_population.map(fmt17).unwrap_or_else(|| "n/a".into()),
            fmt17(e.condition_number),
            e.numerical_rank
        );
    }
    if !pairs.is_empty() {
        s.push_str("\n## Levene's test, diagonal vs off-diagonal elements\n\n");
        s.push_str("| pair | elements | statistic | p-value | df |\n|---|---|---|---|---|\n");
        for pair in pairs {
            for (kind, r) in [("diagonal", &pair.diagonal), ("off-diagonal", &pair.off_diagonal)] {
                let p = if r.p_underflow {
                    "< 1e-300".to_string()
                } else {
                    fmt17(r.p_value)
                };
                let _ = writeln!(
                    s,
                    "| {} vs {} | {kind} | {} | {p} | ({}, {}) |",
                    pair.a,
                    pair.b,
                    fmt17(r.statistic),
                    r.df1,
                    r.df2
                );
            }
        }
    }
    s
}

/// A wide table read back from CSV; values keep their original text.
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_wide_csv(text: &str) -> Result<WideTable, RunError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| config_err("empty table"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if header.first().map(String::as_str) != Some("n") {
        return Err(config_err("table header must start with n"));
    }
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
        .collect();
    if let Some(bad) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(config_err(format!("ragged table row starting with {:?}", bad[0])));
    }
    Ok(WideTable { header, rows })
}

/// Methods ranked best-first for one table row. `metric` decides the
/// criterion: distance to POP for `explained_pct`, the raw value otherwise
/// (lower is better). Ties fall back to the fixed method order.
pub fn rank_row(table: &WideTable, row: usize, metric: &str) -> Vec<String> {
    let pop_col = table.header.iter().position(|h| h == "POP");
    let value = |c: usize| table.rows[row][c].parse::<f64>().unwrap_or(f64::NAN);
    let pop = pop_col.map(value);
    let order_key = |name: &str| {
        name.parse::<Estimator>()
            .ok()
            .and_then(|e| Estimator::SAMPLE.iter().position(|&s| s == e))
            .unwrap_or(usize::MAX)
    };
    let mut scored: Vec<(f64, usize, String)> = table
        .header
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(c, _)| Some(*c) != pop_col)
        .filter_map(|(c, name)| {
            let v = value(c);
            let score = if metric == "explained_pct" {
                (v - pop?).abs()
            } else {
                v
            };
            score.is_finite().then(|| (score, order_key(name), name.clone()))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    scored.into_iter().map(|(_, _, name)| name).collect()
}

fn metric_for_stem(stem: &str) -> Option<&'static str> {
    TABLE_FILES.iter().find(|(_, s)| *s == stem).map(|(m, _)| *m)
}

/// Renders one wide table as markdown with the top three methods per row
/// annotated `[1st]`, `[2nd]`, `[3rd]`.
pub fn render_ranked_markdown(title: &str, table: &WideTable, metric: &str) -> String {
    let methods = table.header.iter().skip(1).filter(|h| *h != "POP").count();
    let mut s = format!("## {title}\n\n");
    if methods < 2 {
        s.push_str(&markdown_table(&table.header, &table.rows));
        return s;
    }
    const MARKS: [&str; 3] = ["[1st]", "[2nd]", "[3rd]"];
    let mut annotated = Vec::new();
    let mut ranking = String::new();
    for (r, row) in table.rows.iter().enumerate() {
        let ranked = rank_row(table, r, metric);
        let mut cells = row.clone();
        for (place, name) in ranked.iter().take(3).enumerate() {
            if let Some(c) = table.header.iter().position(|h| h == name) {
                cells[c] = format!("{} {}", cells[c], MARKS[place]);
            }
        }
        annotated.push(cells);
        let _ = writeln!(
            ranking,
            "| {} | {} |",
            row[0],
            ranked.iter().take(3).cloned().collect::<Vec<_>>().join(", ")
        );
    }
    s.push_str(&markdown_table(&table.header, &annotated));
    s.push_str("\n### Ranking\n\n| n | best, second, third |\n|---|---|\n");
    s.push_str(&ranking);
    s
}

/// Merges prior run tables in `input` into one markdown report.
pub fn cmd_report(opts: &RunOptions) -> Result<RunOutput, RunError> {
    let input = opts.input.clone().unwrap_or_else(|| opts.out.clone());
    if !input.is_dir() {
        return Err(config_err(format!("input directory {} not found", input.display())));
    }
    let mut stems: Vec<(String, PathBuf)> = fs::read_dir(&input)
        .map_err(|e| io_err(&input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .filter_map(|p| {
            let stem = p.file_stem()?.to_str()?.to_string();
            let base = stem.split("_pc").next().unwrap_or(&stem).to_string();
            metric_for_stem(&base).map(|_| (stem, p))
        })
        .collect();
    if stems.is_empty() {
        return Err(config_err(format!(
            "no result tables (overdispersion.csv, explained.csv, cse.csv) in {}",
            input.display()
        )));
    }
    let file_order = |stem: &str| {
        let base = stem.split("_pc").next().unwrap_or(stem);
        TABLE_FILES.iter().position(|(_, s)| *s == base).unwrap_or(usize::MAX)
    };
    stems.sort_by(|a, b| file_order(&a.0).cmp(&file_order(&b.0)).then(a.0.cmp(&b.0)));

    let mut body = String::new();
    let mut ranked = false;
    let mut hashes = Vec::new();
    for (stem, path) in &stems {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        if let Some(h) = text.lines().find_map(|l| l.strip_prefix("# config_hash=")) {
            if !hashes.contains(&h.to_string()) {
                hashes.push(h.to_string());
            }
        }
        let table = read_wide_csv(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = stem.split("_pc").next().unwrap_or(stem);
        let metric = metric_for_stem(base).expect("filtered above");
        ranked |= table.header.iter().skip(1).filter(|h| *h != "POP").count() >= 2;
        body.push_str(&render_ranked_markdown(stem, &table, metric));
        body.push('\n');
    }
    let mut md = String::from("# Estimator comparison\n\n");
    if ranked {
        md.push_str("Top three methods per row are marked [1st], [2nd], [3rd]. Lower is better for overdispersion and CSE; explained variance is ranked by distance to POP. Ties are broken in the order MLE, LW, PDC, SPDC, LSPDC, MAXPDC, RPDC.\n\n");
    }
    md.push_str(&body);
    if !hashes.is_empty() {
        md = format!("<!-- config_hash={} -->\n\n{md}", hashes.join(","));
    }
    let mut out = OutDir::create(&opts.out)?;
    out.write("report.md", md.as_bytes())?;
    Ok(RunOutput {
        files: out.files,
        config_hash: hashes.into_iter().next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse_toml("p = 20\nbogus = 1\n").is_err());
        let c = ConfigFile::parse_toml("p = 20\nn_values = [3, 4]\nm = 2\n").unwrap();
        assert_eq!(c.n_values, Some(vec![3, 4]));
    }

    #[test]
    fn resolve_fills_defaults_and_hash_is_stable() {
        let c = ConfigFile::parse_toml("m = 3\n").unwrap();
        let r = c.resolve(&SIMULATE_DEFAULTS(), None).unwrap();
        assert_eq!(r.p, Some(20));
        assert_eq!(r.n_values.as_ref().unwrap().len(), 18);
        assert_eq!(r.estimators.as_ref().unwrap().len(), 7);
        let again = ConfigFile::parse_toml(&r.to_toml()).unwrap();
        assert_eq!(again.hash(), r.hash());
        let exp = r.to_experiment().unwrap();
        assert_eq!(exp.m, 3);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = ConfigFile::parse_toml("estimators = [\"GLASSO\"]\n").unwrap();
        let r = c.resolve(&SIMULATE_DEFAULTS(), None).unwrap();
        assert_eq!(r.to_experiment().unwrap_err().exit_code(), EXIT_INPUT);
        let c = ConfigFile::parse_toml("spdc_scope = \"sideways\"\n").unwrap();
        let r = c.resolve(&SIMULATE_DEFAULTS(), None).unwrap();
        assert!(r.to_experiment().is_err());
    }

    #[test]
    fn scope_override_applies() {
        let c = ConfigFile::parse_toml("estimators = [\"MAXPDC\"]\nmaxpdc_scope = \"per_dimension\"\n").unwrap();
        let exp = c.resolve(&SIMULATE_DEFAULTS(), None).unwrap().to_experiment().unwrap();
        assert_eq!(exp.estimators[0].scaler().unwrap().scope, ScalerScope::PerDimension);
    }

    #[test]
    fn ranking_with_ties_uses_method_order() {
        let t = read_wide_csv("n,POP,RPDC,MLE,SPDC,PDC\n3,0,0.5,0.2,0.1,0.2\n").unwrap();
        assert_eq!(rank_row(&t, 0, "overdispersion"), vec!["SPDC", "MLE", "PDC", "RPDC"]);
        let t = read_wide_csv("n,POP,MLE,LW\n3,50,60,45\n").unwrap();
        assert_eq!(rank_row(&t, 0, "explained_pct"), vec!["LW", "MLE"]);
    }

    #[test]
    fn single_method_has_no_ranking() {
        let t = read_wide_csv("n,POP,MLE\n3,0,0.5\n").unwrap();
        let md = render_ranked_markdown("overdispersion", &t, "overdispersion");
        assert!(!md.contains("Ranking"));
        assert!(!md.contains("[1st]"));
    }
}
