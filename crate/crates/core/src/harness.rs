//! Replicated experiments, CSV ingestion and result files.
//!
//! Replication `i` uses seed `base_seed + i`. Replications run in parallel;
//! records are sorted by seed before anything is aggregated or written, so
//! outputs do not depend on the thread count.
//!
//! Quantiles use the nearest-rank definition: the `q`-th percentile of `N`
//! sorted values is the value at 1-based rank `ceil(q N / 100)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{empirical_fdp, knockoff_plus_threshold};
use crate::knockoff::Construction;
use crate::matrix::SampleMatrix;
use crate::models::{generate_dataset, GenerationDiagnostics, ModelId, ModelSpec};
use crate::pipeline::{default_d, default_n1, pc_knockoff, PcKnockoffConfig, PcKnockoffReport};
use crate::screening::{
    minimum_model_size, pearson_sis_rank, rank_features, signal_gap_diagnostic, with_threads,
    FeatureRanking, RankOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PcScreen,
    PearsonSis,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PcScreen => "pc_screen",
            Method::PearsonSis => "pearson_sis",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc_screen" | "pc" => Ok(Method::PcScreen),
            "pearson_sis" | "sis" => Ok(Method::PearsonSis),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Minimum-model-size quantiles.
    Quantile,
    /// FDR / sure-screening table of the two-step procedure.
    Fdr,
    /// Empty / sure-screening / other frequencies over an alpha sweep.
    Phase,
}

/// Flat experiment description; the JSON config file mirrors the CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub models: Vec<ModelId>,
    pub methods: Vec<Method>,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    /// Active-set size for group-4 models; other models use their fixed size.
    pub s: Option<usize>,
    pub replications: usize,
    pub quantile_levels: Vec<f64>,
    pub alphas: Vec<f64>,
    pub n1: Option<usize>,
    pub d: Option<usize>,
    pub construction: Construction,
    pub base_seed: u64,
    pub threads: usize,
    pub memory_budget_mb: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Quantile,
            models: vec![ModelId::M1a],
            methods: vec![Method::PcScreen, Method::PearsonSis],
            n: 100,
            p: 1000,
            rho: 0.5,
            s: None,
            replications: 100,
            quantile_levels: vec![5.0, 25.0, 50.0, 75.0, 95.0],
            alphas: vec![0.1, 0.15, 0.2, 0.25, 0.3],
            n1: None,
            d: None,
            construction: Construction::Equicorrelated,
            base_seed: 0,
            threads: 1,
            memory_budget_mb: 1024,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: e.line(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("no models given".into()));
        }
        if self.quantile_levels.is_empty()
            || self.quantile_levels.iter().any(|q| !(*q > 0.0 && *q < 100.0))
            || self.quantile_levels.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(
                "quantile levels must lie in (0, 100) and increase strictly".into(),
            ));
        }
        match self.kind {
            ExperimentKind::Quantile => {
                if self.methods.is_empty() {
                    return Err(Error::InvalidParameter("no methods given".into()));
                }
            }
            ExperimentKind::Fdr | ExperimentKind::Phase => {
                if let Some(m) = self.models.iter().find(|m| m.group() != 4) {
                    return Err(Error::InvalidParameter(format!(
                        "model {m} is not one of the knockoff designs 4a-4e"
                    )));
                }
                if self.alphas.is_empty() {
                    return Err(Error::InvalidParameter("no alpha levels given".into()));
                }
                if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
                    return Err(Error::InvalidAlpha(*a));
                }
            }
        }
        for id in &self.models {
            self.model_spec(*id).validate()?;
        }
        Ok(())
    }

    pub fn model_spec(&self, id: ModelId) -> ModelSpec {
        let mut spec = ModelSpec::new(id, self.n, self.p);
        spec.rho = self.rho;
        if id.group() == 4 {
            if let Some(s) = self.s {
                spec.s = s;
            }
        }
        spec
    }

    pub fn seed_for(&self, replication: usize) -> u64 {
        self.base_seed.wrapping_add(replication as u64)
    }

    pub fn memory_budget_bytes(&self) -> u64 {
        self.memory_budget_mb.saturating_mul(1 << 20)
    }

    fn pipeline_config(&self, seed: u64) -> PcKnockoffConfig {
        let n1 = self.n1.unwrap_or_else(|| default_n1(self.n));
        PcKnockoffConfig {
            alpha: self.alphas[0],
            n1,
            d: self.d.unwrap_or_else(|| default_d(self.n, n1)),
            construction: self.construction,
            seed,
            threads: 1,
            memory_budget_bytes: self.memory_budget_bytes(),
        }
    }
}

/// Table preset for `reproduce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::InvalidParameter(format!("unknown scale `{other}`"))),
        }
    }
}

/// Configuration reproducing one of the four simulation tables.
///
/// Desk presets shrink `p` and the replication count but keep `n`.
pub fn table_preset(table: u8, scale: Scale) -> Result<ExperimentConfig> {
    let paper = scale == Scale::Paper;
    let base = ExperimentConfig {
        p: if paper { 5000 } else { 1000 },
        replications: if paper { 200 } else { 100 },
        ..ExperimentConfig::default()
    };
    let models = |ids: &[&str]| ids.iter().map(|s| s.parse()).collect::<Result<Vec<ModelId>>>();
    Ok(match table {
        1 => ExperimentConfig {
            models: models(&["1a", "1b", "1c", "1d", "1e", "1f"])?,
            ..base
        },
        2 => ExperimentConfig {
            models: models(&["2a", "2b", "2c", "2d"])?,
            ..base
        },
        3 => ExperimentConfig {
            models: models(&["3a", "3b"])?,
            methods: vec![Method::PcScreen],
            ..base
        },
        4 => ExperimentConfig {
            kind: ExperimentKind::Fdr,
            models: models(&["4a", "4b", "4c", "4d", "4e"])?,
            n: 1000,
            replications: if paper { 200 } else { 20 },
            ..base
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "no preset for table {other} (expected 1-4)"
            )))
        }
    })
}

/// Nearest-rank percentile of `sorted` at `level` in (0, 100).
pub fn nearest_rank_quantile(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = ((level / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn run_replications<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize, u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let reps = cfg.replications;
    let out: Vec<Result<T>> = with_threads(cfg.threads, || {
        (0..reps)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.seed_for(i);
                f(i, seed).map_err(|e| Error::Replication {
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    out.into_iter().collect()
}

/// One replication of a quantile study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRecord {
    pub model: ModelId,
    pub method: Method,
    pub replication: usize,
    pub seed: u64,
    pub min_model_size: usize,
    pub generation: GenerationDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub model: ModelId,
    pub method: Method,
    pub quantiles: Vec<f64>,
    pub replications: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub levels: Vec<f64>,
    pub rows: Vec<QuantileRow>,
}

impl QuantileTable {
    pub fn row(&self, model: ModelId, method: Method) -> Option<&QuantileRow> {
        self.rows.iter().find(|r| r.model == model && r.method == method)
    }

    /// Quantile at `level` for one `(model, method)` cell.
    pub fn quantile(&self, model: ModelId, method: Method, level: f64) -> Option<f64> {
        let i = self.levels.iter().position(|l| *l == level)?;
        self.row(model, method).map(|r| r.quantiles[i])
    }
}

/// Rebuilds the quantile table from per-replication records.
pub fn quantile_table_from_records(records: &[QuantileRecord], levels: &[f64]) -> QuantileTable {
    let mut keys: Vec<(ModelId, Method)> = records.iter().map(|r| (r.model, r.method)).collect();
    keys.sort();
    keys.dedup();
    let rows = keys
        .into_iter()
        .map(|(model, method)| {
            let mut mine: Vec<&QuantileRecord> = records
                .iter()
                .filter(|r| r.model == model && r.method == method)
                .collect();
            mine.sort_by_key(|r| r.seed);
            let mut sizes: Vec<f64> = mine.iter().map(|r| r.min_model_size as f64).collect();
            sizes.sort_by(f64::total_cmp);
            QuantileRow {
                model,
                method,
                quantiles: levels.iter().map(|l| nearest_rank_quantile(&sizes, *l)).collect(),
                replications: mine.len(),
                seeds: mine.iter().map(|r| r.seed).collect(),
            }
        })
        .collect();
    QuantileTable {
        levels: levels.to_vec(),
        rows,
    }
}

/// Per-replication records of a quantile study, sorted by `(model, method, seed)`.
pub fn quantile_records(cfg: &ExperimentConfig) -> Result<Vec<QuantileRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &model in &cfg.models {
        let spec = cfg.model_spec(model);
        let reps = run_replications(cfg, |replication, seed| {
            let data = generate_dataset(&spec, seed)?;
            let mut out = Vec::with_capacity(cfg.methods.len());
            for &method in &cfg.methods {
                let ranking = match method {
                    Method::PcScreen => rank_features(
                        &data.x,
                        &data.y,
                        RankOptions {
                            threads: 1,
                            memory_budget_bytes: cfg.memory_budget_bytes(),
                        },
                    )?,
                    Method::PearsonSis => pearson_sis_rank(&data.x, &data.y)?,
                };
                out.push(QuantileRecord {
                    model,
                    method,
                    replication,
                    seed,
                    min_model_size: minimum_model_size(&ranking, &data.true_active)?,
                    generation: data.diagnostics.clone(),
                });
            }
            Ok(out)
        })?;
        records.extend(reps.into_iter().flatten());
    }
    records.sort_by_key(|r| (r.model, r.method, r.seed));
    Ok(records)
}

/// Quantiles of the minimum model size for every `(model, method)` pair.
pub fn run_quantile_experiment(cfg: &ExperimentConfig) -> Result<QuantileTable> {
    let records = quantile_records(cfg)?;
    Ok(quantile_table_from_records(&records, &cfg.quantile_levels))
}

/// Selection at one alpha within a knockoff replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaOutcome {
    pub alpha: f64,
    pub t_alpha: Option<f64>,
    pub selected: Vec<usize>,
    pub fdp: f64,
    pub contains_active: bool,
}

/// One replication of the two-step procedure, evaluated at every alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffRecord {
    pub model: ModelId,
    pub replication: usize,
    pub seed: u64,
    pub true_active: Vec<usize>,
    pub survivors: Vec<usize>,
    pub screening_contains_active: bool,
    pub outcomes: Vec<AlphaOutcome>,
    pub fallback: bool,
    pub jitter: f64,
    pub clip: f64,
    pub generation: GenerationDiagnostics,
}

/// Per-replication records of the two-step procedure, sorted by `(model, seed)`.
///
/// `W` is computed once per replication; every alpha reuses it.
pub fn knockoff_records(cfg: &ExperimentConfig) -> Result<Vec<KnockoffRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &model in &cfg.models {
        let spec = cfg.model_spec(model);
        let reps = run_replications(cfg, |replication, seed| {
            let data = generate_dataset(&spec, seed)?;
            let report = pc_knockoff(&data.x, &data.y, &cfg.pipeline_config(seed))?;
            let covers = |set: &[usize]| data.true_active.iter().all(|j| set.binary_search(j).is_ok());
            let outcomes = cfg
                .alphas
                .iter()
                .map(|&alpha| {
                    let sel = knockoff_plus_threshold(&report.w, alpha)?;
                    Ok(AlphaOutcome {
                        alpha,
                        t_alpha: sel.t_alpha,
                        fdp: empirical_fdp(&sel.selected, &data.true_active),
                        contains_active: covers(&sel.selected),
                        selected: sel.selected,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KnockoffRecord {
                model,
                replication,
                seed,
                true_active: data.true_active.clone(),
                screening_contains_active: covers(&report.a_hat_1.indices),
                survivors: report.a_hat_1.indices.clone(),
                outcomes,
                fallback: report.fallback_flag,
                jitter: report.jitter,
                clip: report.clip,
                generation: data.diagnostics.clone(),
            })
        })?;
        records.extend(reps);
    }
    records.sort_by_key(|r| (r.model, r.seed));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrRow {
    pub model: ModelId,
    pub alpha: f64,
    /// Mean size of the final selection.
    pub mean_size: f64,
    /// Selection frequency of each active feature, in index order.
    pub feature_frequency: Vec<f64>,
    /// Frequency with which the selection contains the whole active set.
    pub all_frequency: f64,
    pub empirical_fdr: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrTable {
    pub rows: Vec<FdrRow>,
}

impl FdrTable {
    pub fn row(&self, model: ModelId, alpha: f64) -> Option<&FdrRow> {
        self.rows.iter().find(|r| r.model == model && r.alpha == alpha)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (crate::sum::Neumaier::default(), 0usize);
    for v in values {
        sum.add(v);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum.total() / count as f64
    }
}

fn models_in(records: &[KnockoffRecord]) -> Vec<ModelId> {
    let mut models: Vec<ModelId> = records.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    models
}

fn sorted_for(records: &[KnockoffRecord], model: ModelId) -> Vec<&KnockoffRecord> {
    let mut mine: Vec<&KnockoffRecord> = records.iter().filter(|r| r.model == model).collect();
    mine.sort_by_key(|r| r.seed);
    mine
}

/// Aggregates knockoff records into the FDR table.
pub fn fdr_table_from_records(records: &[KnockoffRecord]) -> FdrTable {
    let mut rows = Vec::new();
    for model in models_in(records) {
        let mine = sorted_for(records, model);
        let active = &mine[0].true_active;
        for (a, outcome) in mine[0].outcomes.iter().enumerate() {
            fn at<'r>(r: &&'r KnockoffRecord, a: usize) -> &'r AlphaOutcome {
                &r.outcomes[a]
            }
            rows.push(FdrRow {
                model,
                alpha: outcome.alpha,
                mean_size: mean(mine.iter().map(|r| at(r, a).selected.len() as f64)),
                feature_frequency: active
                    .iter()
                    .map(|j| {
                        mean(mine.iter().map(|r| {
                            f64::from(u8::from(at(r, a).selected.binary_search(j).is_ok()))
                        }))
                    })
                    .collect(),
                all_frequency: mean(mine.iter().map(|r| f64::from(u8::from(at(r, a).contains_active)))),
                empirical_fdr: mean(mine.iter().map(|r| at(r, a).fdp)),
                replications: mine.len(),
            });
        }
    }
    FdrTable { rows }
}

/// FDR / sure-screening study of the two-step procedure.
pub fn run_fdr_experiment(cfg: &ExperimentConfig) -> Result<FdrTable> {
    Ok(fdr_table_from_records(&knockoff_records(cfg)?))
}

/// Event frequencies at one alpha: E1 empty selection, E2 selection contains
/// the active set, E3 anything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub model: ModelId,
    pub alpha: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub rows: Vec<PhaseRow>,
}

impl PhaseTable {
    pub fn row(&self, model: ModelId, alpha: f64) -> Option<&PhaseRow> {
        self.rows.iter().find(|r| r.model == model && r.alpha == alpha)
    }
}

pub fn phase_table_from_records(records: &[KnockoffRecord]) -> PhaseTable {
    let mut rows = Vec::new();
    for model in models_in(records) {
        let mine = sorted_for(records, model);
        let reps = mine.len();
        for (a, outcome) in mine[0].outcomes.iter().enumerate() {
            let (mut e1, mut e2, mut e3) = (0usize, 0usize, 0usize);
            for r in &mine {
                let o = &r.outcomes[a];
                if o.selected.is_empty() {
                    e1 += 1;
                } else if o.contains_active {
                    e2 += 1;
                } else {
                    e3 += 1;
                }
            }
            rows.push(PhaseRow {
                model,
                alpha: outcome.alpha,
                e1: e1 as f64 / reps as f64,
                e2: e2 as f64 / reps as f64,
                e3: e3 as f64 / reps as f64,
                replications: reps,
            });
        }
    }
    PhaseTable { rows }
}

/// Alpha sweep for the phase-transition study.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseTable> {
    Ok(phase_table_from_records(&knockoff_records(cfg)?))
}

/// Formats a float so that parsing it back gives the same bits (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Which columns of a design CSV hold the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumns {
    Names(Vec<String>),
    /// The last `k` columns.
    Trailing(usize),
}

impl std::str::FromStr for ResponseColumns {
    type Err = Error;

    /// A bare integer means a trailing count; anything else is a comma-separated name list.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.trim().parse::<usize>() {
            return Ok(ResponseColumns::Trailing(k));
        }
        let names: Vec<String> = s
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        if names.is_empty() {
            return Err(Error::InvalidParameter("empty response column list".into()));
        }
        Ok(ResponseColumns::Names(names))
    }
}

/// A design read from CSV, with the original column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    pub x: SampleMatrix,
    pub y: SampleMatrix,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
}

/// Reads a header-first numeric CSV. Row numbers in errors are 1-based file lines.
pub fn read_design_csv(path: &Path, response: &ResponseColumns) -> Result<DesignData> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let width = header.len();

    let y_cols: Vec<usize> = match response {
        ResponseColumns::Trailing(k) => {
            if *k == 0 || *k >= width {
                return Err(Error::InvalidParameter(format!(
                    "cannot take {k} trailing response columns from {width} columns"
                )));
            }
            (width - k..width).collect()
        }
        ResponseColumns::Names(names) => names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn {
                        path: path.to_path_buf(),
                        column: name.clone(),
                    })
            })
            .collect::<Result<_>>()?,
    };
    let x_cols: Vec<usize> = (0..width).filter(|c| !y_cols.contains(c)).collect();
    if x_cols.is_empty() {
        return Err(Error::InvalidParameter("no feature columns left".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumericCell {
                    path: path.to_path_buf(),
                    row: line,
                    column: header[c].clone(),
                    value: cell.to_string(),
                }
            })?;
            columns[c].push(v);
        }
    }
    let pick = |cols: &[usize]| -> Result<SampleMatrix> {
        let chosen: Vec<&[f64]> = cols.iter().map(|&c| columns[c].as_slice()).collect();
        SampleMatrix::from_columns(&chosen)
    };
    Ok(DesignData {
        x: pick(&x_cols)?,
        y: pick(&y_cols)?,
        x_names: x_cols.iter().map(|&c| header[c].clone()).collect(),
        y_names: y_cols.iter().map(|&c| header[c].clone()).collect(),
    })
}

/// Writes `[x, y]` with a header; numbers use [`format_f64`].
pub fn write_design_csv(
    path: &Path,
    x: &SampleMatrix,
    y: &SampleMatrix,
    x_names: &[String],
    y_names: &[String],
) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if x_names.len() != x.ncols() || y_names.len() != y.ncols() {
        return Err(Error::DimensionMismatch {
            what: "column name count",
            expected: x.ncols() + y.ncols(),
            got: x_names.len() + y_names.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(x_names.iter().chain(y_names))?;
    for i in 0..x.nrows() {
        let row: Vec<String> = x
            .row(i)
            .into_iter()
            .chain(y.row(i))
            .map(format_f64)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Default names `x0, x1, ...` / `y0, ...`.
pub fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|j| format!("{prefix}{j}")).collect()
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Ranks the features of a CSV design and writes `ranking.csv`
/// (`feature,omega_hat,rank`) and `gap.csv` into `out_dir`.
pub fn screen_design(design: &DesignData, opts: RankOptions, out_dir: &Path) -> Result<FeatureRanking> {
    let ranking = rank_features(&design.x, &design.y, opts)?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("ranking.csv"))?;
    w.write_record(["feature", "omega_hat", "rank"])?;
    for (i, e) in ranking.entries.iter().enumerate() {
        w.write_record([
            design.x_names[e.feature].clone(),
            e.omega_hat.to_string(),
            (i + 1).to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out_dir.join("gap.csv"))?;
    w.write_record(["rank", "feature", "omega_hat", "successive_gap"])?;
    for row in signal_gap_diagnostic(&ranking) {
        w.write_record([
            row.rank.to_string(),
            design.x_names[row.feature].clone(),
            row.omega_hat.to_string(),
            row.successive_gap.map(|g| g.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(ranking)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedW {
    pub feature: String,
    pub w_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub jitter: f64,
    pub clip: f64,
    pub fallback: bool,
}

/// The `selection.json` document; `t_alpha = null` means no feasible threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub alpha: f64,
    pub t_alpha: Option<f64>,
    pub selected: Vec<String>,
    pub fdp_hat: f64,
    pub survivors: Vec<String>,
    pub w: Vec<NamedW>,
    pub diagnostics: SelectionDiagnostics,
}

impl SelectionReport {
    pub fn new(report: &PcKnockoffReport, names: &[String]) -> Self {
        let name = |j: &usize| names[*j].clone();
        Self {
            alpha: report.selection.alpha,
            t_alpha: report.selection.t_alpha,
            selected: report.selection.selected.iter().map(name).collect(),
            fdp_hat: report.selection.fdp_hat,
            survivors: report.a_hat_1.indices.iter().map(name).collect(),
            w: report
                .w
                .entries
                .iter()
                .map(|e| NamedW {
                    feature: name(&e.feature),
                    w_hat: e.w_hat,
                })
                .collect(),
            diagnostics: SelectionDiagnostics {
                jitter: report.jitter,
                clip: report.clip,
                fallback: report.fallback_flag,
            },
        }
    }
}

/// Runs the two-step procedure on a CSV design and writes `selection.json`.
pub fn pcknockoff_design(
    design: &DesignData,
    cfg: &PcKnockoffConfig,
    out_dir: &Path,
) -> Result<SelectionReport> {
    let report = pc_knockoff(&design.x, &design.y, cfg)?;
    let doc = SelectionReport::new(&report, &design.x_names);
    std::fs::create_dir_all(out_dir)?;
    let mut w = BufWriter::new(File::create(out_dir.join("selection.json"))?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(doc)
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Quantile(QuantileTable),
    Fdr(FdrTable),
    Phase(PhaseTable),
}

/// Runs any experiment and, if `cfg.out_dir` is set, writes the summary CSV
/// and the JSON-lines replication log there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    match cfg.kind {
        ExperimentKind::Quantile => {
            let records = quantile_records(cfg)?;
            let table = quantile_table_from_records(&records, &cfg.quantile_levels);
            if let Some(dir) = &cfg.out_dir {
                write_jsonl(&dir.join("replications.jsonl"), &records)?;
                let mut w = csv::Writer::from_path(dir.join("quantile_summary.csv"))?;
                let mut header = vec!["model".to_string(), "method".to_string()];
                header.extend(cfg.quantile_levels.iter().map(|l| format!("q{l}")));
                header.push("replications".into());
                w.write_record(&header)?;
                for row in &table.rows {
                    let mut rec = vec![row.model.to_string(), row.method.name().to_string()];
                    rec.extend(join(&row.quantiles));
                    rec.push(row.replications.to_string());
                    w.write_record(&rec)?;
                }
                w.flush()?;
            }
            Ok(ExperimentOutput::Quantile(table))
        }
        ExperimentKind::Fdr => {
            let records = knockoff_records(cfg)?;
            let table = fdr_table_from_records(&records);
            if let Some(dir) = &cfg.out_dir {
                write_jsonl(&dir.join("replications.jsonl"), &records)?;
                let mut w = csv::Writer::from_path(dir.join("fdr_summary.csv"))?;
                let s_max = table.rows.iter().map(|r| r.feature_frequency.len()).max().unwrap_or(0);
                let mut header = vec!["model".to_string(), "alpha".into(), "mean_size".into()];
                header.extend((0..s_max).map(|j| format!("x{j}")));
                header.extend(["all".to_string(), "fdr".into(), "replications".into()]);
                w.write_record(&header)?;
                for row in &table.rows {
                    let mut rec = vec![
                        row.model.to_string(),
                        row.alpha.to_string(),
                        row.mean_size.to_string(),
                    ];
                    rec.extend(join(&row.feature_frequency));
                    rec.resize(3 + s_max, String::new());
                    rec.extend([
                        row.all_frequency.to_string(),
                        row.empirical_fdr.to_string(),
                        row.replications.to_string(),
                    ]);
                    w.write_record(&rec)?;
                }
                w.flush()?;
            }
            Ok(ExperimentOutput::Fdr(table))
        }
        ExperimentKind::Phase => {
            let records = knockoff_records(cfg)?;
            let table = phase_table_from_records(&records);
            if let Some(dir) = &cfg.out_dir {
                write_jsonl(&dir.join("replications.jsonl"), &records)?;
                let mut w = csv::Writer::from_path(dir.join("phase_summary.csv"))?;
                w.write_record(["model", "alpha", "e1_empty", "e2_sure", "e3_other", "replications"])?;
                for row in &table.rows {
                    w.write_record([
                        row.model.to_string(),
                        row.alpha.to_string(),
                        row.e1.to_string(),
                        row.e2.to_string(),
                        row.e3.to_string(),
                        row.replications.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            Ok(ExperimentOutput::Phase(table))
        }
    }
}
