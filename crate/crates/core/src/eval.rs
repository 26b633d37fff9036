//! Evaluation harness: single-run reports, hyperparameter sweeps with
//! resumable result files, and the training-time scaling benchmark.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, hex, GraphDataset, SplitTag, SyntheticSpec};
use crate::encode::encode_graph;
use crate::error::{Error, Result};
use crate::hdc::AccumulatorHV;
use crate::metrics::{FairnessReport, PredictionSet};
use crate::scalar::Scalar;
use crate::trainer::{init_class_hvs, train, BatchTrace, ClassModel, InferenceMode, TrainConfig};

/// Predicts every node tagged `split` and summarizes fairness and utility.
pub fn evaluate<T: Scalar>(
    model: &ClassModel<T>,
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    split: SplitTag,
    mode: InferenceMode,
    positive_class: usize,
) -> Result<FairnessReport> {
    if node_hvs.len() != dataset.num_nodes() {
        return Err(Error::Mismatch(format!(
            "{} node hypervectors for {} nodes",
            node_hvs.len(),
            dataset.num_nodes()
        )));
    }
    let nodes = dataset.nodes_with(split);
    if nodes.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let scorer = model.scorer(mode)?;
    let mut predicted = Vec::with_capacity(nodes.len());
    let mut actual = Vec::with_capacity(nodes.len());
    let mut sensitive = Vec::with_capacity(nodes.len());
    for &n in &nodes {
        predicted.push(scorer.predict(&node_hvs[n])?);
        actual.push(
            dataset
                .label(n)
                .ok_or_else(|| Error::Schema(format!("node {n} has no label")))?,
        );
        sensitive.push(dataset.sensitive()[n]);
    }
    let preds =
        PredictionSet::new(predicted, actual, sensitive)?.with_positive_class(positive_class);
    FairnessReport::compute(&preds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub encode_s: f64,
    pub init_s: f64,
    pub train_s: f64,
    pub infer_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub batches: usize,
    pub mean_bias_b: f64,
    pub mean_factor_f: f64,
    pub max_factor_f: f64,
}

impl TraceSummary {
    pub fn from_traces(traces: &[BatchTrace]) -> Self {
        let n = traces.len().max(1) as f64;
        Self {
            batches: traces.len(),
            mean_bias_b: traces.iter().map(|t| t.bias_b).sum::<f64>() / n,
            mean_factor_f: traces.iter().map(|t| t.factor_f).sum::<f64>() / n,
            max_factor_f: traces.iter().map(|t| t.factor_f).fold(0.0, f64::max),
        }
    }
}

/// Outcome of one train + evaluate run. Wall-clock timings are kept out of
/// the serialized record so result files are reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub config_hash: String,
    pub mode: InferenceMode,
    pub config: TrainConfig,
    pub report: Option<FairnessReport>,
    pub trace: Option<TraceSummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub timing: PhaseTiming,
}

impl RunResult {
    pub fn key(&self) -> RunKey {
        RunKey::new(self.alpha, self.beta, self.seed)
    }
}

/// Identity of a sweep cell, compared bitwise on the float parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    alpha_bits: u64,
    beta_bits: u64,
    seed: u64,
}

impl RunKey {
    pub fn new(alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            alpha_bits: alpha.to_bits(),
            beta_bits: beta.to_bits(),
            seed,
        }
    }
}

/// SHA-256 of the canonical JSON form of a training config.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex(&Sha256::digest(json))[..16].to_string()
}

/// Trains with `cfg` and evaluates on the test split.
pub fn run_once<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    cfg: &TrainConfig,
    mode: InferenceMode,
) -> RunResult {
    let mut timing = PhaseTiming::default();
    let outcome = (|| -> Result<(FairnessReport, TraceSummary)> {
        let t0 = Instant::now();
        let (model, traces) = train::<T>(node_hvs, dataset, cfg)?;
        timing.train_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let report = evaluate(
            &model,
            node_hvs,
            dataset,
            SplitTag::Test,
            mode,
            cfg.positive_class,
        )?;
        timing.infer_s = t1.elapsed().as_secs_f64();
        Ok((report, TraceSummary::from_traces(&traces)))
    })();
    let (report, trace, error) = match outcome {
        Ok((r, t)) => (Some(r), Some(t), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    RunResult {
        alpha: cfg.alpha,
        beta: cfg.beta,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        mode,
        config: cfg.clone(),
        report,
        trace,
        error,
        timing,
    }
}

/// Grid over `(alpha, beta, seed)`; the paper-style ranges are
/// alpha in [1e-2, 1] and beta in [1e-3, 10].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.seeds.is_empty() {
            return Err(Error::Spec("sweep grid has an empty axis".into()));
        }
        if self
            .alphas
            .iter()
            .chain(&self.betas)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Spec("sweep values must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Cells in grid order: alpha outermost, seed innermost.
    pub fn cells(&self) -> Vec<(f64, f64, u64)> {
        let mut out = Vec::new();
        for &a in &self.alphas {
            for &b in &self.betas {
                for &s in &self.seeds {
                    out.push((a, b, s));
                }
            }
        }
        out
    }
}

/// Reads complete JSON-lines records; a trailing partial line is ignored.
pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Runs every grid cell not already present in `results_path`, appending
/// one JSON line per finished run. Returns all results for the grid in
/// grid order, including those loaded from the file.
pub fn sweep<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    base: &TrainConfig,
    spec: &SweepSpec,
    mode: InferenceMode,
    results_path: Option<&Path>,
) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let mut done: BTreeMap<RunKey, RunResult> = BTreeMap::new();
    if let Some(path) = results_path {
        let existing = read_results(path)?;
        // Drop any partial trailing line left by an interrupted run.
        let mut clean = String::new();
        for r in &existing {
            clean.push_str(&serde_json::to_string(r)?);
            clean.push('\n');
        }
        fs::write(path, clean).map_err(|e| Error::io(path, e))?;
        for r in existing {
            done.insert(r.key(), r);
        }
    }
    let mut appender = match results_path {
        Some(path) => Some((
            OpenOptions::new()
                .append(true)
                .create(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?,
            path,
        )),
        None => None,
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (alpha, beta, seed) in spec.cells() {
        let key = RunKey::new(alpha, beta, seed);
        if !seen.insert(key) {
            continue;
        }
        if let Some(r) = done.remove(&key) {
            out.push(r);
            continue;
        }
        let cfg = TrainConfig {
            alpha,
            beta,
            seed,
            ..base.clone()
        };
        let result = run_once::<T>(node_hvs, dataset, &cfg, mode);
        if let Some((file, path)) = appender.as_mut() {
            let mut line = serde_json::to_string(&result)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|e| Error::io(*path, e))?;
            file.flush().map_err(|e| Error::io(*path, e))?;
        }
        out.push(result);
    }
    Ok(out)
}

/// Mean and sample standard deviation (n - 1 denominator); the standard
/// deviation is `None` for fewer than two values.
pub fn mean_std(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    Some((mean, std))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: Option<f64>,
    pub count: usize,
}

/// Mean +- std per `(alpha, beta)` over seeds, using external units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub failed: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn aggregate(results: &[RunResult]) -> Vec<AggregateRow> {
    let mut groups: Vec<((u64, u64), Vec<&RunResult>)> = Vec::new();
    for r in results {
        let key = (r.alpha.to_bits(), r.beta.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((a, b), runs)| {
            let mut metrics = BTreeMap::new();
            for (i, name) in crate::metrics::REPORT_FIELDS.iter().enumerate() {
                let values: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.report.as_ref())
                    .filter_map(|rep| rep.external_values()[i])
                    .collect();
                if let Some((mean, std)) = mean_std(&values) {
                    metrics.insert(
                        name.to_string(),
                        MetricSummary {
                            mean,
                            std,
                            count: values.len(),
                        },
                    );
                }
            }
            AggregateRow {
                alpha: f64::from_bits(a),
                beta: f64::from_bits(b),
                runs: runs.len(),
                failed: runs.iter().filter(|r| r.error.is_some()).count(),
                metrics,
            }
        })
        .collect()
}

pub const TRADEOFF_HEADER: &str = "alpha,beta,seed,acc,f1,dp_gap_pp,eo_gap_pp,prule";

/// Delimited per-run table for external plotting. Failed runs are omitted.
pub fn tradeoff_table(results: &[RunResult]) -> String {
    let mut out = String::from(TRADEOFF_HEADER);
    out.push('\n');
    for r in results {
        let Some(rep) = &r.report else { continue };
        let values: Vec<String> = rep
            .external_values()
            .iter()
            .map(|v| crate::metrics::format_value(*v))
            .collect();
        out.push_str(&format!("{},{},{},{}\n", r.alpha, r.beta, r.seed, values.join(",")));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub train_nodes: usize,
    pub dim: usize,
    pub timing: PhaseTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Seconds per node of the origin-anchored least-squares fit of train time.
    pub slope: f64,
    /// `|t - slope * n| / (slope * n)` per row.
    pub relative_residuals: Vec<f64>,
}

impl ScalingReport {
    pub fn from_rows(rows: Vec<ScalingRow>) -> Self {
        let sxy: f64 = rows
            .iter()
            .map(|r| r.nodes as f64 * r.timing.train_s)
            .sum();
        let sxx: f64 = rows.iter().map(|r| (r.nodes as f64).powi(2)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let relative_residuals = rows
            .iter()
            .map(|r| {
                let fit = slope * r.nodes as f64;
                if fit > 0.0 {
                    (r.timing.train_s - fit).abs() / fit
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            rows,
            slope,
            relative_residuals,
        }
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.relative_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "nodes  train_nodes   dim  encode_s    init_s   train_s   infer_s  residual\n",
        );
        for (r, res) in self.rows.iter().zip(&self.relative_residuals) {
            out.push_str(&format!(
                "{:>5}  {:>11}  {:>4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.3}\n",
                r.nodes,
                r.train_nodes,
                r.dim,
                r.timing.encode_s,
                r.timing.init_s,
                r.timing.train_s,
                r.timing.infer_s,
                res
            ));
        }
        out
    }
}

/// Times each pipeline phase on synthetic graphs of the given sizes.
pub fn timing_benchmark<T: Scalar>(
    sizes: &[usize],
    base: &SyntheticSpec,
    cfg: &TrainConfig,
) -> Result<ScalingReport> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &nodes in sizes {
        let spec = SyntheticSpec {
            nodes_per_block: nodes / 2,
            ..base.clone()
        };
        let dataset = generate_synthetic(&spec)?;
        let t = Instant::now();
        let node_hvs = encode_graph(&dataset, cfg.dim, cfg.seed)?.into_node_hvs();
        let encode_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        init_class_hvs::<T>(&node_hvs, &dataset)?;
        let init_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (model, _) = train::<T>(&node_hvs, &dataset, cfg)?;
        let train_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        evaluate(
            &model,
            &node_hvs,
            &dataset,
            SplitTag::Test,
            InferenceMode::Full,
            cfg.positive_class,
        )?;
        let infer_s = t.elapsed().as_secs_f64();
        rows.push(ScalingRow {
            nodes: dataset.num_nodes(),
            train_nodes: dataset.nodes_with(SplitTag::Train).len(),
            dim: cfg.dim,
            timing: PhaseTiming {
                encode_s,
                init_s,
                train_s,
                infer_s,
            },
        });
    }
    Ok(ScalingReport::from_rows(rows))
}
