use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fairghdc::data::{LoadOptions, Schema, SyntheticSpec};
use fairghdc::{GapForm, InferenceMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings file: TOML with the same keys as the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub dataset_edges: Option<PathBuf>,
    pub dataset_nodes: Option<PathBuf>,
    pub schema: Option<String>,
    pub directed: Option<bool>,
    pub train_fraction: Option<f64>,
    pub encoded: Option<PathBuf>,
    pub dim: Option<usize>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub gap_form: Option<String>,
    pub clamp: Option<bool>,
    pub positive_class: Option<usize>,
    pub mode: Option<String>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub nodes: Option<usize>,
    pub bias: Option<f64>,
    pub p_in: Option<f64>,
    pub p_out: Option<f64>,
    pub label_flip: Option<f64>,
    pub features: Option<usize>,
    pub sizes: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Kv,
    Table,
}

fn parse_with<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| CliError::Usage(format!("invalid {what} `{s}`: {e}")))
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// Edge list, one `src dst` pair per line.
    #[arg(long, value_name = "PATH")]
    pub dataset_edges: Option<PathBuf>,
    /// Node table with a header row.
    #[arg(long, value_name = "PATH")]
    pub dataset_nodes: Option<PathBuf>,
    /// Column mapping: `label=COL,sensitive=COL[,id=COL][,split=COL][,features=A;B][,drop=A;B]`.
    #[arg(long)]
    pub schema: Option<String>,
    /// Treat each edge as pointing from src to dst.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub directed: Option<bool>,
    /// Train share when the node table has no split column.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Reuse node hypervectors written by `encode`.
    #[arg(long, value_name = "PATH")]
    pub encoded: Option<PathBuf>,
}

pub struct DataSettings {
    pub edges: PathBuf,
    pub nodes: PathBuf,
    pub schema_text: String,
    pub schema: Schema,
    pub options: LoadOptions,
    pub encoded: Option<PathBuf>,
}

/// Layout written by `synth`.
pub const DEFAULT_SCHEMA: &str = "label=label,sensitive=sensitive,id=id,split=split";

impl DataArgs {
    pub fn resolve(&self, file: &FileConfig, seed: u64) -> Result<DataSettings, CliError> {
        let edges = self
            .dataset_edges
            .clone()
            .or_else(|| file.dataset_edges.clone())
            .ok_or_else(|| CliError::Usage("--dataset-edges is required".into()))?;
        let nodes = self
            .dataset_nodes
            .clone()
            .or_else(|| file.dataset_nodes.clone())
            .ok_or_else(|| CliError::Usage("--dataset-nodes is required".into()))?;
        let schema_text = self
            .schema
            .clone()
            .or_else(|| file.schema.clone())
            .unwrap_or_else(|| DEFAULT_SCHEMA.to_string());
        let schema = parse_with("--schema", &schema_text)?;
        let defaults = LoadOptions::default();
        let options = LoadOptions {
            directed: self.directed.or(file.directed).unwrap_or(defaults.directed),
            train_fraction: self
                .train_fraction
                .or(file.train_fraction)
                .unwrap_or(defaults.train_fraction),
            seed,
            ..defaults
        };
        Ok(DataSettings {
            edges,
            nodes,
            schema_text,
            schema,
            options,
            encoded: self.encoded.clone().or_else(|| file.encoded.clone()),
        })
    }
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Hypervector dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Learning rate for class hypervector updates.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Weight of the batch parity gap in the fairness factor.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Constant offset of the fairness factor.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Root seed; every random stream is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parity gap used for the fairness factor: `binary` or `multi`.
    #[arg(long)]
    pub gap_form: Option<String>,
    /// Clamp the fairness factor to [0, 1).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clamp: Option<bool>,
    #[arg(long)]
    pub positive_class: Option<usize>,
}

impl TrainArgs {
    pub fn seed(&self, file: &FileConfig) -> u64 {
        self.seed.or(file.seed).unwrap_or_default()
    }

    pub fn resolve(&self, file: &FileConfig) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let gap_form = match self.gap_form.as_deref().or(file.gap_form.as_deref()) {
            Some(s) => parse_with::<GapForm>("--gap-form", s)?,
            None => d.gap_form,
        };
        let cfg = TrainConfig {
            dim: self.dim.or(file.dim).unwrap_or(d.dim),
            eta: self.eta.or(file.eta).unwrap_or(d.eta),
            alpha: self.alpha.or(file.alpha).unwrap_or(d.alpha),
            beta: self.beta.or(file.beta).unwrap_or(d.beta),
            epochs: self.epochs.or(file.epochs).unwrap_or(d.epochs),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            seed: self.seed(file),
            gap_form,
            clamp_factor: self.clamp.or(file.clamp).unwrap_or(d.clamp_factor),
            positive_class: self
                .positive_class
                .or(file.positive_class)
                .unwrap_or(d.positive_class),
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn resolve_mode(
    flag: Option<&str>,
    file: &FileConfig,
) -> Result<Option<InferenceMode>, CliError> {
    flag.or(file.mode.as_deref())
        .map(|s| parse_with("--mode", s))
        .transpose()
}

pub fn resolve_format(flag: Option<Format>, file: &FileConfig) -> Format {
    flag.or(file.format).unwrap_or_default()
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    /// Total node count, split evenly between the two groups.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Gap in positive-label rate between the groups.
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub label_flip: Option<f64>,
    /// Number of binary feature columns M.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<SyntheticSpec, CliError> {
        let d = SyntheticSpec::default();
        let nodes = self.nodes.or(file.nodes).unwrap_or(d.num_nodes());
        if nodes < 2 {
            return Err(CliError::Usage(format!("--nodes must be at least 2, got {nodes}")));
        }
        let mut spec = SyntheticSpec {
            nodes_per_block: nodes / 2,
            bias: self.bias.or(file.bias).unwrap_or(d.bias),
            p_in: self.p_in.or(file.p_in).unwrap_or(d.p_in),
            p_out: self.p_out.or(file.p_out).unwrap_or(d.p_out),
            label_flip: self.label_flip.or(file.label_flip).unwrap_or(d.label_flip),
            train_fraction: self
                .train_fraction
                .or(file.train_fraction)
                .unwrap_or(d.train_fraction),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            ..d.clone()
        };
        if let Some(m) = self.features.or(file.features) {
            // Keep the informative columns within M, in the default proportion.
            spec.num_binary_features = m;
            let informative = d.class_features + d.group_features;
            if informative > m {
                spec.class_features = m * d.class_features / informative;
                spec.group_features = m * d.group_features / informative;
            }
        }
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}
