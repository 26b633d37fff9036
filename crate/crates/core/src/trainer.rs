//! Class-hypervector training with a per-batch fairness shrinkage factor.
//!
//! Class accumulators start as exact bundles of training node hypervectors
//! and are then refined for a fixed number of epochs over shuffled
//! mini-batches. Every batch predicts against the model as it stood at the
//! start of the batch, derives one factor `F = alpha * B + beta` from the
//! demographic parity gap `B` of those predictions, and applies:
//!
//! * correct: `C[y] += eta * (1 - F) * E`
//! * wrong:   `C[y] += eta * (1 - F) * E` and `C[y_hat] -= eta * E`
//!
//! Per batch the added and subtracted node vectors are summed exactly in
//! `i64` before touching the real-valued accumulators, so the result does
//! not depend on node order within a batch.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GraphDataset, SplitTag};
use crate::error::{Error, Result};
use crate::hdc::{sign_quantize_real, AccumulatorHV, Hypervector};
use crate::metrics::{dp_gap_binary, dp_gap_multi, PredictionSet, DEFAULT_POSITIVE_CLASS};
use crate::scalar::Scalar;
use crate::seed::{self, stream};

/// Upper clamp for the fairness factor is `1 - FACTOR_EPSILON`.
pub const FACTOR_EPSILON: f64 = 1e-6;

const MODEL_MAGIC: &[u8; 8] = b"FGHDCMDL";
const MODEL_VERSION: u32 = 1;
const MODEL_HEADER_LEN: usize = 47;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapForm {
    /// `|P(y_hat=1|S=0) - P(y_hat=1|S=1)|`.
    Binary,
    /// Group-averaged maximum class deviation.
    Multi,
}

impl FromStr for GapForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(GapForm::Binary),
            "multi" => Ok(GapForm::Multi),
            other => Err(Error::Spec(format!("unknown gap form `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    /// Cosine similarity against real-valued accumulators.
    #[default]
    Full,
    /// Cosine similarity against sign-quantized class hypervectors.
    Quantized,
}

impl InferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::Full => "full",
            InferenceMode::Quantized => "quantized",
        }
    }
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(InferenceMode::Full),
            "quantized" => Ok(InferenceMode::Quantized),
            other => Err(Error::Spec(format!("unknown inference mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gap_form: GapForm,
    pub clamp_factor: bool,
    pub positive_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 4096,
            eta: 1.0,
            alpha: 0.0,
            beta: 0.0,
            epochs: 20,
            batch_size: 256,
            seed: 0,
            gap_form: GapForm::Multi,
            clamp_factor: true,
            positive_class: DEFAULT_POSITIVE_CLASS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension {
                expected: 1,
                found: 0,
            });
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Spec(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Spec(format!(
                "alpha and beta must be non-negative, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One mini-batch worth of training diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub epoch: usize,
    pub batch: usize,
    pub size: usize,
    pub bias_b: f64,
    pub factor_f: f64,
    pub correct: usize,
    pub incorrect: usize,
}

/// Class hypervectors: real-valued accumulators plus, once finalized,
/// their sign-quantized forms.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel<T: Scalar> {
    dim: usize,
    accumulators: Vec<Vec<T>>,
    quantized: Option<Vec<Hypervector>>,
}

impl<T: Scalar> ClassModel<T> {
    pub fn from_accumulators(accumulators: Vec<Vec<T>>) -> Result<Self> {
        let dim = accumulators.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Spec("class model needs at least one non-empty class".into()));
        }
        for acc in &accumulators {
            if acc.len() != dim {
                return Err(Error::InvalidDimension {
                    expected: dim,
                    found: acc.len(),
                });
            }
        }
        Ok(Self {
            dim,
            accumulators,
            quantized: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.accumulators.len()
    }

    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.accumulators
    }

    pub fn quantized(&self) -> Option<&[Hypervector]> {
        self.quantized.as_deref()
    }

    pub fn is_finalized(&self) -> bool {
        self.quantized.is_some()
    }

    /// Sign-quantizes every accumulator (`0 -> +1`).
    pub fn finalize(&mut self) {
        self.quantized = Some(
            self.accumulators
                .iter()
                .map(|a| sign_quantize_real(a))
                .collect(),
        );
    }

    pub fn finalized(mut self) -> Self {
        self.finalize();
        self
    }

    /// Precomputes per-class norms for repeated prediction.
    pub fn scorer(&self, mode: InferenceMode) -> Result<Scorer<'_, T>> {
        let norms = match mode {
            InferenceMode::Full => self
                .accumulators
                .iter()
                .map(|a| a.iter().fold(T::zero(), |s, &x| s + x * x).sqrt())
                .collect::<Vec<T>>(),
            InferenceMode::Quantized => {
                if self.quantized.is_none() {
                    return Err(Error::Spec(
                        "quantized inference requires a finalized model".into(),
                    ));
                }
                vec![T::from_usize(self.dim).unwrap().sqrt(); self.num_classes()]
            }
        };
        if norms.iter().any(|&n| n == T::zero()) {
            return Err(Error::DegenerateSimilarity("class hypervector"));
        }
        Ok(Scorer {
            model: self,
            mode,
            norms,
        })
    }

    /// Most similar class by cosine similarity; ties go to the lowest id.
    pub fn predict(&self, node: &AccumulatorHV, mode: InferenceMode) -> Result<usize> {
        self.scorer(mode)?.predict(node)
    }
}

/// A read-only view of a model with cached class norms.
pub struct Scorer<'a, T: Scalar> {
    model: &'a ClassModel<T>,
    mode: InferenceMode,
    norms: Vec<T>,
}

impl<T: Scalar> Scorer<'_, T> {
    /// Cosine similarity of `node` to every class.
    pub fn similarities(&self, node: &AccumulatorHV) -> Result<Vec<T>> {
        if node.dim() != self.model.dim {
            return Err(Error::InvalidDimension {
                expected: self.model.dim,
                found: node.dim(),
            });
        }
        let node_norm = node
            .lanes()
            .iter()
            .fold(T::zero(), |s, &v| {
                let x = T::from_lane(v);
                s + x * x
            })
            .sqrt();
        if node_norm == T::zero() {
            return Err(Error::DegenerateSimilarity("node hypervector"));
        }
        (0..self.model.num_classes())
            .map(|c| {
                let dot = match self.mode {
                    InferenceMode::Full => self.model.accumulators[c]
                        .iter()
                        .zip(node.lanes())
                        .fold(T::zero(), |s, (&a, &e)| s + a * T::from_lane(e)),
                    InferenceMode::Quantized => {
                        let q = &self.model.quantized.as_ref().expect("checked in scorer")[c];
                        T::from_lane(q.dot_lanes(node.lanes())?)
                    }
                };
                Ok(dot / (self.norms[c] * node_norm))
            })
            .collect()
    }

    pub fn predict(&self, node: &AccumulatorHV) -> Result<usize> {
        let sims = self.similarities(node)?;
        let mut best = 0;
        for (c, &s) in sims.iter().enumerate().skip(1) {
            if s > sims[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

fn train_nodes(dataset: &GraphDataset) -> Vec<usize> {
    dataset.nodes_with(SplitTag::Train)
}

fn label_of(dataset: &GraphDataset, node: usize) -> Result<usize> {
    dataset
        .label(node)
        .ok_or_else(|| Error::Schema(format!("training node {node} has no label")))
}

/// Bundles training node hypervectors per class, exactly, then converts.
pub fn init_class_hvs<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
) -> Result<ClassModel<T>> {
    if node_hvs.len() != dataset.num_nodes() {
        return Err(Error::Mismatch(format!(
            "{} node hypervectors for {} nodes",
            node_hvs.len(),
            dataset.num_nodes()
        )));
    }
    let dim = node_hvs.first().map_or(0, AccumulatorHV::dim);
    let num_classes = dataset.num_classes();
    let mut sums = vec![vec![0i64; dim]; num_classes];
    let mut seen = vec![false; num_classes];
    for node in train_nodes(dataset) {
        let class = label_of(dataset, node)?;
        seen[class] = true;
        let hv = &node_hvs[node];
        if hv.dim() != dim {
            return Err(Error::InvalidDimension {
                expected: dim,
                found: hv.dim(),
            });
        }
        for (a, b) in sums[class].iter_mut().zip(hv.lanes()) {
            *a += b;
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::MissingClass(c));
    }
    ClassModel::from_accumulators(
        sums.into_iter()
            .map(|s| s.into_iter().map(T::from_lane).collect())
            .collect(),
    )
}

/// Bias estimate and shrinkage factor of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchFactor {
    pub bias_b: f64,
    pub factor_f: f64,
}

/// `F = alpha * B + beta`, clamped to `[0, 1 - FACTOR_EPSILON]` when enabled.
/// A gap that is undefined for the batch contributes `B = 0`.
pub fn batch_fairness_factor(preds: &PredictionSet, cfg: &TrainConfig) -> BatchFactor {
    let gap = match cfg.gap_form {
        GapForm::Binary => dp_gap_binary(preds),
        GapForm::Multi => dp_gap_multi(preds),
    };
    let bias_b = gap.unwrap_or(0.0);
    let raw = cfg.alpha * bias_b + cfg.beta;
    let factor_f = if cfg.clamp_factor {
        raw.clamp(0.0, 1.0 - FACTOR_EPSILON)
    } else {
        raw
    };
    BatchFactor { bias_b, factor_f }
}

/// Applies one batch of updates given snapshot predictions.
///
/// `scale` multiplies ground-truth additions (`eta * (1 - F)`); `eta`
/// multiplies penalty subtractions.
pub fn apply_updates<T: Scalar>(
    model: &mut ClassModel<T>,
    batch: &[usize],
    predicted: &[usize],
    actual: &[usize],
    node_hvs: &[AccumulatorHV],
    scale: T,
    eta: T,
) -> Result<()> {
    let c = model.num_classes();
    let dim = model.dim;
    let mut added = vec![vec![0i64; dim]; c];
    let mut removed = vec![vec![0i64; dim]; c];
    let mut touched_add = vec![false; c];
    let mut touched_sub = vec![false; c];
    for ((&node, &p), &y) in batch.iter().zip(predicted).zip(actual) {
        if p >= c || y >= c {
            return Err(Error::Mismatch(format!(
                "class id {} outside the model's {c} classes",
                p.max(y)
            )));
        }
        let hv = node_hvs[node].lanes();
        if hv.len() != dim {
            return Err(Error::InvalidDimension {
                expected: dim,
                found: hv.len(),
            });
        }
        touched_add[y] = true;
        for (a, b) in added[y].iter_mut().zip(hv) {
            *a += b;
        }
        if p != y {
            touched_sub[p] = true;
            for (a, b) in removed[p].iter_mut().zip(hv) {
                *a += b;
            }
        }
    }
    for class in 0..c {
        let acc = &mut model.accumulators[class];
        if touched_add[class] {
            for (x, &d) in acc.iter_mut().zip(&added[class]) {
                *x = *x + scale * T::from_lane(d);
            }
        }
        if touched_sub[class] {
            for (x, &d) in acc.iter_mut().zip(&removed[class]) {
                *x = *x - eta * T::from_lane(d);
            }
        }
    }
    model.quantized = None;
    Ok(())
}

fn snapshot_predict<T: Scalar>(
    model: &ClassModel<T>,
    batch: &[usize],
    node_hvs: &[AccumulatorHV],
) -> Result<Vec<usize>> {
    let scorer = model.scorer(InferenceMode::Full)?;
    batch
        .par_iter()
        .map(|&n| scorer.predict(&node_hvs[n]))
        .collect()
}

/// Training order for `epoch`: train nodes shuffled by a per-epoch stream.
pub fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    order.shuffle(&mut seed::stream_rng(seed, stream::SHUFFLE + epoch as u64));
    order
}

fn run<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    cfg: &TrainConfig,
    fair: bool,
) -> Result<(ClassModel<T>, Vec<BatchTrace>)> {
    cfg.validate()?;
    let mut model = init_class_hvs::<T>(node_hvs, dataset)?;
    if model.dim != cfg.dim {
        return Err(Error::InvalidDimension {
            expected: cfg.dim,
            found: model.dim,
        });
    }
    let train = train_nodes(dataset);
    let eta = T::from_f64(cfg.eta).expect("finite eta");
    let mut traces = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = epoch_order(&train, cfg.seed, epoch);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let predicted = snapshot_predict(&model, batch, node_hvs)?;
            let actual = batch
                .iter()
                .map(|&n| label_of(dataset, n))
                .collect::<Result<Vec<_>>>()?;
            let correct = predicted.iter().zip(&actual).filter(|(p, a)| p == a).count();
            let (factor, scale) = if fair {
                let sensitive = batch.iter().map(|&n| dataset.sensitive()[n]).collect();
                let preds = PredictionSet::new(predicted.clone(), actual.clone(), sensitive)?
                    .with_positive_class(cfg.positive_class);
                let f = batch_fairness_factor(&preds, cfg);
                let scale = eta * (T::one() - T::from_f64(f.factor_f).expect("finite factor"));
                (f, scale)
            } else {
                (
                    BatchFactor {
                        bias_b: 0.0,
                        factor_f: 0.0,
                    },
                    eta,
                )
            };
            apply_updates(&mut model, batch, &predicted, &actual, node_hvs, scale, eta)?;
            traces.push(BatchTrace {
                epoch,
                batch: b,
                size: batch.len(),
                bias_b: factor.bias_b,
                factor_f: factor.factor_f,
                correct,
                incorrect: batch.len() - correct,
            });
        }
    }
    model.finalize();
    Ok((model, traces))
}

/// Fairness-aware training; returns the finalized model and per-batch traces.
pub fn train<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    cfg: &TrainConfig,
) -> Result<(ClassModel<T>, Vec<BatchTrace>)> {
    run(node_hvs, dataset, cfg, true)
}

/// Plain graph-HDC training: the same loop with no fairness factor.
/// `alpha` and `beta` in `cfg` are ignored.
pub fn train_vanilla<T: Scalar>(
    node_hvs: &[AccumulatorHV],
    dataset: &GraphDataset,
    cfg: &TrainConfig,
) -> Result<(ClassModel<T>, Vec<BatchTrace>)> {
    run(node_hvs, dataset, cfg, false)
}

/// Metadata stored alongside a model so it can be matched to a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub dim: usize,
    pub num_classes: usize,
    pub num_features: usize,
    pub encode_seed: u64,
    pub mode: InferenceMode,
}

/// Model file layout (little-endian):
/// magic `FGHDCMDL`, version u32, D u64, C u64, M u64, encode seed u64,
/// mode u8, scalar width u8, quantized flag u8; then C x D scalars; then, if
/// quantized, C x ceil(D/64) packed u64 words (bit 1 = +1).
pub fn write_model<T: Scalar>(
    path: &Path,
    model: &ClassModel<T>,
    header: &ModelHeader,
) -> Result<()> {
    if header.dim != model.dim || header.num_classes != model.num_classes() {
        return Err(Error::Mismatch("model header disagrees with model".into()));
    }
    let mut out = Vec::with_capacity(MODEL_HEADER_LEN + model.num_classes() * model.dim * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [
        header.dim as u64,
        header.num_classes as u64,
        header.num_features as u64,
        header.encode_seed,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(match header.mode {
        InferenceMode::Full => 0,
        InferenceMode::Quantized => 1,
    });
    out.push(T::BYTES);
    out.push(u8::from(model.quantized.is_some()));
    for acc in &model.accumulators {
        for &x in acc {
            x.write_le(&mut out);
        }
    }
    if let Some(q) = &model.quantized {
        for hv in q {
            for w in hv.words() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&out).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model<T: Scalar>(path: &Path) -> Result<(ClassModel<T>, ModelHeader)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < MODEL_HEADER_LEN || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::format(path, "not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (dim, num_classes, num_features, encode_seed) = (
        u64_at(12) as usize,
        u64_at(20) as usize,
        u64_at(28) as usize,
        u64_at(36),
    );
    let mode = match bytes[44] {
        0 => InferenceMode::Full,
        1 => InferenceMode::Quantized,
        m => return Err(Error::format(path, format!("unknown mode byte {m}"))),
    };
    if bytes[45] != T::BYTES {
        return Err(Error::Mismatch(format!(
            "model stores {}-byte scalars, reader expects {}",
            bytes[45],
            T::BYTES
        )));
    }
    let has_quantized = bytes[46] == 1;
    let width = T::BYTES as usize;
    let words = dim.div_ceil(64);
    let expected = MODEL_HEADER_LEN
        + num_classes * dim * width
        + if has_quantized { num_classes * words * 8 } else { 0 };
    if bytes.len() != expected || dim == 0 {
        return Err(Error::format(path, "payload length does not match header"));
    }
    let mut offset = MODEL_HEADER_LEN;
    let mut accumulators = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let lanes = bytes[offset..offset + dim * width]
            .chunks_exact(width)
            .map(T::read_le)
            .collect();
        offset += dim * width;
        accumulators.push(lanes);
    }
    let mut model = ClassModel::from_accumulators(accumulators)?;
    if has_quantized {
        let mut q = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let ws = bytes[offset..offset + words * 8]
                .chunks_exact(8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            offset += words * 8;
            q.push(Hypervector::from_words(dim, ws)?);
        }
        model.quantized = Some(q);
    }
    Ok((
        model,
        ModelHeader {
            dim,
            num_classes,
            num_features,
            encode_seed,
            mode,
        },
    ))
}

pub const TRACE_HEADER: &str = "epoch,batch,size,bias_b,factor_f,correct,incorrect";

/// Delimited table of batch traces.
pub fn write_traces(path: &Path, traces: &[BatchTrace]) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.epoch, t.batch, t.size, t.bias_b, t.factor_f, t.correct, t.incorrect
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
