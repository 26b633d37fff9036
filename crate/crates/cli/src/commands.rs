use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fairghdc::data::{generate_synthetic, load_dataset, write_dataset, LoadedDataset, SyntheticSpec};
use fairghdc::encode::{encode_graph, read_cache, write_cache};
use fairghdc::eval::{self, AggregateRow, SweepSpec};
use fairghdc::metrics::{format_value, REPORT_FIELDS};
use fairghdc::trainer::{self, ModelHeader};
use fairghdc::{AccumulatorHV, Error, GraphDataset, InferenceMode, SplitTag};
use serde_json::json;

use crate::config::{
    resolve_format, resolve_mode, DataArgs, DataSettings, FileConfig, Format, SynthArgs,
    TrainArgs, DEFAULT_SCHEMA,
};
use crate::manifest::Manifest;
use crate::{CliError, Log};

pub const EDGES_FILE: &str = "edges.txt";
pub const NODES_FILE: &str = "nodes.csv";
pub const ENCODED_FILE: &str = "encoded.bin";
pub const MODEL_FILE: &str = "model.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SCALING_FILE: &str = "scaling.json";

fn prepare_out(out: &Path) -> Result<&Path, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    Ok(out)
}

fn write_text(path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::Io(path, e))
}

fn load(data: &DataSettings, log: &Log) -> Result<LoadedDataset, CliError> {
    let loaded = load_dataset(&data.edges, &data.nodes, &data.schema, &data.options)?;
    for w in &loaded.report.warnings {
        log.warn(w);
    }
    log.info(format!(
        "loaded {} nodes, {} features, {} classes, {} groups",
        loaded.report.num_nodes,
        loaded.report.num_features,
        loaded.report.num_classes,
        loaded.report.num_groups
    ));
    Ok(loaded)
}

fn record_inputs(m: &mut Manifest, data: &DataSettings, loaded: &LoadedDataset) {
    m.input("dataset_edges", &data.edges);
    m.input("dataset_nodes", &data.nodes);
    m.input("schema", &data.schema_text);
    m.input("load_options", &data.options);
    m.input("dataset_hash", loaded.dataset.content_hash());
    if let Some(path) = &data.encoded {
        m.input("encoded", path);
    }
    m.ingestion = Some(serde_json::to_value(&loaded.report).expect("report serializes"));
}

fn node_hvs(
    dataset: &GraphDataset,
    dim: usize,
    seed: u64,
    cache: Option<&Path>,
) -> Result<Vec<AccumulatorHV>, CliError> {
    if let Some(path) = cache {
        return match read_cache(path, &dataset.content_hash(), dim, seed)? {
            Some(encoded) => Ok(encoded.into_node_hvs()),
            None => Err(Error::Mismatch(format!(
                "encoding cache {} was built for a different dataset, dimension or seed",
                path.display()
            ))
            .into()),
        };
    }
    Ok(encode_graph(dataset, dim, seed)?.into_node_hvs())
}

#[derive(Args, Debug)]
pub struct SynthCmd {
    #[command(flatten)]
    pub spec: SynthArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(cmd: &SynthCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let spec = cmd.spec.resolve(file)?;
    let out = prepare_out(&cmd.out)?;
    let dataset = generate_synthetic(&spec)?;
    write_dataset(&dataset, &out.join(EDGES_FILE), &out.join(NODES_FILE))?;

    let mut m = Manifest::new("synth", spec.seed, &spec);
    m.input("schema", DEFAULT_SCHEMA);
    m.input("dataset_hash", dataset.content_hash());
    m.output(out, EDGES_FILE)?;
    m.output(out, NODES_FILE)?;
    m.write(out)?;
    log.info(format!(
        "wrote {} nodes and {} edges to {}",
        dataset.num_nodes(),
        dataset.num_edges(),
        out.display()
    ));
    Ok(())
}

#[derive(Args, Debug)]
pub struct EncodeCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn encode(cmd: &EncodeCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let seed = cmd.seed.or(file.seed).unwrap_or_default();
    let dim = cmd
        .dim
        .or(file.dim)
        .unwrap_or(fairghdc::TrainConfig::default().dim);
    if dim == 0 {
        return Err(CliError::Usage("--dim must be positive".into()));
    }
    let data = cmd.data.resolve(file, seed)?;
    let out = prepare_out(&cmd.out)?;
    let loaded = load(&data, log)?;
    let encoded = encode_graph(&loaded.dataset, dim, seed)?;
    write_cache(&out.join(ENCODED_FILE), &encoded, &loaded.dataset.content_hash())?;

    let mut m = Manifest::new("encode", seed, json!({ "dim": dim, "seed": seed }));
    record_inputs(&mut m, &data, &loaded);
    m.output(out, ENCODED_FILE)?;
    m.write(out)?;
    log.info(format!("wrote {}", out.join(ENCODED_FILE).display()));
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Inference form stored in the model: `full` or `quantized`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(cmd: &TrainCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let cfg = cmd.train.resolve(file)?;
    let mode = resolve_mode(cmd.mode.as_deref(), file)?.unwrap_or(InferenceMode::Full);
    let data = cmd.data.resolve(file, cfg.seed)?;
    let out = prepare_out(&cmd.out)?;
    let loaded = load(&data, log)?;
    let dataset = &loaded.dataset;
    let hvs = node_hvs(dataset, cfg.dim, cfg.seed, data.encoded.as_deref())?;
    let (model, traces) = trainer::train::<f64>(&hvs, dataset, &cfg)?;
    let header = ModelHeader {
        dim: cfg.dim,
        num_classes: model.num_classes(),
        num_features: dataset.num_features(),
        encode_seed: cfg.seed,
        mode,
    };
    trainer::write_model(&out.join(MODEL_FILE), &model, &header)?;
    trainer::write_traces(&out.join(TRACE_FILE), &traces)?;

    let mut m = Manifest::new("train", cfg.seed, &cfg);
    m.input("mode", mode);
    m.input("config_hash", eval::config_hash(&cfg));
    record_inputs(&mut m, &data, &loaded);
    m.output(out, MODEL_FILE)?;
    m.output(out, TRACE_FILE)?;
    m.write(out)?;
    log.info(format!(
        "trained {} batches; wrote {}",
        traces.len(),
        out.display()
    ));
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// `full` or `quantized`; defaults to the form stored in the model.
    #[arg(long)]
    pub mode: Option<String>,
    /// Nodes to score: `test` or `train`.
    #[arg(long, default_value = "test")]
    pub split: SplitTag,
    /// Expected dimension; a model with another D is rejected.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Expected encoding seed; a model built with another seed is rejected.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub positive_class: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: PathBuf,
}

fn diff_line(diffs: &mut Vec<String>, field: &str, model: impl ToString, other: impl ToString) {
    let (m, o) = (model.to_string(), other.to_string());
    if m != o {
        diffs.push(format!("{field}: model={m} requested={o}"));
    }
}

pub fn evaluate(cmd: &EvalCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let (model, header) = trainer::read_model::<f64>(&cmd.model)?;
    let mode = resolve_mode(cmd.mode.as_deref(), file)?.unwrap_or(header.mode);
    let format = resolve_format(cmd.format, file);
    let positive_class = cmd
        .positive_class
        .or(file.positive_class)
        .unwrap_or(fairghdc::metrics::DEFAULT_POSITIVE_CLASS);
    let data = cmd.data.resolve(file, header.encode_seed)?;
    let out = prepare_out(&cmd.out)?;
    let loaded = load(&data, log)?;
    let dataset = &loaded.dataset;

    let mut diffs = Vec::new();
    if let Some(dim) = cmd.dim.or(file.dim) {
        diff_line(&mut diffs, "dim", header.dim, dim);
    }
    if let Some(seed) = cmd.seed.or(file.seed) {
        diff_line(&mut diffs, "seed", header.encode_seed, seed);
    }
    diff_line(&mut diffs, "num_features", header.num_features, dataset.num_features());
    diff_line(&mut diffs, "num_classes", header.num_classes, dataset.num_classes());
    if !diffs.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} differs from the dataset:\n  {}",
            cmd.model.display(),
            diffs.join("\n  ")
        ))
        .into());
    }

    let hvs = node_hvs(dataset, header.dim, header.encode_seed, data.encoded.as_deref())?;
    let report = eval::evaluate(&model, &hvs, dataset, cmd.split, mode, positive_class)?;
    let text = match format {
        Format::Kv => report.to_kv(),
        Format::Table => report.to_table(),
    };
    print!("{text}");
    write_text(out.join(REPORT_FILE), &text)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_text(out.join(REPORT_JSON_FILE), &json)?;

    let mut m = Manifest::new(
        "eval",
        header.encode_seed,
        json!({
            "mode": mode,
            "split": cmd.split,
            "positive_class": positive_class,
            "format": format,
        }),
    );
    m.input("model", &cmd.model);
    m.input("model_header", header);
    m.input("model_hash", crate::manifest::sha256_file(&cmd.model)?);
    record_inputs(&mut m, &data, &loaded);
    m.output(out, REPORT_FILE)?;
    m.output(out, REPORT_JSON_FILE)?;
    m.write(out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated alpha grid; defaults to the single configured alpha.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Training seeds; encoding and split use the base `--seed`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: PathBuf,
}

fn metric_cell(row: &AggregateRow, name: &str) -> (String, String) {
    match row.metrics.get(name) {
        Some(s) => (format!("{}", s.mean), format_value(s.std)),
        None => ("NA".into(), "NA".into()),
    }
}

fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("alpha,beta,runs,failed");
    for f in REPORT_FIELDS {
        out.push_str(&format!(",{f}_mean,{f}_std"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}", r.alpha, r.beta, r.runs, r.failed));
        for f in REPORT_FIELDS {
            let (mean, std) = metric_cell(r, f);
            out.push_str(&format!(",{mean},{std}"));
        }
        out.push('\n');
    }
    out
}

fn aggregate_kv(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let mut line = format!(
            "alpha={} beta={} runs={} failed={}",
            r.alpha, r.beta, r.runs, r.failed
        );
        for f in REPORT_FIELDS {
            let (mean, std) = metric_cell(r, f);
            line.push_str(&format!(" {f}={mean} {f}_std={std}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn aggregate_table(rows: &[AggregateRow]) -> String {
    let mut header = vec!["alpha".to_string(), "beta".into(), "runs".into(), "failed".into()];
    header.extend(REPORT_FIELDS.iter().map(|f| f.to_string()));
    let mut table = vec![header];
    for r in rows {
        let mut cells = vec![
            r.alpha.to_string(),
            r.beta.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
        ];
        for f in REPORT_FIELDS {
            cells.push(match r.metrics.get(f) {
                Some(s) => match s.std {
                    Some(sd) => format!("{:.4}±{:.4}", s.mean, sd),
                    None => format!("{:.4}", s.mean),
                },
                None => "NA".into(),
            });
        }
        table.push(cells);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    out
}

pub fn sweep(cmd: &SweepCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let base = cmd.train.resolve(file)?;
    let mode = resolve_mode(cmd.mode.as_deref(), file)?.unwrap_or(InferenceMode::Full);
    let format = resolve_format(cmd.format, file);
    let spec = SweepSpec {
        alphas: cmd
            .alphas
            .clone()
            .or_else(|| file.alphas.clone())
            .unwrap_or_else(|| vec![base.alpha]),
        betas: cmd
            .betas
            .clone()
            .or_else(|| file.betas.clone())
            .unwrap_or_else(|| vec![base.beta]),
        seeds: cmd
            .seeds
            .clone()
            .or_else(|| file.seeds.clone())
            .unwrap_or_else(|| vec![base.seed]),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = cmd.data.resolve(file, base.seed)?;
    let out = prepare_out(&cmd.out)?;
    let loaded = load(&data, log)?;
    let dataset = &loaded.dataset;
    let hvs = node_hvs(dataset, base.dim, base.seed, data.encoded.as_deref())?;

    let results_path = out.join(RESULTS_FILE);
    let before = eval::read_results(&results_path)?.len();
    if before > 0 {
        log.info(format!("resuming: {before} runs already in {}", results_path.display()));
    }
    let results = eval::sweep::<f64>(&hvs, dataset, &base, &spec, mode, Some(&results_path))?;
    for r in results.iter().filter(|r| r.error.is_some()) {
        log.warn(format!(
            "run alpha={} beta={} seed={} failed: {}",
            r.alpha,
            r.beta,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        ));
    }
    let rows = eval::aggregate(&results);
    write_text(out.join(TRADEOFF_FILE), &eval::tradeoff_table(&results))?;
    write_text(out.join(AGGREGATE_FILE), &aggregate_csv(&rows))?;
    print!(
        "{}",
        match format {
            Format::Kv => aggregate_kv(&rows),
            Format::Table => aggregate_table(&rows),
        }
    );

    let mut m = Manifest::new("sweep", base.seed, &base);
    m.input("grid", &spec);
    m.input("mode", mode);
    record_inputs(&mut m, &data, &loaded);
    m.output(out, RESULTS_FILE)?;
    m.output(out, TRADEOFF_FILE)?;
    m.output(out, AGGREGATE_FILE)?;
    m.write(out)?;
    log.info(format!("{} runs; wrote {}", results.len(), out.display()));
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchCmd {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated synthetic graph sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bench(cmd: &BenchCmd, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let cfg = cmd.train.resolve(file)?;
    let sizes = cmd
        .sizes
        .clone()
        .or_else(|| file.sizes.clone())
        .unwrap_or_else(|| vec![1000, 2000, 4000]);
    if sizes.is_empty() || sizes.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("--sizes needs at least one size of 2 or more".into()));
    }
    let out = prepare_out(&cmd.out)?;
    let base = SyntheticSpec {
        seed: cfg.seed,
        ..SyntheticSpec::default()
    };
    log.info(format!("timing sizes {sizes:?} at D={}", cfg.dim));
    let report = eval::timing_benchmark::<f64>(&sizes, &base, &cfg)?;
    print!("{}", report.to_table());
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_text(out.join(SCALING_FILE), &json)?;

    let mut m = Manifest::new("bench", cfg.seed, &cfg);
    m.input("sizes", &sizes);
    m.input("synthetic", &base);
    m.output(out, SCALING_FILE)?;
    m.write(out)?;
    Ok(())
}
