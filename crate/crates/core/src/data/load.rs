use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::binarize::{binarize, ColumnRule, FittedBinarizer};
use super::{build_neighbors, stratified_split, EdgeReport, GraphDataset, SplitTag};
use crate::error::{Error, Result};

/// Column mapping for a node table.
///
/// Parsed from `label=COL,sensitive=COL[,id=COL][,split=COL][,features=A;B][,drop=A;B]`.
/// Without `features`, every column not otherwise mapped or dropped is a feature.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub label: String,
    pub sensitive: String,
    pub id: Option<String>,
    pub split: Option<String>,
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub drop: Vec<String>,
}

impl Schema {
    pub fn new(label: impl Into<String>, sensitive: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            sensitive: sensitive.into(),
            ..Self::default()
        }
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut label = None;
        let mut sensitive = None;
        let mut schema = Schema::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("schema entry `{part}` is not KEY=COL")))?;
            let value = value.trim().to_string();
            let list = || -> Vec<String> {
                value
                    .split(';')
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect()
            };
            match key.trim() {
                "label" => label = Some(value.clone()),
                "sensitive" => sensitive = Some(value.clone()),
                "id" => schema.id = Some(value.clone()),
                "split" => schema.split = Some(value.clone()),
                "features" => schema.features = Some(list()),
                "drop" => schema.drop = list(),
                other => return Err(Error::Schema(format!("unknown schema key `{other}`"))),
            }
        }
        schema.label = label.ok_or_else(|| Error::Schema("schema lacks label=COL".into()))?;
        schema.sensitive =
            sensitive.ok_or_else(|| Error::Schema("schema lacks sensitive=COL".into()))?;
        Ok(schema)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub directed: bool,
    /// Used only when the schema maps no split column.
    pub train_fraction: f64,
    pub seed: u64,
    /// Quantile bins for numeric columns without an explicit rule.
    pub default_bins: usize,
    pub rules: BTreeMap<String, ColumnRule>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            directed: false,
            train_fraction: 0.5,
            seed: 0,
            default_bins: 4,
            rules: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub class: usize,
    pub group: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub num_nodes: usize,
    pub edges: EdgeReport,
    pub num_features: usize,
    pub num_classes: usize,
    pub num_groups: usize,
    pub unlabeled_nodes: usize,
    pub cells: Vec<CellCount>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: GraphDataset,
    pub report: IngestionReport,
    pub binarizer: FittedBinarizer,
}

fn sniff_delimiter(header: &str) -> u8 {
    b",\t;"
        .iter()
        .copied()
        .find(|d| header.as_bytes().contains(d))
        .unwrap_or(b',')
}

fn parse_integral(cell: &str, row: usize, column: &str) -> Result<i64> {
    let err = |message: String| Error::Parse {
        row,
        column: column.to_string(),
        message,
    };
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| err(format!("`{cell}` is not a number")))?;
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(err(format!("`{cell}` is not an integer")));
    }
    Ok(v as i64)
}

/// Reads `src dst` pairs, whitespace- or comma-delimited. Blank lines and
/// lines starting with `#` are skipped. Row numbers in errors are 1-based lines.
pub fn read_edge_list(path: &Path) -> Result<Vec<(i64, i64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|c| !c.is_empty());
        let (Some(src), Some(dst)) = (cells.next(), cells.next()) else {
            return Err(Error::Parse {
                row: i + 1,
                column: "edge".into(),
                message: format!("expected two endpoints, got `{line}`"),
            });
        };
        edges.push((
            parse_integral(src, i + 1, "src")?,
            parse_integral(dst, i + 1, "dst")?,
        ));
    }
    Ok(edges)
}

struct NodeTable {
    labels: Vec<Option<usize>>,
    sensitive: Vec<usize>,
    ids: Option<Vec<i64>>,
    split: Option<Vec<SplitTag>>,
    feature_names: Vec<String>,
    raw: Vec<Vec<f64>>,
}

fn read_node_table(path: &Path, schema: &Schema) -> Result<NodeTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header_line = text.lines().next().unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(header_line))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn {
                column: name.to_string(),
                path: path.to_path_buf(),
                available: headers.join(", "),
            })
    };
    let label_col = find(&schema.label)?;
    let sensitive_col = find(&schema.sensitive)?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let split_col = schema.split.as_deref().map(find).transpose()?;
    for d in &schema.drop {
        find(d)?;
    }
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| {
                c != label_col
                    && c != sensitive_col
                    && Some(c) != id_col
                    && Some(c) != split_col
                    && !schema.drop.contains(&headers[c])
            })
            .collect(),
    };

    let mut table = NodeTable {
        labels: Vec::new(),
        sensitive: Vec::new(),
        ids: id_col.map(|_| Vec::new()),
        split: split_col.map(|_| Vec::new()),
        feature_names: feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        raw: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| record.get(c).unwrap_or("");
        let label = parse_integral(cell(label_col), row, &schema.label)?;
        table
            .labels
            .push(if label < 0 { None } else { Some(label as usize) });
        let group = parse_integral(cell(sensitive_col), row, &schema.sensitive)?;
        if group < 0 {
            return Err(Error::Parse {
                row,
                column: schema.sensitive.clone(),
                message: format!("sensitive group must be non-negative, got {group}"),
            });
        }
        table.sensitive.push(group as usize);
        if let (Some(ids), Some(c)) = (table.ids.as_mut(), id_col) {
            ids.push(parse_integral(cell(c), row, &headers[c])?);
        }
        if let (Some(split), Some(c)) = (table.split.as_mut(), split_col) {
            let tag: SplitTag = cell(c).parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                message: format!("unknown split tag `{}`", cell(c)),
            })?;
            split.push(tag);
        }
        let values = feature_cols
            .iter()
            .map(|&c| {
                cell(c).parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("`{}` is not numeric", cell(c)),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        table.raw.push(values);
    }
    Ok(table)
}

/// Loads an edge list and a node table into a validated [`GraphDataset`].
///
/// Edge endpoints index node-table rows, or values of the `id` column when
/// the schema maps one. The split comes from the `split` column when mapped,
/// otherwise from a seeded stratified split. Binarization rules are fitted
/// on training rows only.
pub fn load_dataset(
    edge_path: &Path,
    node_path: &Path,
    schema: &Schema,
    options: &LoadOptions,
) -> Result<LoadedDataset> {
    let table = read_node_table(node_path, schema)?;
    let n = table.labels.len();

    let index_of: Option<HashMap<i64, usize>> = match &table.ids {
        Some(ids) => {
            let mut map = HashMap::with_capacity(n);
            for (row, &id) in ids.iter().enumerate() {
                if map.insert(id, row).is_some() {
                    return Err(Error::Schema(format!("duplicate node id {id}")));
                }
            }
            Some(map)
        }
        None => None,
    };
    let resolve = |raw: i64| -> Result<usize> {
        let idx = match &index_of {
            Some(map) => map.get(&raw).copied(),
            None => usize::try_from(raw).ok().filter(|&i| i < n),
        };
        idx.ok_or_else(|| {
            Error::GraphIntegrity(format!("edge endpoint {raw} does not name a node (have {n})"))
        })
    };
    let edges = read_edge_list(edge_path)?
        .into_iter()
        .map(|(s, d)| Ok((resolve(s)?, resolve(d)?)))
        .collect::<Result<Vec<_>>>()?;
    let (neighbors, edge_report) = build_neighbors(n, &edges, options.directed)?;

    let split = match table.split {
        Some(tags) => {
            for (row, (label, tag)) in table.labels.iter().zip(&tags).enumerate() {
                if label.is_none() != (*tag == SplitTag::Unlabeled) {
                    return Err(Error::Schema(format!(
                        "node {row}: split tag `{tag}` does not match label presence"
                    )));
                }
            }
            tags
        }
        None => stratified_split(
            &table.labels,
            &table.sensitive,
            options.train_fraction,
            options.seed,
        )?,
    };

    let rules: Vec<ColumnRule> = table
        .feature_names
        .iter()
        .map(|name| {
            options
                .rules
                .get(name)
                .cloned()
                .unwrap_or(ColumnRule::Auto {
                    bins: options.default_bins,
                })
        })
        .collect();
    let train_rows: Vec<usize> = (0..n).filter(|&i| split[i] == SplitTag::Train).collect();
    let binarized = binarize(&table.raw, &table.feature_names, &rules, &train_rows)?;

    let dataset = GraphDataset::new(
        neighbors,
        binarized.features,
        table.labels,
        table.sensitive,
        split,
    )?;
    let report = IngestionReport {
        num_nodes: n,
        edges: edge_report,
        num_features: dataset.num_features(),
        num_classes: dataset.num_classes(),
        num_groups: dataset.num_groups(),
        unlabeled_nodes: dataset.labels().iter().filter(|l| l.is_none()).count(),
        cells: dataset
            .cell_counts()
            .into_iter()
            .map(|((class, group), count)| CellCount {
                class,
                group,
                count,
            })
            .collect(),
        warnings: binarized.warnings,
    };
    Ok(LoadedDataset {
        dataset,
        report,
        binarizer: binarized.fitted,
    })
}

/// Writes the dataset as an edge list plus a node table with columns
/// `id,label,sensitive,split,f0..`. Reading both back with the schema
/// `label=label,sensitive=sensitive,id=id,split=split` reproduces it exactly.
pub fn write_dataset(dataset: &GraphDataset, edge_path: &Path, node_path: &Path) -> Result<()> {
    let file = fs::File::create(edge_path).map_err(|e| Error::io(edge_path, e))?;
    let mut w = BufWriter::new(file);
    for (src, list) in dataset.neighbor_lists().iter().enumerate() {
        for &dst in list.iter().filter(|&&d| d > src) {
            writeln!(w, "{src} {dst}").map_err(|e| Error::io(edge_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(edge_path, e))?;

    let file = fs::File::create(node_path).map_err(|e| Error::io(node_path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("id,label,sensitive,split");
    for j in 0..dataset.num_features() {
        header.push_str(&format!(",f{j}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(node_path, e))?;
    for node in 0..dataset.num_nodes() {
        let mut line = format!(
            "{node},{},{},{}",
            dataset.label(node).map_or(-1, |l| l as i64),
            dataset.sensitive()[node],
            dataset.split()[node]
        );
        for &bit in dataset.features(node) {
            line.push_str(if bit { ",1" } else { ",0" });
        }
        writeln!(w, "{line}").map_err(|e| Error::io(node_path, e))?;
    }
    w.flush().map_err(|e| Error::io(node_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn schema_parsing() {
        let s: Schema = "label=y, sensitive=gender,drop=a;b".parse().unwrap();
        assert_eq!(s.label, "y");
        assert_eq!(s.sensitive, "gender");
        assert_eq!(s.drop, vec!["a", "b"]);
        assert!("label=y".parse::<Schema>().is_err());
        assert!("label=y,sensitive=s,bogus=1".parse::<Schema>().is_err());
    }

    #[test]
    fn toy_load() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n1 2\n");
        let n = write(
            dir.path(),
            "n.csv",
            "y,s,x\n0,0,1.0\n1,1,2.0\n1,0,3.0\n0,1,4.0\n",
        );
        let loaded = load_dataset(&e, &n, &Schema::new("y", "s"), &LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.degrees(), vec![1, 2, 1, 0]);
        assert_eq!(loaded.report.edges.duplicates_dropped, 0);
    }

    #[test]
    fn duplicate_edge_counted() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n0 1\n");
        let n = write(dir.path(), "n.csv", "y,s\n0,0\n1,1\n1,0\n0,1\n");
        let loaded = load_dataset(&e, &n, &Schema::new("y", "s"), &LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.neighbors(0), &[1]);
        assert_eq!(loaded.report.edges.duplicates_dropped, 1);
    }

    #[test]
    fn dangling_edge() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 9\n");
        let n = write(dir.path(), "n.csv", "y,s\n0,0\n1,1\n0,1\n");
        let err = load_dataset(&e, &n, &Schema::new("y", "s"), &LoadOptions::default());
        assert!(matches!(err, Err(Error::GraphIntegrity(_))));
    }

    #[test]
    fn missing_column_and_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n");
        let n = write(dir.path(), "n.csv", "y,s,x\n0,0,1\n1,1,oops\n");
        let err = load_dataset(&e, &n, &Schema::new("label", "s"), &LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnknownColumn { ref column, .. } if column == "label"));
        assert!(err.is_usage_error());
        let err =
            load_dataset(&e, &n, &Schema::new("y", "s"), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn float_formatted_edges_and_tabs() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "# header\n0.0\t1.0\n1,2\n");
        let n = write(dir.path(), "n.tsv", "y\ts\n0\t0\n1\t1\n0\t1\n1\t0\n");
        let loaded = load_dataset(&e, &n, &Schema::new("y", "s"), &LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.degrees(), vec![1, 2, 1, 0]);
    }

    #[test]
    fn roundtrip_is_identical() {
        let spec = super::super::SyntheticSpec {
            nodes_per_block: 40,
            p_in: 0.1,
            seed: 8,
            ..Default::default()
        };
        let original = super::super::generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (e, n) = (dir.path().join("e.txt"), dir.path().join("n.csv"));
        write_dataset(&original, &e, &n).unwrap();
        let schema: Schema = "label=label,sensitive=sensitive,id=id,split=split"
            .parse()
            .unwrap();
        let loaded = load_dataset(&e, &n, &schema, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset, original);
        write_dataset(&loaded.dataset, &e, &n).unwrap();
        let again = load_dataset(&e, &n, &schema, &LoadOptions::default()).unwrap();
        assert_eq!(again.dataset, original);
    }
}
