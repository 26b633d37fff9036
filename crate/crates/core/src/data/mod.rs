//! Graph datasets: validated in-memory form, ingestion, binarization,
//! splitting, and the synthetic biased-graph generator.

mod binarize;
mod load;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use binarize::{binarize, Binarized, ColumnRule, FittedBinarizer, FittedColumn};
pub use load::{
    load_dataset, read_edge_list, write_dataset, IngestionReport, LoadOptions, LoadedDataset,
    Schema,
};
pub use split::stratified_split;
pub use synth::{generate_synthetic, SyntheticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
    /// Node has no label; it takes part in encoding only.
    Unlabeled,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
            SplitTag::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SplitTag::Train),
            "test" => Ok(SplitTag::Test),
            "unlabeled" | "none" | "" => Ok(SplitTag::Unlabeled),
            other => Err(Error::Schema(format!("unknown split tag `{other}`"))),
        }
    }
}

/// Counts of input edges discarded while building neighbor lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub input_edges: usize,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Builds sorted, deduplicated neighbor lists without self-loops.
///
/// Undirected input contributes both directions. For directed input an
/// edge `src -> dst` puts `src` in the neighbor list of `dst`.
pub fn build_neighbors(
    num_nodes: usize,
    edges: &[(usize, usize)],
    directed: bool,
) -> Result<(Vec<Vec<usize>>, EdgeReport)> {
    let mut report = EdgeReport {
        input_edges: edges.len(),
        ..EdgeReport::default()
    };
    let mut neighbors = vec![Vec::new(); num_nodes];
    for &(src, dst) in edges {
        if src >= num_nodes || dst >= num_nodes {
            return Err(Error::GraphIntegrity(format!(
                "edge ({src}, {dst}) references a node outside 0..{num_nodes}"
            )));
        }
        if src == dst {
            report.self_loops_dropped += 1;
            continue;
        }
        neighbors[dst].push(src);
        if !directed {
            neighbors[src].push(dst);
        }
    }
    let mut kept = 0usize;
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
        kept += list.len();
    }
    let non_loop = report.input_edges - report.self_loops_dropped;
    let kept_edges = if directed { kept } else { kept / 2 };
    report.duplicates_dropped = non_loop - kept_edges;
    Ok((neighbors, report))
}

/// A validated attributed graph with labels, sensitive groups and a split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDataset {
    neighbors: Vec<Vec<usize>>,
    features: Vec<Vec<bool>>,
    num_features: usize,
    labels: Vec<Option<usize>>,
    sensitive: Vec<usize>,
    split: Vec<SplitTag>,
    num_classes: usize,
    num_groups: usize,
}

impl GraphDataset {
    /// Validates all per-node arrays against the neighbor lists.
    ///
    /// Neighbor lists must already be sorted, deduplicated and loop-free;
    /// use [`build_neighbors`] to obtain them from raw edges.
    pub fn new(
        neighbors: Vec<Vec<usize>>,
        features: Vec<Vec<bool>>,
        labels: Vec<Option<usize>>,
        sensitive: Vec<usize>,
        split: Vec<SplitTag>,
    ) -> Result<Self> {
        let n = neighbors.len();
        for (name, len) in [
            ("features", features.len()),
            ("labels", labels.len()),
            ("sensitive", sensitive.len()),
            ("split", split.len()),
        ] {
            if len != n {
                return Err(Error::Schema(format!(
                    "{name} has {len} rows but the graph has {n} nodes"
                )));
            }
        }
        for (node, list) in neighbors.iter().enumerate() {
            for (k, &j) in list.iter().enumerate() {
                if j >= n {
                    return Err(Error::GraphIntegrity(format!(
                        "node {node} lists neighbor {j} outside 0..{n}"
                    )));
                }
                if j == node {
                    return Err(Error::GraphIntegrity(format!("node {node} has a self-loop")));
                }
                if k > 0 && list[k - 1] >= j {
                    return Err(Error::GraphIntegrity(format!(
                        "neighbor list of node {node} is not sorted and deduplicated"
                    )));
                }
            }
        }
        let num_features = features.first().map_or(0, Vec::len);
        if let Some((row, f)) = features
            .iter()
            .enumerate()
            .find(|(_, f)| f.len() != num_features)
        {
            return Err(Error::Schema(format!(
                "node {row} has {} features, expected {num_features}",
                f.len()
            )));
        }
        for (node, (label, tag)) in labels.iter().zip(&split).enumerate() {
            if label.is_none() != (*tag == SplitTag::Unlabeled) {
                return Err(Error::Schema(format!(
                    "node {node}: split tag `{tag}` does not match label presence"
                )));
            }
        }
        let num_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let num_groups = sensitive.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            neighbors,
            features,
            num_features,
            labels,
            sensitive,
            split,
            num_classes,
            num_groups,
        })
    }

    /// Builds a dataset from a raw edge list, returning the edge report.
    pub fn from_edges(
        edges: &[(usize, usize)],
        directed: bool,
        features: Vec<Vec<bool>>,
        labels: Vec<Option<usize>>,
        sensitive: Vec<usize>,
        split: Vec<SplitTag>,
    ) -> Result<(Self, EdgeReport)> {
        let (neighbors, report) = build_neighbors(features.len(), edges, directed)?;
        Ok((Self::new(neighbors, features, labels, sensitive, split)?, report))
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn features(&self, node: usize) -> &[bool] {
        &self.features[node]
    }

    pub fn feature_rows(&self) -> &[Vec<bool>] {
        &self.features
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn split(&self) -> &[SplitTag] {
        &self.split
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Number of undirected edges (or arcs, for directed input).
    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Node ids carrying `tag`, ascending.
    pub fn nodes_with(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.split[n] == tag)
            .collect()
    }

    /// Replaces split tags; labeled nodes must not become `Unlabeled`.
    pub fn with_split(mut self, split: Vec<SplitTag>) -> Result<Self> {
        if split.len() != self.num_nodes() {
            return Err(Error::Schema(format!(
                "split has {} entries, expected {}",
                split.len(),
                self.num_nodes()
            )));
        }
        for (node, (label, tag)) in self.labels.iter().zip(&split).enumerate() {
            if label.is_none() != (*tag == SplitTag::Unlabeled) {
                return Err(Error::Schema(format!(
                    "node {node}: split tag `{tag}` does not match label presence"
                )));
            }
        }
        self.split = split;
        Ok(self)
    }

    /// Node counts per `(class, group)` over labeled nodes.
    pub fn cell_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for (label, &group) in self.labels.iter().zip(&self.sensitive) {
            if let Some(class) = label {
                *counts.entry((*class, group)).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Checks that every class has at least one training node.
    pub fn check_train_coverage(&self) -> Result<()> {
        let mut seen = vec![false; self.num_classes];
        for (label, tag) in self.labels.iter().zip(&self.split) {
            if let (Some(c), SplitTag::Train) = (label, tag) {
                seen[*c] = true;
            }
        }
        match seen.iter().position(|s| !s) {
            Some(c) => Err(Error::MissingClass(c)),
            None => Ok(()),
        }
    }

    /// SHA-256 over a canonical byte encoding of the whole dataset.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_nodes() as u64).to_le_bytes());
        h.update((self.num_features as u64).to_le_bytes());
        for n in 0..self.num_nodes() {
            h.update((self.neighbors[n].len() as u64).to_le_bytes());
            for &j in &self.neighbors[n] {
                h.update((j as u64).to_le_bytes());
            }
            let bits: Vec<u8> = self.features[n].iter().map(|&b| b as u8).collect();
            h.update(&bits);
            h.update(self.labels[n].map_or(-1i64, |l| l as i64).to_le_bytes());
            h.update((self.sensitive[n] as u64).to_le_bytes());
            h.update([self.split[n] as u8]);
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
