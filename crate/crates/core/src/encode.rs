//! Graph encoding: feature, 1-hop, 2-hop and node hypervectors.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::GraphDataset;
use crate::error::{Error, Result};
use crate::hdc::{bind_in_place, AccumulatorHV, Hypervector, PositionTable};
use crate::seed::{self, stream};

const CACHE_MAGIC: &[u8; 8] = b"FGHDCENC";
const CACHE_VERSION: u32 = 1;

/// Random hypervectors an encoding depends on, derived from one seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingBasis {
    pub positions: PositionTable,
    /// Role vectors for the self, 1-hop and 2-hop terms.
    pub phi: [Hypervector; 3],
}

impl EncodingBasis {
    /// Position base and the three role vectors are independent draws.
    pub fn generate(dim: usize, num_features: usize, root_seed: u64) -> Result<Self> {
        let draw = |s: u64| Hypervector::random(dim, &mut seed::stream_rng(root_seed, s));
        let base = draw(stream::POSITION_BASE)?;
        Ok(Self {
            positions: PositionTable::new(base, num_features),
            phi: [
                draw(stream::ROLE_PHI0)?,
                draw(stream::ROLE_PHI1)?,
                draw(stream::ROLE_PHI2)?,
            ],
        })
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }
}

/// Cached per-node encodings. All vectors share one dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedGraph {
    pub basis: EncodingBasis,
    pub seed: u64,
    pub features: Vec<AccumulatorHV>,
    pub one_hop: Vec<AccumulatorHV>,
    pub two_hop: Vec<AccumulatorHV>,
    pub nodes: Vec<AccumulatorHV>,
}

impl EncodedGraph {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Drops the intermediate encodings, keeping only node hypervectors.
    pub fn into_node_hvs(self) -> Vec<AccumulatorHV> {
        self.nodes
    }
}

/// `N_k = sum of p_i over active features i`.
pub fn encode_features(
    dataset: &GraphDataset,
    positions: &PositionTable,
) -> Result<Vec<AccumulatorHV>> {
    if dataset.num_features() != positions.num_features() {
        return Err(Error::Schema(format!(
            "dataset has {} binary features, position table has {}",
            dataset.num_features(),
            positions.num_features()
        )));
    }
    let dim = positions.dim();
    Ok(dataset
        .feature_rows()
        .par_iter()
        .map(|row| {
            let mut lanes = vec![0i64; dim];
            for (i, _) in row.iter().enumerate().filter(|(_, &on)| on) {
                positions.row(i).add_into(&mut lanes);
            }
            AccumulatorHV::from_lanes(lanes)
        })
        .collect())
}

fn sum_over_neighbors(
    dataset: &GraphDataset,
    values: &[AccumulatorHV],
) -> Result<Vec<AccumulatorHV>> {
    let n = dataset.num_nodes();
    if values.len() != n {
        return Err(Error::GraphIntegrity(format!(
            "{} input vectors for {n} nodes",
            values.len()
        )));
    }
    let dim = values.first().map_or(0, AccumulatorHV::dim);
    dataset
        .neighbor_lists()
        .par_iter()
        .enumerate()
        .map(|(node, list)| {
            let mut lanes = vec![0i64; dim];
            for &j in list {
                let v = values.get(j).ok_or_else(|| {
                    Error::GraphIntegrity(format!("node {node} lists neighbor {j} outside 0..{n}"))
                })?;
                if v.dim() != dim {
                    return Err(Error::InvalidDimension {
                        expected: dim,
                        found: v.dim(),
                    });
                }
                for (a, b) in lanes.iter_mut().zip(v.lanes()) {
                    *a += b;
                }
            }
            Ok(AccumulatorHV::from_lanes(lanes))
        })
        .collect()
}

/// `H1_n = sum of N_j over neighbors j`; a node's own `N_n` is excluded.
pub fn encode_one_hop(
    dataset: &GraphDataset,
    features: &[AccumulatorHV],
) -> Result<Vec<AccumulatorHV>> {
    sum_over_neighbors(dataset, features)
}

/// `H2_n = sum of H1_j over neighbors j`, backtracking paths included.
pub fn encode_two_hop(
    dataset: &GraphDataset,
    one_hop: &[AccumulatorHV],
) -> Result<Vec<AccumulatorHV>> {
    sum_over_neighbors(dataset, one_hop)
}

/// `E_n = N_n * phi0 + H1_n * phi1 + H2_n * phi2`.
pub fn encode_nodes(
    features: &[AccumulatorHV],
    one_hop: &[AccumulatorHV],
    two_hop: &[AccumulatorHV],
    phi: &[Hypervector; 3],
) -> Result<Vec<AccumulatorHV>> {
    if features.len() != one_hop.len() || features.len() != two_hop.len() {
        return Err(Error::GraphIntegrity(format!(
            "mismatched node counts: {}, {}, {}",
            features.len(),
            one_hop.len(),
            two_hop.len()
        )));
    }
    features
        .par_iter()
        .zip(one_hop)
        .zip(two_hop)
        .map(|((n, h1), h2)| {
            let mut out = n.lanes().to_vec();
            bind_in_place(&mut out, &phi[0])?;
            for (term, role) in [(h1, &phi[1]), (h2, &phi[2])] {
                let mut bound = term.lanes().to_vec();
                bind_in_place(&mut bound, role)?;
                if bound.len() != out.len() {
                    return Err(Error::InvalidDimension {
                        expected: out.len(),
                        found: bound.len(),
                    });
                }
                for (a, b) in out.iter_mut().zip(bound) {
                    *a += b;
                }
            }
            Ok(AccumulatorHV::from_lanes(out))
        })
        .collect()
}

/// Runs the full encoding pipeline with a basis derived from `seed`.
pub fn encode_graph(dataset: &GraphDataset, dim: usize, seed: u64) -> Result<EncodedGraph> {
    let basis = EncodingBasis::generate(dim, dataset.num_features(), seed)?;
    encode_with_basis(dataset, basis, seed)
}

pub fn encode_with_basis(
    dataset: &GraphDataset,
    basis: EncodingBasis,
    seed: u64,
) -> Result<EncodedGraph> {
    let features = encode_features(dataset, &basis.positions)?;
    let one_hop = encode_one_hop(dataset, &features)?;
    let two_hop = encode_two_hop(dataset, &one_hop)?;
    let nodes = encode_nodes(&features, &one_hop, &two_hop, &basis.phi)?;
    Ok(EncodedGraph {
        basis,
        seed,
        features,
        one_hop,
        two_hop,
        nodes,
    })
}

/// Writes the encoding cache: header (magic, version, D, N, M, seed,
/// dataset hash) then N, H1, H2, E lanes per node as little-endian `i64`.
pub fn write_cache(path: &Path, encoded: &EncodedGraph, dataset_hash: &str) -> Result<()> {
    let hash = decode_hash(path, dataset_hash)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(76);
    header.extend_from_slice(CACHE_MAGIC);
    header.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    header.extend_from_slice(&(encoded.dim() as u64).to_le_bytes());
    header.extend_from_slice(&(encoded.num_nodes() as u64).to_le_bytes());
    header.extend_from_slice(&(encoded.basis.positions.num_features() as u64).to_le_bytes());
    header.extend_from_slice(&encoded.seed.to_le_bytes());
    header.extend_from_slice(&hash);
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(encoded.dim() * 8);
    for n in 0..encoded.num_nodes() {
        for v in [
            &encoded.features[n],
            &encoded.one_hop[n],
            &encoded.two_hop[n],
            &encoded.nodes[n],
        ] {
            buf.clear();
            for lane in v.lanes() {
                buf.extend_from_slice(&lane.to_le_bytes());
            }
            w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn decode_hash(path: &Path, hex: &str) -> Result<[u8; 32]> {
    let bad = || Error::format(path, format!("dataset hash `{hex}` is not 64 hex digits"));
    if hex.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Reads a cache written by [`write_cache`]. Returns `None` when the cache
/// was built for a different dataset, dimension or seed.
pub fn read_cache(
    path: &Path,
    dataset_hash: &str,
    dim: usize,
    seed: u64,
) -> Result<Option<EncodedGraph>> {
    let expected_hash = decode_hash(path, dataset_hash)?;
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 76];
    file.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &header[..8] != CACHE_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    if u32_at(8) != CACHE_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", u32_at(8))));
    }
    let (d, n, m, s) = (
        u64_at(12) as usize,
        u64_at(20) as usize,
        u64_at(28) as usize,
        u64_at(36),
    );
    if d != dim || s != seed || header[44..76] != expected_hash {
        return Ok(None);
    }
    let mut body = Vec::new();
    file.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() != n * 4 * d * 8 {
        return Err(Error::format(path, "lane data length does not match header"));
    }
    let mut vectors = body
        .chunks_exact(d * 8)
        .map(|chunk| {
            AccumulatorHV::from_lanes(
                chunk
                    .chunks_exact(8)
                    .map(|b| i64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            )
        })
        .collect::<Vec<_>>()
        .into_iter();
    let mut out = [vec![], vec![], vec![], vec![]];
    for _ in 0..n {
        for slot in &mut out {
            slot.push(vectors.next().expect("length checked"));
        }
    }
    let [features, one_hop, two_hop, nodes] = out;
    Ok(Some(EncodedGraph {
        basis: EncodingBasis::generate(d, m, s)?,
        seed: s,
        features,
        one_hop,
        two_hop,
        nodes,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::hdc::{bind, bundle};

    fn dataset(edges: &[(usize, usize)], features: Vec<Vec<bool>>) -> GraphDataset {
        let n = features.len();
        GraphDataset::from_edges(
            edges,
            false,
            features,
            vec![Some(0); n],
            vec![0; n],
            vec![SplitTag::Train; n],
        )
        .unwrap()
        .0
    }

    fn add(a: &AccumulatorHV, b: &AccumulatorHV) -> AccumulatorHV {
        bundle(a.dim(), [a, b]).unwrap()
    }

    #[test]
    fn feature_encoding_examples() {
        let d = dataset(&[], vec![vec![true, false, true], vec![false; 3], vec![false, true, false]]);
        let basis = EncodingBasis::generate(64, 3, 1).unwrap();
        let n = encode_features(&d, &basis.positions).unwrap();
        let p = basis.positions.rows();
        assert_eq!(n[0], bundle(64, [&p[0], &p[2]]).unwrap());
        assert!(n[1].is_zero());
        assert_eq!(n[2], p[1].to_accumulator());
    }

    #[test]
    fn feature_length_mismatch() {
        let d = dataset(&[], vec![vec![true, false]]);
        let basis = EncodingBasis::generate(8, 3, 1).unwrap();
        assert!(matches!(
            encode_features(&d, &basis.positions),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn path_graph_hops() {
        // a - b - c, hand expansion: H1_b = N_a + N_c, H2_a = H1_b.
        let d = dataset(
            &[(0, 1), (1, 2)],
            vec![vec![true, false], vec![false, true], vec![true, true]],
        );
        let e = encode_graph(&d, 32, 5).unwrap();
        assert_eq!(e.one_hop[0], e.features[1]);
        assert_eq!(e.one_hop[1], add(&e.features[0], &e.features[2]));
        assert_eq!(e.two_hop[0], e.one_hop[1]);
        assert_eq!(e.two_hop[0], add(&e.features[0], &e.features[2]));
    }

    #[test]
    fn isolated_node() {
        let d = dataset(&[(0, 1)], vec![vec![true]; 3]);
        let e = encode_graph(&d, 16, 2).unwrap();
        assert!(e.one_hop[2].is_zero());
        assert!(e.two_hop[2].is_zero());
        assert_eq!(e.nodes[2], bind(&e.features[2], &e.basis.phi[0]).unwrap());
    }

    #[test]
    fn star_center_two_hop() {
        // Each leaf's only neighbor is the center, so H1_leaf = N_center.
        let k = 5;
        let edges: Vec<(usize, usize)> = (1..=k).map(|l| (0, l)).collect();
        let mut feats = vec![vec![true, false, true]];
        feats.extend(std::iter::repeat_n(vec![false, true, false], k));
        let d = dataset(&edges, feats);
        let e = encode_graph(&d, 32, 9).unwrap();
        let expected: Vec<i64> = e.features[0].lanes().iter().map(|v| v * k as i64).collect();
        assert_eq!(e.two_hop[0].lanes(), expected.as_slice());
    }

    #[test]
    fn identity_roles_sum_terms() {
        let d = dataset(&[(0, 1), (1, 2)], vec![vec![true, true], vec![true, false], vec![false, true]]);
        let mut basis = EncodingBasis::generate(4, 2, 3).unwrap();
        basis.phi = [
            Hypervector::ones(4).unwrap(),
            Hypervector::ones(4).unwrap(),
            Hypervector::ones(4).unwrap(),
        ];
        let e = encode_with_basis(&d, basis, 3).unwrap();
        for n in 0..3 {
            let sum = bundle(4, [&e.features[n], &e.one_hop[n], &e.two_hop[n]]).unwrap();
            assert_eq!(e.nodes[n], sum);
        }
    }

    #[test]
    fn node_lane_definition() {
        let d = dataset(&[(0, 1)], vec![vec![true, false], vec![true, true]]);
        let e = encode_graph(&d, 4, 7).unwrap();
        for n in 0..2 {
            for j in 0..4 {
                let expected = e.features[n].lanes()[j] * e.basis.phi[0].get(j) as i64
                    + e.one_hop[n].lanes()[j] * e.basis.phi[1].get(j) as i64
                    + e.two_hop[n].lanes()[j] * e.basis.phi[2].get(j) as i64;
                assert_eq!(e.nodes[n].lanes()[j], expected);
            }
        }
    }

    #[test]
    fn cache_roundtrip_and_key_mismatch() {
        let d = dataset(&[(0, 1), (1, 2)], vec![vec![true, false]; 3]);
        let e = encode_graph(&d, 70, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.bin");
        let hash = d.content_hash();
        write_cache(&path, &e, &hash).unwrap();
        assert_eq!(read_cache(&path, &hash, 70, 4).unwrap(), Some(e));
        assert_eq!(read_cache(&path, &hash, 70, 5).unwrap(), None);
        assert_eq!(read_cache(&path, &hash, 64, 4).unwrap(), None);
    }
}
