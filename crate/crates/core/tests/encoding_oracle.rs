//! Lane-exact comparison of graph encoding against a naive dense-matrix
//! oracle on small random graphs.

use fairghdc::encode::{encode_graph, EncodedGraph};
use fairghdc::{GraphDataset, SplitTag};
use rand::Rng;

struct Graph {
    n: usize,
    m: usize,
    edges: Vec<(usize, usize)>,
    directed: bool,
    features: Vec<Vec<bool>>,
}

fn random_graph(rng: &mut impl Rng) -> Graph {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=6);
    let directed = rng.gen_bool(0.3);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if (directed || i < j) && rng.gen_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    let features = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    Graph {
        n,
        m,
        edges,
        directed,
        features,
    }
}

fn dataset(g: &Graph) -> GraphDataset {
    GraphDataset::from_edges(
        &g.edges,
        g.directed,
        g.features.clone(),
        vec![Some(0); g.n],
        vec![0; g.n],
        vec![SplitTag::Train; g.n],
    )
    .unwrap()
    .0
}

/// `adj[k][j] = 1` when node `j` sends to node `k`. Self-loops and repeated
/// edges contribute nothing.
fn adjacency(g: &Graph) -> Vec<Vec<i64>> {
    let mut adj = vec![vec![0i64; g.n]; g.n];
    for &(s, d) in &g.edges {
        if s == d {
            continue;
        }
        adj[d][s] = 1;
        if !g.directed {
            adj[s][d] = 1;
        }
    }
    adj
}

struct Oracle {
    n: Vec<Vec<i64>>,
    h1: Vec<Vec<i64>>,
    h2: Vec<Vec<i64>>,
    e: Vec<Vec<i64>>,
}

fn oracle(g: &Graph, base: &[i8], phi: [&[i8]; 3]) -> Oracle {
    let d = base.len();
    // Position i is the base rotated i lanes forward.
    let pos = |i: usize, lane: usize| base[(lane + d * (i / d + 1) - i) % d] as i64;
    let adj = adjacency(g);
    let mut n = vec![vec![0i64; d]; g.n];
    for k in 0..g.n {
        for lane in 0..d {
            for i in 0..g.m {
                if g.features[k][i] {
                    n[k][lane] += pos(i, lane);
                }
            }
        }
    }
    let hop = |x: &Vec<Vec<i64>>| {
        let mut out = vec![vec![0i64; d]; g.n];
        for k in 0..g.n {
            for j in 0..g.n {
                for lane in 0..d {
                    out[k][lane] += adj[k][j] * x[j][lane];
                }
            }
        }
        out
    };
    let h1 = hop(&n);
    let h2 = hop(&h1);
    let mut e = vec![vec![0i64; d]; g.n];
    for k in 0..g.n {
        for lane in 0..d {
            e[k][lane] = n[k][lane] * phi[0][lane] as i64
                + h1[k][lane] * phi[1][lane] as i64
                + h2[k][lane] * phi[2][lane] as i64;
        }
    }
    Oracle { n, h1, h2, e }
}

fn check(g: &Graph, enc: &EncodedGraph) {
    let base = enc.basis.positions.base().to_bipolar();
    let phi: Vec<Vec<i8>> = enc.basis.phi.iter().map(|p| p.to_bipolar()).collect();
    let o = oracle(g, &base, [&phi[0], &phi[1], &phi[2]]);
    for k in 0..g.n {
        assert_eq!(enc.features[k].lanes(), &o.n[k][..], "N of node {k}");
        assert_eq!(enc.one_hop[k].lanes(), &o.h1[k][..], "H1 of node {k}");
        assert_eq!(enc.two_hop[k].lanes(), &o.h2[k][..], "H2 of node {k}");
        assert_eq!(enc.nodes[k].lanes(), &o.e[k][..], "E of node {k}");
    }
}

#[test]
fn random_small_graphs_match_dense_oracle() {
    let mut rng = fairghdc::seed::rng(0x5eed);
    let dims = [1usize, 3, 63, 64, 65, 130, 256];
    for case in 0..100 {
        let g = random_graph(&mut rng);
        let dim = dims[case % dims.len()];
        let enc = encode_graph(&dataset(&g), dim, case as u64).unwrap();
        check(&g, &enc);
    }
}

#[test]
fn position_rows_are_forward_rotations() {
    let enc = encode_graph(
        &dataset(&Graph {
            n: 1,
            m: 5,
            edges: vec![],
            directed: false,
            features: vec![vec![true; 5]],
        }),
        10,
        3,
    )
    .unwrap();
    let base = enc.basis.positions.base().to_bipolar();
    for i in 0..5 {
        let row = enc.basis.positions.row(i).to_bipolar();
        for j in 0..10 {
            assert_eq!(row[(j + i) % 10], base[j]);
        }
    }
}

#[test]
fn isolated_featureless_node_encodes_to_zero() {
    let g = Graph {
        n: 3,
        m: 2,
        edges: vec![(0, 1)],
        directed: false,
        features: vec![vec![true, false], vec![false, true], vec![false, false]],
    };
    let enc = encode_graph(&dataset(&g), 64, 9).unwrap();
    assert!(enc.nodes[2].is_zero());
    check(&g, &enc);
}
