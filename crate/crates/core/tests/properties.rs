use fairghdc::data::{generate_synthetic, SyntheticSpec};
use fairghdc::encode::encode_graph;
use fairghdc::hdc::{bind, bundle, cosine_similarity, sign_quantize};
use fairghdc::trainer::{
    apply_updates, batch_fairness_factor, init_class_hvs, train, train_vanilla,
};
use fairghdc::{
    AccumulatorHV, ClassModel, GapForm, GraphDataset, Hypervector, InferenceMode,
    PredictionSet, SplitTag, TrainConfig,
};
use proptest::prelude::*;

fn hv(dim: usize, seed: u64) -> Hypervector {
    fairghdc::hdc::random_hypervector(dim, seed).unwrap()
}

fn acc(lanes: Vec<i64>) -> AccumulatorHV {
    AccumulatorHV::from_lanes(lanes)
}

fn small_dataset(seed: u64) -> GraphDataset {
    generate_synthetic(&SyntheticSpec {
        nodes_per_block: 30,
        p_in: 0.1,
        p_out: 0.02,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_preserves_dot(dim in 1usize..300, k in 0usize..700, s in any::<u64>()) {
        let (a, b) = (hv(dim, s), hv(dim, s ^ 1));
        prop_assert_eq!(
            a.cyclic_shift(k).dot(&b.cyclic_shift(k)).unwrap(),
            a.dot(&b).unwrap()
        );
        prop_assert_eq!(a.cyclic_shift(dim), a.clone());
        prop_assert_eq!(a.cyclic_shift(k).cyclic_shift(dim - k % dim), a);
    }

    #[test]
    fn bind_distributes_over_bundle(
        lanes in prop::collection::vec((-50i64..50, -50i64..50), 1..200),
        s in any::<u64>(),
    ) {
        let dim = lanes.len();
        let a = acc(lanes.iter().map(|p| p.0).collect());
        let b = acc(lanes.iter().map(|p| p.1).collect());
        let c = hv(dim, s);
        let sum = bundle(dim, [&a, &b]).unwrap();
        let mut rhs = bind(&a, &c).unwrap();
        rhs.add_assign(&bind(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(bind(&sum, &c).unwrap(), rhs);
        // Binding twice with a bipolar vector is the identity.
        prop_assert_eq!(bind(&bind(&a, &c).unwrap(), &c).unwrap(), a);
    }

    #[test]
    fn quantize_is_idempotent(lanes in prop::collection::vec(-5i64..5, 1..300)) {
        let q = sign_quantize(&acc(lanes.clone()));
        prop_assert_eq!(sign_quantize(&q.to_accumulator()), q.clone());
        for (l, v) in lanes.iter().zip(q.iter()) {
            prop_assert_eq!(v, if *l >= 0 { 1 } else { -1 });
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        lanes in prop::collection::vec((-20i64..20, -20i64..20), 1..100),
        k in 1i64..50,
    ) {
        let a = acc(lanes.iter().map(|p| p.0).collect());
        let b = acc(lanes.iter().map(|p| p.1).collect());
        prop_assume!(!a.is_zero() && !b.is_zero());
        let scaled = acc(a.lanes().iter().map(|x| x * k).collect());
        let c1 = cosine_similarity(&a, &b).unwrap();
        let c2 = cosine_similarity(&scaled, &b).unwrap();
        prop_assert!((c1 - c2).abs() < 1e-12);
        prop_assert!(c1.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn factor_is_monotone_in_gap(alpha in 0.0f64..3.0, beta in 0.0f64..0.5) {
        // Batches of 8: group 0 always predicted positive, group 1 gets k positives.
        let cfg = TrainConfig { alpha, beta, gap_form: GapForm::Binary, ..TrainConfig::default() };
        let mut last = f64::INFINITY;
        for k in 0..=4usize {
            let pred: Vec<usize> = (0..8).map(|i| usize::from(i < 4 || i - 4 < k)).collect();
            let set = PredictionSet::new(pred, vec![1; 8], vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
            let f = batch_fairness_factor(&set, &cfg);
            prop_assert!(f.factor_f <= last + 1e-15);
            prop_assert!(f.factor_f >= 0.0 && f.factor_f < 1.0);
            last = f.factor_f;
        }
    }
}

#[test]
fn encoding_is_permutation_equivariant() {
    let d = small_dataset(5);
    let n = d.num_nodes();
    // Reverse node order.
    let pi = |i: usize| n - 1 - i;
    let mut edges = Vec::new();
    for (k, list) in d.neighbor_lists().iter().enumerate() {
        for &j in list {
            edges.push((pi(j), pi(k)));
        }
    }
    fn rev<T: Copy>(v: &[T]) -> Vec<T> {
        v.iter().rev().copied().collect()
    }
    let features = (0..n).map(|i| d.features(pi(i)).to_vec()).collect();
    let (permuted, _) = GraphDataset::from_edges(
        &edges,
        true,
        features,
        rev(d.labels()),
        rev(d.sensitive()),
        rev(d.split()),
    )
    .unwrap();
    let a = encode_graph(&d, 256, 11).unwrap();
    let b = encode_graph(&permuted, 256, 11).unwrap();
    for k in 0..n {
        assert_eq!(a.nodes[k], b.nodes[pi(k)]);
    }
}

fn node_hvs(d: &GraphDataset, dim: usize) -> Vec<AccumulatorHV> {
    encode_graph(d, dim, 2).unwrap().into_node_hvs()
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let d = small_dataset(1);
    let hvs = node_hvs(&d, 256);
    let cfg = TrainConfig { dim: 256, epochs: 0, alpha: 0.7, ..TrainConfig::default() };
    let (model, traces) = train::<f64>(&hvs, &d, &cfg).unwrap();
    assert!(traces.is_empty());
    let init = init_class_hvs::<f64>(&hvs, &d).unwrap().finalized();
    assert_eq!(model, init);
}

#[test]
fn initial_model_is_class_bundle() {
    let d = small_dataset(2);
    let hvs = node_hvs(&d, 128);
    let model = init_class_hvs::<f64>(&hvs, &d).unwrap();
    for c in 0..d.num_classes() {
        let mut sum = vec![0i64; 128];
        for k in 0..d.num_nodes() {
            if d.split()[k] == SplitTag::Train && d.label(k) == Some(c) {
                for (s, v) in sum.iter_mut().zip(hvs[k].lanes()) {
                    *s += v;
                }
            }
        }
        let expect: Vec<f64> = sum.iter().map(|&v| v as f64).collect();
        assert_eq!(model.accumulators()[c], expect);
    }
}

#[test]
fn fair_training_with_zero_factor_matches_vanilla() {
    for seed in 0..4 {
        let d = small_dataset(seed);
        let hvs = node_hvs(&d, 256);
        let cfg = TrainConfig { dim: 256, epochs: 5, batch_size: 16, seed, ..TrainConfig::default() };
        let (fair, _) = train::<f64>(&hvs, &d, &cfg).unwrap();
        let (plain, _) = train_vanilla::<f64>(&hvs, &d, &cfg).unwrap();
        assert_eq!(fair, plain);
        let (fair32, _) = train::<f32>(&hvs, &d, &cfg).unwrap();
        let (plain32, _) = train_vanilla::<f32>(&hvs, &d, &cfg).unwrap();
        assert_eq!(fair32, plain32);
    }
}

#[test]
fn doubling_eta_doubles_the_update() {
    let d = small_dataset(3);
    let hvs = node_hvs(&d, 128);
    let base = init_class_hvs::<f64>(&hvs, &d).unwrap();
    let batch: Vec<usize> = (0..20).collect();
    let actual: Vec<usize> = batch.iter().map(|&n| d.label(n).unwrap()).collect();
    let predicted: Vec<usize> = actual.iter().enumerate().map(|(i, &y)| if i % 3 == 0 { 1 - y } else { y }).collect();
    let f = 0.25;
    let delta = |eta: f64| {
        let mut m = base.clone();
        apply_updates(&mut m, &batch, &predicted, &actual, &hvs, eta * (1.0 - f), eta).unwrap();
        m.accumulators()
            .iter()
            .zip(base.accumulators())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    };
    let (d1, d2) = (delta(1.0), delta(2.0));
    for (r1, r2) in d1.iter().zip(&d2) {
        for (a, b) in r1.iter().zip(r2) {
            assert_eq!(2.0 * a, *b);
        }
    }
}

#[test]
fn update_rules_per_branch() {
    // One node, two classes, D = 4.
    let hvs = vec![acc(vec![1, -2, 3, 0])];
    let model = ClassModel::<f64>::from_accumulators(vec![vec![1.0; 4], vec![-1.0; 4]]).unwrap();
    // Dyadic factors keep every expected lane exact.
    let (eta, f) = (0.5, 0.25);
    // Correct: only the true class moves, by eta (1 - F) E.
    let mut m = model.clone();
    apply_updates(&mut m, &[0], &[1], &[1], &hvs, eta * (1.0 - f), eta).unwrap();
    assert_eq!(m.accumulators()[0], vec![1.0; 4]);
    assert_eq!(m.accumulators()[1], vec![-0.625, -1.75, 0.125, -1.0]);
    // Wrong: true class gains eta (1 - F) E, predicted class loses eta E.
    let mut m = model.clone();
    apply_updates(&mut m, &[0], &[0], &[1], &hvs, eta * (1.0 - f), eta).unwrap();
    assert_eq!(m.accumulators()[0], vec![0.5, 2.0, -0.5, 1.0]);
    assert_eq!(m.accumulators()[1], vec![-0.625, -1.75, 0.125, -1.0]);
}

#[test]
fn batch_order_does_not_change_the_update() {
    let d = small_dataset(4);
    let hvs = node_hvs(&d, 128);
    let base = init_class_hvs::<f64>(&hvs, &d).unwrap();
    let batch: Vec<usize> = (0..24).collect();
    let actual: Vec<usize> = batch.iter().map(|&n| d.label(n).unwrap()).collect();
    let predicted: Vec<usize> = actual.iter().enumerate().map(|(i, &y)| if i % 4 == 1 { 1 - y } else { y }).collect();
    let mut a = base.clone();
    apply_updates(&mut a, &batch, &predicted, &actual, &hvs, 0.7, 1.0).unwrap();
    let mut b = base.clone();
    let rev = |v: &[usize]| v.iter().rev().copied().collect::<Vec<_>>();
    apply_updates(&mut b, &rev(&batch), &rev(&predicted), &rev(&actual), &hvs, 0.7, 1.0).unwrap();
    assert_eq!(a, b);
}

/// Cosine argmax written from scratch, with lowest-id tie-breaking.
fn oracle_predict(classes: &[Vec<f64>], e: &[i64]) -> usize {
    let en = e.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
    let mut best = (0, f64::NEG_INFINITY);
    for (c, w) in classes.iter().enumerate() {
        let dot: f64 = w.iter().zip(e).map(|(a, &b)| a * b as f64).sum();
        let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let s = dot / (wn * en);
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

#[test]
fn full_and_quantized_modes_match_oracles() {
    let d = small_dataset(6);
    let hvs = node_hvs(&d, 512);
    let cfg = TrainConfig { dim: 512, epochs: 3, alpha: 0.5, ..TrainConfig::default() };
    let (model, _) = train::<f64>(&hvs, &d, &cfg).unwrap();
    let signs: Vec<Vec<f64>> = model
        .accumulators()
        .iter()
        .map(|a| a.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect())
        .collect();
    let mut agree = 0;
    let mut checked = 0;
    for e in hvs.iter().filter(|e| !e.is_zero()) {
        let full = model.predict(e, InferenceMode::Full).unwrap();
        let quant = model.predict(e, InferenceMode::Quantized).unwrap();
        assert_eq!(full, oracle_predict(model.accumulators(), e.lanes()));
        assert_eq!(quant, oracle_predict(&signs, e.lanes()));
        checked += 1;
        agree += usize::from(full == quant);
    }
    assert!(checked > 0);
    // Quantization keeps most decisions on a separable-ish graph.
    assert!(agree * 10 >= checked * 7, "{agree} of {checked}");
}
