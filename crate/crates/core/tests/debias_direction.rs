//! Fairness-aware training lowers the demographic parity gap on the biased
//! synthetic graph in most seeds without costing accuracy.

use fairghdc::data::{generate_synthetic, SyntheticSpec};
use fairghdc::encode::encode_graph;
use fairghdc::eval::evaluate;
use fairghdc::trainer::train;
use fairghdc::{InferenceMode, SplitTag, TrainConfig};

#[test]
fn alpha_half_lowers_dp_in_most_seeds() {
    let mut lower = 0;
    let mut acc = [0.0; 2];
    for seed in 0..10u64 {
        let d = generate_synthetic(&SyntheticSpec {
            seed,
            ..SyntheticSpec::with_nodes(2000)
        })
        .unwrap();
        let hvs = encode_graph(&d, 4096, seed).unwrap().into_node_hvs();
        let mut dp = [0.0; 2];
        for (i, (alpha, beta)) in [(0.0, 0.0), (0.5, 1e-3)].into_iter().enumerate() {
            let cfg = TrainConfig {
                alpha,
                beta,
                seed,
                ..TrainConfig::default()
            };
            let (model, _) = train::<f64>(&hvs, &d, &cfg).unwrap();
            let r = evaluate(&model, &hvs, &d, SplitTag::Test, InferenceMode::Full, 1).unwrap();
            dp[i] = r.dp_gap.unwrap();
            acc[i] += r.acc / 10.0;
        }
        lower += usize::from(dp[1] < dp[0]);
    }
    assert!(lower >= 8, "lower in only {lower}/10 seeds");
    assert!(acc[0] - acc[1] <= 0.05, "accuracy {} -> {}", acc[0], acc[1]);
}
