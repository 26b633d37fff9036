//! Fairness-aware graph hyperdimensional computing for node classification.
//!
//! Pipeline: binary node features and neighbor lists are encoded into
//! integer hypervectors ([`encode`]), class prototypes are bundled and then
//! refined with a demographic-parity-driven shrinkage factor ([`trainer`]),
//! and predictions are scored for utility and group fairness ([`metrics`],
//! [`eval`]).
//!
//! ```
//! use fairghdc::{data, encode, eval, trainer, InferenceMode, SplitTag};
//!
//! let spec = data::SyntheticSpec { nodes_per_block: 50, seed: 1, ..Default::default() };
//! let dataset = data::generate_synthetic(&spec).unwrap();
//! let cfg = trainer::TrainConfig { dim: 512, epochs: 2, alpha: 0.5, ..Default::default() };
//! let hvs = encode::encode_graph(&dataset, cfg.dim, cfg.seed).unwrap().into_node_hvs();
//! let (model, _) = trainer::train::<f64>(&hvs, &dataset, &cfg).unwrap();
//! let report = eval::evaluate(&model, &hvs, &dataset, SplitTag::Test, InferenceMode::Full, 1).unwrap();
//! assert!(report.acc >= 0.0 && report.acc <= 1.0);
//! ```

pub mod data;
pub mod encode;
pub mod error;
pub mod eval;
pub mod hdc;
pub mod metrics;
pub mod scalar;
pub mod seed;
pub mod trainer;

pub use data::{GraphDataset, SplitTag};
pub use error::{Error, Result};
pub use hdc::{AccumulatorHV, Hypervector, PositionTable};
pub use metrics::{FairnessReport, PredictionSet};
pub use scalar::Scalar;
pub use trainer::{ClassModel, GapForm, InferenceMode, TrainConfig};

pub type ClassModel32 = ClassModel<f32>;
pub type ClassModel64 = ClassModel<f64>;
