//! Tree tensor network density estimation from samples, with every core
//! obtained from a sketched linear system instead of iterative training.

pub mod chow_liu;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod samples;
pub mod sketch;
pub mod tensor;
pub mod tree;
pub mod ttns;

pub use error::{Error, Result};
pub use estimator::{sketch_exact, sketch_from_samples, ttns_sketch, Density, Fit, FitOptions, RankSpec, SketchSet};
pub use models::{preset_model, ModelPreset, PairwiseMRF, PresetParams};
pub use samples::DiscreteSamples;
pub use sketch::{SketchConfig, SketchFunction, SketchKind};
pub use tensor::{DenseTensor, ThreeTensor};
pub use tree::{RootedTree, TreeSpec};
pub use ttns::Ttns;
