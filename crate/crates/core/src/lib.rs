//! Visual entailment: classify whether an image premise entails, contradicts,
//! or is neutral toward a text hypothesis.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`autograd`]), the
//! neural building blocks ([`layers`]), the EVE dual-attention classifier and
//! its baselines ([`models`]), the SNLI-VE construction pipeline
//! ([`dataset`]), image-feature containers and a synthetic grounded task
//! ([`features`]), and the training/evaluation harness ([`harness`]).

pub mod autograd;
pub mod dataset;
pub mod error;
pub mod features;
pub mod harness;
pub mod layers;
pub mod models;
pub mod params;
pub mod tensor;

pub use autograd::{grad_check, Axis, GradCheck, Gradients, Tape, Var};
pub use dataset::VEExample;
pub use error::{Error, Result};
pub use features::{FeatureContract, FeatureStore, SynthConfig};
pub use harness::{evaluate, fit, train, EvalReport, Premises, TrainConfig, TrainOptions};
pub use layers::{EmbeddingTable, Vocab};
pub use models::{Forward, Label, Model, ModelConfig, RegionSource, Variant};
pub use params::{Bound, ParamBuilder, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
