//! Image premises and word vectors: the VEFT tensor container, grid and ROI
//! features, a manifest-indexed feature directory, embedding text files, and
//! the synthetic grounded task.

mod embeddings;
mod regions;
mod store;
pub mod synth;
pub mod veft;

pub use embeddings::{load_embeddings, write_embeddings, write_table, LoadedEmbeddings, DEFAULT_EMBEDDING_DIM};
pub use regions::{flatten_grid, l2_normalize, unflatten_grid, FeatureGrid, RoiSet, DEFAULT_MAX_ROIS};
pub use store::{
    FeatureContract, FeatureStore, FeatureStoreWriter, Manifest, ManifestError, BOX_TENSOR, GRID_TENSOR, MANIFEST_FILE,
    ROI_TENSOR,
};
pub use synth::{hypothesis_only_ceiling, synth_generate, synth_splits, write_synth_task, SplitSizes, SynthConfig, SynthData, SynthPaths};

/// Default grid contract: 2048 maps of side 7.
pub const DEFAULT_GRID: FeatureContract = FeatureContract::Grid { k: 2048, d: 7 };
/// Default ROI contract: up to 10 regions of width 1024.
pub const DEFAULT_ROI: FeatureContract = FeatureContract::Roi { dim: 1024, max_regions: DEFAULT_MAX_ROIS };
