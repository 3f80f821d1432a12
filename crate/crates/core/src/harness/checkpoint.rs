use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::veft;
use crate::layers::EmbeddingTable;
use crate::models::{Model, ModelConfig};

const FORMAT: &str = "eve-checkpoint";
const VERSION: u32 = 1;
const EMBEDDING_PARAM: &str = "embedding";

/// Everything besides the tensors needed to rebuild a model; stored as JSON
/// next to the VEFT file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub region_dim: Option<usize>,
    pub vocab: Vec<String>,
    /// Epochs completed when these weights were taken.
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
}

/// `best.veft` → `best.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint(model: &Model, path: &Path, epoch: usize, val_accuracy: Option<f64>) -> Result<()> {
    let tensors: Vec<veft::NamedTensor> = model.params().iter().map(|(_, p)| (p.name.clone(), p.tensor.clone())).collect();
    veft::write(path, &tensors)?;
    let meta = CheckpointMeta {
        format: FORMAT.into(),
        version: VERSION,
        model: model.config().clone(),
        region_dim: model.region_dim(),
        vocab: model.vocab().tokens().to_vec(),
        epoch,
        val_accuracy,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(side.display().to_string(), e.to_string()))?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::format(
            side.display().to_string(),
            format!("{} v{}, expected {FORMAT} v{VERSION}", meta.format, meta.version),
        ));
    }
    let tensors = veft::read(path)?;
    let embedding = veft::find(&tensors, EMBEDDING_PARAM)
        .ok_or_else(|| Error::format(path.display().to_string(), "no embedding tensor"))?
        .clone();
    let table = EmbeddingTable::from_parts(meta.vocab.clone(), embedding)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    let mut model = Model::new(meta.model.clone(), table, meta.region_dim)?;
    model.params_mut().load_values(&tensors)?;
    if tensors.len() != model.params().len() {
        return Err(Error::format(path.display().to_string(), "checkpoint holds tensors the model does not use"));
    }
    Ok((model, meta))
}
