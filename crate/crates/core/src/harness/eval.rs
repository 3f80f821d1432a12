use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::VEExample;
use crate::error::{Error, Result};
use crate::features::{flatten_grid, l2_normalize, FeatureContract, FeatureGrid, FeatureStore};
use crate::models::{Label, Model, RegionSource};
use crate::tensor::Tensor;

/// Region tensors keyed by image id, ready for the model.
#[derive(Clone, Debug, Default)]
pub struct Premises {
    regions: HashMap<String, Tensor>,
}

impl Premises {
    /// For models without an image branch.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_map(regions: HashMap<String, Tensor>) -> Self {
        Self { regions }
    }

    /// Grid premises held in memory, flattened to regions and normalized
    /// when the model asks for it.
    pub fn from_grids<'a>(model: &Model, grids: impl IntoIterator<Item = (&'a str, &'a FeatureGrid)>) -> Self {
        let normalize = model.config().normalizes_regions();
        let regions = grids
            .into_iter()
            .map(|(id, g)| {
                let r = flatten_grid(g);
                (id.to_owned(), if normalize { l2_normalize(&r) } else { r })
            })
            .collect();
        Self { regions }
    }

    /// Loads the regions of every image the examples mention, after checking
    /// that the store covers them all and matches the model's feature kind.
    pub fn load<'a>(model: &Model, store: Option<&FeatureStore>, examples: impl IntoIterator<Item = &'a VEExample>) -> Result<Self> {
        let Some(source) = model.variant().region_source() else {
            return Ok(Self::none());
        };
        let store = store.ok_or_else(|| Error::Config(format!("{:?} needs a feature store", model.variant())))?;
        check_contract(model, store.contract(), source)?;
        let ids: Vec<&str> = examples.into_iter().map(|e| e.image_id.as_str()).collect();
        let missing = store.missing(ids.iter().copied());
        if !missing.is_empty() {
            return Err(Error::Preflight { missing });
        }
        let normalize = model.config().normalizes_regions();
        let mut regions = HashMap::new();
        for id in ids {
            if !regions.contains_key(id) {
                let r = store.load(id)?;
                regions.insert(id.to_owned(), if normalize { l2_normalize(&r) } else { r });
            }
        }
        Ok(Self { regions })
    }

    pub fn get(&self, image_id: &str) -> Option<&Tensor> {
        self.regions.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Regions for one example, or `None` for text-only models.
    pub fn for_example(&self, model: &Model, ex: &VEExample) -> Result<Option<&Tensor>> {
        if model.variant().region_source().is_none() {
            return Ok(None);
        }
        self.get(&ex.image_id).map(Some).ok_or_else(|| Error::Preflight { missing: vec![ex.image_id.clone()] })
    }
}

fn check_contract(model: &Model, contract: FeatureContract, source: RegionSource) -> Result<()> {
    let kind_ok = matches!(
        (source, contract),
        (RegionSource::Grid, FeatureContract::Grid { .. }) | (RegionSource::Roi, FeatureContract::Roi { .. })
    );
    if !kind_ok {
        return Err(Error::Config(format!("{:?} reads {source:?} features but the store holds {contract:?}", model.variant())));
    }
    if model.region_dim() != Some(contract.region_dim()) {
        return Err(Error::Config(format!(
            "model expects regions of width {:?}, store provides {}",
            model.region_dim(),
            contract.region_dim()
        )));
    }
    Ok(())
}

/// Accuracy summary of one split; `confusion[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub examples: usize,
    pub accuracy: f64,
    /// Per gold class (C, N, E); `None` when the split has no such example.
    pub per_class: [Option<f64>; 3],
    pub class_counts: [usize; 3],
    pub confusion: [[usize; 3]; 3],
}

impl EvalReport {
    pub fn from_confusion(split: impl Into<String>, confusion: [[usize; 3]; 3]) -> Result<Self> {
        let split = split.into();
        let class_counts = confusion.map(|row| row.iter().sum::<usize>());
        let examples: usize = class_counts.iter().sum();
        if examples == 0 {
            return Err(Error::Contract(format!("split {split:?} has no examples to evaluate")));
        }
        let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
        let per_class = std::array::from_fn(|i| (class_counts[i] > 0).then(|| confusion[i][i] as f64 / class_counts[i] as f64));
        Ok(Self { split, examples, accuracy: correct as f64 / examples as f64, per_class, class_counts, confusion })
    }

    pub fn correct(&self) -> usize {
        (0..3).map(|i| self.confusion[i][i]).sum()
    }
}

/// Argmax prediction for every example.
pub fn evaluate(model: &Model, split: &str, examples: &[VEExample], premises: &Premises) -> Result<EvalReport> {
    evaluate_with_loss(model, split, examples, premises).map(|(report, _)| report)
}

/// [`evaluate`] plus the mean cross-entropy over the split.
pub fn evaluate_with_loss(model: &Model, split: &str, examples: &[VEExample], premises: &Premises) -> Result<(EvalReport, f64)> {
    if examples.is_empty() {
        return Err(Error::Contract(format!("split {split:?} has no examples to evaluate")));
    }
    let mut confusion = [[0usize; 3]; 3];
    let mut loss = 0.0;
    for ex in examples {
        let tokens = model.encode(&ex.tokens());
        let logits = model.logits(&tokens, premises.for_example(model, ex)?)?;
        let predicted = Label::argmax(&logits);
        confusion[ex.label.index()][predicted.index()] += 1;
        let z: Vec<f64> = logits.iter().map(|&l| l as f64).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[ex.label.index()];
    }
    Ok((EvalReport::from_confusion(split, confusion)?, loss / examples.len() as f64))
}

/// Predicted label per example, in order.
pub fn predict_all(model: &Model, examples: &[VEExample], premises: &Premises) -> Result<Vec<Label>> {
    examples
        .iter()
        .map(|ex| model.predict(&model.encode(&ex.tokens()), premises.for_example(model, ex)?))
        .collect()
}
