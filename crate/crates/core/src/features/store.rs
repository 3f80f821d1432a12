use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::regions::{flatten_grid, FeatureGrid, RoiSet};
use super::veft::{self, NamedTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GRID_TENSOR: &str = "grid";
pub const ROI_TENSOR: &str = "rois";
pub const BOX_TENSOR: &str = "boxes";

/// Declared feature kind and the shape every file must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureContract {
    /// `k×d×d` maps in a tensor named `grid`.
    Grid { k: usize, d: usize },
    /// `n×dim` features (`1 ≤ n ≤ max_regions`) named `rois`, optional `n×4` `boxes`.
    Roi { dim: usize, max_regions: usize },
}

impl FeatureContract {
    /// Width of one region vector.
    pub fn region_dim(&self) -> usize {
        match *self {
            FeatureContract::Grid { k, .. } => k,
            FeatureContract::Roi { dim, .. } => dim,
        }
    }

    pub fn is_roi(&self) -> bool {
        matches!(self, FeatureContract::Roi { .. })
    }

    /// Checks one decoded file and returns its regions as `N×D` rows.
    pub fn regions(&self, tensors: &[NamedTensor]) -> Result<Tensor> {
        match *self {
            FeatureContract::Grid { k, d } => {
                let t = veft::find(tensors, GRID_TENSOR)
                    .ok_or_else(|| Error::format("feature file", format!("no {GRID_TENSOR:?} tensor")))?;
                if t.shape() != [k, d, d] {
                    return Err(Error::format("feature file", format!("grid shape {:?}, contract [{k}, {d}, {d}]", t.shape())));
                }
                let grid = FeatureGrid::new(t.clone()).map_err(|e| Error::format("feature file", e.to_string()))?;
                Ok(flatten_grid(&grid))
            }
            FeatureContract::Roi { dim, max_regions } => {
                let t = veft::find(tensors, ROI_TENSOR)
                    .ok_or_else(|| Error::format("feature file", format!("no {ROI_TENSOR:?} tensor")))?;
                if t.rank() != 2 || t.shape()[1] != dim {
                    return Err(Error::format("feature file", format!("ROI shape {:?}, contract [n, {dim}]", t.shape())));
                }
                let boxes = veft::find(tensors, BOX_TENSOR).cloned();
                let set = RoiSet::new(t.clone(), boxes, max_regions).map_err(|e| Error::format("feature file", e.to_string()))?;
                Ok(set.into_features())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestError {
    pub image_id: String,
    pub detail: String,
}

/// `manifest.json` of a feature directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub contract: FeatureContract,
    /// image id → file name relative to the manifest.
    pub entries: BTreeMap<String, String>,
    /// Images the producer could not process.
    #[serde(default)]
    pub errors: Vec<ManifestError>,
    /// Images whose features are a whole-image fallback region.
    #[serde(default)]
    pub fallback: Vec<String>,
    /// Producer identification, e.g. backbone name and weights hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<String>,
}

impl Manifest {
    pub fn new(contract: FeatureContract) -> Self {
        Self { contract, entries: BTreeMap::new(), errors: Vec::new(), fallback: Vec::new(), producer: None }
    }
}

/// A directory of VEFT files indexed by a manifest. Read-only once opened,
/// so it can be shared between threads.
#[derive(Clone, Debug)]
pub struct FeatureStore {
    root: PathBuf,
    manifest: Manifest,
}

impl FeatureStore {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        Ok(Self { root: root.to_owned(), manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn contract(&self) -> FeatureContract {
        self.manifest.contract
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.manifest.entries.contains_key(image_id)
    }

    pub fn path_of(&self, image_id: &str) -> Option<PathBuf> {
        self.manifest.entries.get(image_id).map(|f| self.root.join(f))
    }

    /// Regions of one image as `N×D` rows, checked against the contract.
    pub fn load(&self, image_id: &str) -> Result<Tensor> {
        let path = self
            .path_of(image_id)
            .ok_or_else(|| Error::Preflight { missing: vec![image_id.to_owned()] })?;
        let tensors = veft::read(&path)?;
        self.manifest.contract.regions(&tensors).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format { location: path.display().to_string(), detail },
            other => other,
        })
    }

    /// Image ids (deduplicated, in first-seen order) with no manifest entry
    /// or no file on disk.
    pub fn missing<'a>(&self, image_ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        image_ids
            .into_iter()
            .filter(|id| seen.insert(*id))
            .filter(|id| self.path_of(id).map_or(true, |p| !p.is_file()))
            .map(str::to_owned)
            .collect()
    }

    /// Loads every entry; returns the failures.
    pub fn validate_all(&self) -> Vec<ManifestError> {
        self.manifest
            .entries
            .keys()
            .filter_map(|id| self.load(id).err().map(|e| ManifestError { image_id: id.clone(), detail: e.to_string() }))
            .collect()
    }
}

/// Writes feature files and the manifest of a new store.
pub struct FeatureStoreWriter {
    root: PathBuf,
    manifest: Manifest,
}

impl FeatureStoreWriter {
    pub fn create(root: &Path, contract: FeatureContract) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root: root.to_owned(), manifest: Manifest::new(contract) })
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    /// Writes one image's tensors after checking them against the contract.
    pub fn insert(&mut self, image_id: &str, tensors: &[NamedTensor]) -> Result<()> {
        self.manifest.contract.regions(tensors)?;
        let file = format!("{}.veft", image_id.trim_end_matches(".jpg"));
        if file.contains(['/', '\\']) || file.starts_with('.') {
            return Err(Error::Contract(format!("image id {image_id:?} is not a plain file name")));
        }
        veft::write(&self.root.join(&file), tensors)?;
        self.manifest.entries.insert(image_id.to_owned(), file);
        Ok(())
    }

    pub fn insert_grid(&mut self, image_id: &str, grid: &FeatureGrid) -> Result<()> {
        self.insert(image_id, &[(GRID_TENSOR.to_owned(), grid.tensor().clone())])
    }

    pub fn insert_rois(&mut self, image_id: &str, rois: &RoiSet) -> Result<()> {
        let mut tensors = vec![(ROI_TENSOR.to_owned(), rois.features().clone())];
        if let Some(b) = rois.boxes() {
            tensors.push((BOX_TENSOR.to_owned(), b.clone()));
        }
        self.insert(image_id, &tensors)
    }

    pub fn finish(self) -> Result<FeatureStore> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(FeatureStore { root: self.root, manifest: self.manifest })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let contract = FeatureContract::Grid { k: 2, d: 2 };
        let mut w = FeatureStoreWriter::create(dir.path(), contract).unwrap();
        let grid = FeatureGrid::new(Tensor::new(vec![2, 2, 2], (0..8).map(|i| i as f32).collect()).unwrap()).unwrap();
        w.insert_grid("5.jpg", &grid).unwrap();
        assert!(w.insert_grid("6.jpg", &FeatureGrid::new(Tensor::zeros(&[3, 2, 2])).unwrap()).is_err());
        let store = w.finish().unwrap();

        let store2 = FeatureStore::open(dir.path()).unwrap();
        assert_eq!(store2.manifest(), store.manifest());
        let r = store2.load("5.jpg").unwrap();
        assert_eq!(r.shape(), &[4, 2]);
        assert_eq!(r.row(1), &[1.0, 5.0]);
        assert!(matches!(store2.load("7.jpg"), Err(Error::Preflight { .. })));
        assert_eq!(store2.missing(["5.jpg", "7.jpg", "7.jpg"]), ["7.jpg"]);
        assert!(store2.validate_all().is_empty());

        std::fs::remove_file(dir.path().join("5.veft")).unwrap();
        assert_eq!(store2.missing(["5.jpg"]), ["5.jpg"]);
        assert_eq!(store2.validate_all().len(), 1);
    }

    #[test]
    fn roi_store_checks_contract() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = FeatureStoreWriter::create(dir.path(), FeatureContract::Roi { dim: 3, max_regions: 2 }).unwrap();
        let rois = RoiSet::new(Tensor::zeros(&[2, 3]), Some(Tensor::zeros(&[2, 4])), 2).unwrap();
        w.insert_rois("1.jpg", &rois).unwrap();
        assert!(w.insert("2.jpg", &[(ROI_TENSOR.into(), Tensor::zeros(&[3, 3]))]).is_err());
        assert!(w.insert("2.jpg", &[(ROI_TENSOR.into(), Tensor::zeros(&[1, 4]))]).is_err());
        assert!(w.insert("../x.jpg", &[(ROI_TENSOR.into(), Tensor::zeros(&[1, 3]))]).is_err());
        w.manifest_mut().fallback.push("1.jpg".into());
        let store = w.finish().unwrap();
        assert_eq!(store.load("1.jpg").unwrap().shape(), &[2, 3]);

        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "roi");
        assert_eq!(v["entries"]["1.jpg"], "1.veft");
    }

    #[test]
    fn externally_written_manifest_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        veft::write(&dir.path().join("a.veft"), &[(GRID_TENSOR.into(), Tensor::zeros(&[4, 1, 1]))]).unwrap();
        let manifest = r#"{"kind":"grid","k":4,"d":1,"entries":{"9.jpg":"a.veft"},
            "errors":[{"image_id":"8.jpg","detail":"undecodable"}],"producer":"resnet101@abc"}"#;
        std::fs::write(dir.path().join(MANIFEST_FILE), manifest).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        assert_eq!(store.load("9.jpg").unwrap().shape(), &[1, 4]);
        assert_eq!(store.manifest().errors.len(), 1);
        std::fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        assert!(matches!(FeatureStore::open(dir.path()), Err(Error::Format { .. })));
    }
}
