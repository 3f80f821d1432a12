use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use super::{is_image_id, VEExample};
use crate::error::{Error, Result};

/// Image-id sets defining the three splits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new(train: BTreeSet<String>, val: BTreeSet<String>, test: BTreeSet<String>) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    /// Sets must be non-empty and pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        for (name, set) in self.named() {
            if set.is_empty() {
                return Err(Error::Spec(format!("{name} split lists no images")));
            }
        }
        let pairs = [("train", &self.train, "val", &self.val), ("train", &self.train, "test", &self.test), ("val", &self.val, "test", &self.test)];
        for (a, sa, b, sb) in pairs {
            let shared: Vec<&String> = sa.intersection(sb).take(5).collect();
            if !shared.is_empty() {
                return Err(Error::Spec(format!("{a} and {b} splits share images, e.g. {shared:?}")));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &BTreeSet<String>); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    /// Loads three split-list files.
    pub fn from_files(train: &Path, val: &Path, test: &Path) -> Result<Self> {
        Self::new(read_split_list(train)?, read_split_list(val)?, read_split_list(test)?)
    }
}

/// Reads one `<digits>.jpg` per line; blank lines are ignored.
pub fn read_split_list(path: &Path) -> Result<BTreeSet<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !is_image_id(id) {
            return Err(Error::format(
                format!("{}:{}", path.display(), i + 1),
                format!("{id:?} is not an image filename"),
            ));
        }
        out.insert(id.to_owned());
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition {
    pub train: Vec<VEExample>,
    pub val: Vec<VEExample>,
    pub test: Vec<VEExample>,
    /// Pair ids of examples whose image is in no split, in input order.
    pub dropped: Vec<String>,
}

impl Partition {
    pub fn splits(&self) -> [(&'static str, &[VEExample]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    pub fn kept(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Routes every example to the split holding its image. Each split comes
/// out sorted by `(image_id, pair_id)`.
pub fn partition_by_image(examples: Vec<VEExample>, spec: &SplitSpec) -> Result<Partition> {
    spec.validate()?;
    let mut out = Partition::default();
    for ex in examples {
        let dest = if spec.train.contains(&ex.image_id) {
            &mut out.train
        } else if spec.val.contains(&ex.image_id) {
            &mut out.val
        } else if spec.test.contains(&ex.image_id) {
            &mut out.test
        } else {
            out.dropped.push(ex.pair_id);
            continue;
        };
        dest.push(ex);
    }
    for split in [&mut out.train, &mut out.val, &mut out.test] {
        split.sort_by(|a, b| (&a.image_id, &a.pair_id).cmp(&(&b.image_id, &b.pair_id)));
    }
    Ok(out)
}
