//! SNLI-VE construction: SNLI records are re-keyed by the Flickr30k image
//! their premise caption describes, routed into image-disjoint splits, and
//! summarized per split.
//!
//! ```text
//! SNLI jsonl ──parse_snli──▶ SnliRecord ──to_example──▶ VEExample
//!                                                          │
//!                            split lists ──▶ SplitSpec ──partition_by_image──▶ train / val / test
//! ```

mod build;
mod io;
mod snli;
mod split;
mod stats;
mod tokenizer;

use serde::{Deserialize, Serialize};

pub use build::{build_dataset, write_partition, Build, SourceReport};
pub use io::{read_examples, read_examples_from, write_examples, write_examples_to, FORMAT_NAME, FORMAT_VERSION};
pub use snli::{derive_image_id, parse_snli, to_example, MalformedLine, ParsedSnli, SnliRecord, NO_CONSENSUS};
pub use split::{partition_by_image, read_split_list, Partition, SplitSpec};
pub use stats::{compute_stats, BalanceReport, DatasetStats, SplitStats, BALANCE_TOLERANCE};
pub use tokenizer::{tokenize, TOKENIZER_VERSION};

use crate::error::{Error, Result};
use crate::models::Label;

/// One visual entailment example: the image premise by filename, the raw
/// hypothesis string, and the gold label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VEExample {
    pub pair_id: String,
    pub image_id: String,
    pub hypothesis: String,
    pub label: Label,
    /// Fields this version does not know about, kept verbatim.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl VEExample {
    pub fn new(pair_id: impl Into<String>, image_id: impl Into<String>, hypothesis: impl Into<String>, label: Label) -> Self {
        Self {
            pair_id: pair_id.into(),
            image_id: image_id.into(),
            hypothesis: hypothesis.into(),
            label,
            extra: serde_json::Map::new(),
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.hypothesis)
    }

    /// Checks the example invariants: `<digits>.jpg` image id and a
    /// hypothesis with at least one token.
    pub fn validate(&self) -> Result<()> {
        if !is_image_id(&self.image_id) {
            return Err(Error::Contract(format!("image id {:?} is not <digits>.jpg", self.image_id)));
        }
        if self.tokens().is_empty() {
            return Err(Error::EmptyHypothesis);
        }
        Ok(())
    }
}

/// `<digits>.jpg`
pub fn is_image_id(s: &str) -> bool {
    s.strip_suffix(".jpg").is_some_and(|stem| !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()))
}

/// Outcome of converting parsed SNLI records to examples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conversion {
    pub examples: Vec<VEExample>,
    /// Records with no consensus label.
    pub skipped: usize,
    /// Pair ids of records whose hypothesis tokenizes to nothing.
    pub empty_hypotheses: Vec<String>,
}

/// Converts records in order. A record whose caption id does not name a
/// Flickr30k image aborts the conversion with a provenance error.
pub fn convert_records(records: &[SnliRecord]) -> Result<Conversion> {
    let mut out = Conversion::default();
    for r in records {
        match to_example(r)? {
            None => out.skipped += 1,
            Some(ex) if ex.tokens().is_empty() => out.empty_hypotheses.push(ex.pair_id),
            Some(ex) => out.examples.push(ex),
        }
    }
    Ok(out)
}
