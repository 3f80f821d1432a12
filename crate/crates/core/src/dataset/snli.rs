use std::io::BufRead;

use serde::Deserialize;

use super::{is_image_id, VEExample};
use crate::error::{Error, Result};
use crate::models::Label;

/// Gold label SNLI uses when annotators reached no consensus.
pub const NO_CONSENSUS: &str = "-";

/// One SNLI pair, under the corpus' own field names.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct SnliRecord {
    #[serde(rename = "sentence1")]
    pub premise_text: String,
    #[serde(rename = "sentence2")]
    pub hypothesis_text: String,
    pub gold_label: String,
    #[serde(rename = "captionID")]
    pub caption_id: String,
    #[serde(rename = "pairID")]
    pub pair_id: String,
}

impl SnliRecord {
    /// Records without a consensus label take no part in the dataset.
    pub fn skip(&self) -> bool {
        self.gold_label == NO_CONSENSUS
    }

    pub fn label(&self) -> Option<Label> {
        self.gold_label.parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based.
    pub line: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedSnli {
    pub records: Vec<SnliRecord>,
    pub malformed: Vec<MalformedLine>,
}

/// Parses line-delimited SNLI JSON. Blank lines are ignored. Malformed lines
/// (bad JSON, missing fields, unknown gold label) are collected, or abort the
/// parse when `strict` is set.
pub fn parse_snli<R: BufRead>(reader: R, strict: bool) -> Result<ParsedSnli> {
    let mut parsed = ParsedSnli::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<snli stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str::<SnliRecord>(&line).map_err(|e| e.to_string()).and_then(|r| {
            if r.skip() || r.label().is_some() {
                Ok(r)
            } else {
                Err(format!("unknown gold_label {:?}", r.gold_label))
            }
        });
        match record {
            Ok(r) => parsed.records.push(r),
            Err(detail) if strict => return Err(Error::format(format!("line {}", i + 1), detail)),
            Err(detail) => parsed.malformed.push(MalformedLine { line: i + 1, detail }),
        }
    }
    Ok(parsed)
}

/// Flickr30k filename of the caption a record's premise came from:
/// `"3416050480.jpg#4"` → `"3416050480.jpg"`.
pub fn derive_image_id(record: &SnliRecord) -> Result<String> {
    let provenance = || Error::Provenance { pair_id: record.pair_id.clone(), caption_id: record.caption_id.clone() };
    match record.caption_id.split_once('#') {
        Some((image, index)) if is_image_id(image) && !index.is_empty() => Ok(image.to_owned()),
        _ => Err(provenance()),
    }
}

/// Converts a record to an example. No-consensus records yield `None`.
pub fn to_example(record: &SnliRecord) -> Result<Option<VEExample>> {
    let Some(label) = record.label() else {
        return Ok(None);
    };
    let image_id = derive_image_id(record)?;
    Ok(Some(VEExample::new(record.pair_id.clone(), image_id, record.hypothesis_text.clone(), label)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str, caption: &str) -> String {
        serde_json::json!({
            "annotator_labels": [label],
            "captionID": caption,
            "gold_label": label,
            "pairID": format!("{caption}r1e"),
            "sentence1": "Two dogs run through a field.",
            "sentence1_binary_parse": "( ( Two dogs ) ( run ... ) )",
            "sentence2": "There are animals outdoors.",
        })
        .to_string()
    }

    #[test]
    fn empty_stream() {
        assert_eq!(parse_snli(&b""[..], true).unwrap(), ParsedSnli::default());
    }

    #[test]
    fn one_line_populates_every_field() {
        let text = line("entailment", "3416050480.jpg#4");
        let parsed = parse_snli(text.as_bytes(), true).unwrap();
        assert_eq!(
            parsed.records,
            [SnliRecord {
                premise_text: "Two dogs run through a field.".into(),
                hypothesis_text: "There are animals outdoors.".into(),
                gold_label: "entailment".into(),
                caption_id: "3416050480.jpg#4".into(),
                pair_id: "3416050480.jpg#4r1e".into(),
            }]
        );
        let ex = to_example(&parsed.records[0]).unwrap().unwrap();
        assert_eq!(ex.image_id, "3416050480.jpg");
        assert_eq!(ex.label, Label::Entailment);
    }

    #[test]
    fn no_consensus_is_flagged_and_dropped() {
        let parsed = parse_snli(line("-", "1.jpg#0").as_bytes(), true).unwrap();
        assert!(parsed.records[0].skip());
        assert_eq!(to_example(&parsed.records[0]).unwrap(), None);
    }

    #[test]
    fn malformed_lines_are_collected_with_numbers() {
        let text = format!("{}\n\nnot json\n{}\n{{\"sentence1\":\"x\"}}\n", line("neutral", "1.jpg#0"), line("maybe", "2.jpg#1"));
        let parsed = parse_snli(text.as_bytes(), false).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.malformed.iter().map(|m| m.line).collect::<Vec<_>>(), [3, 4, 5]);
        let err = parse_snli(text.as_bytes(), true).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn image_id_derivation() {
        let rec = |caption: &str| SnliRecord {
            premise_text: String::new(),
            hypothesis_text: String::new(),
            gold_label: "neutral".into(),
            caption_id: caption.into(),
            pair_id: "p7".into(),
        };
        assert_eq!(derive_image_id(&rec("3416050480.jpg#4")).unwrap(), "3416050480.jpg");
        assert_eq!(derive_image_id(&rec("1.jpg#0")).unwrap(), "1.jpg");
        for bad in ["garbage", "", "1.jpg", "1.jpg#", "x1.jpg#0", "#3", "1.png#2"] {
            match derive_image_id(&rec(bad)) {
                Err(Error::Provenance { pair_id, .. }) => assert_eq!(pair_id, "p7"),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
    }
}
