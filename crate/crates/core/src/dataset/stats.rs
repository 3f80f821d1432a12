use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{tokenize, Partition, VEExample, TOKENIZER_VERSION};
use crate::models::Label;

/// Largest allowed distance of any class fraction from one third.
pub const BALANCE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub images: usize,
    pub entailment: usize,
    pub neutral: usize,
    pub contradiction: usize,
    pub examples: usize,
    /// Distinct hypothesis tokens.
    pub vocabulary: usize,
}

impl SplitStats {
    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Contradiction => self.contradiction,
            Label::Neutral => self.neutral,
            Label::Entailment => self.entailment,
        }
    }

    pub fn balance(&self) -> BalanceReport {
        let fractions = Label::ALL.map(|l| {
            if self.examples == 0 {
                0.0
            } else {
                self.count(l) as f64 / self.examples as f64
            }
        });
        let max_deviation = if self.examples == 0 {
            0.0
        } else {
            fractions.iter().map(|f| (f - 1.0 / 3.0).abs()).fold(0.0, f64::max)
        };
        BalanceReport { fractions, max_deviation, imbalanced: max_deviation > BALANCE_TOLERANCE }
    }
}

/// Class fractions in label order (C, N, E).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub fractions: [f64; 3],
    pub max_deviation: f64,
    pub imbalanced: bool,
}

/// Exact counts for one split.
pub fn compute_stats(split: &[VEExample]) -> SplitStats {
    let mut images = BTreeSet::new();
    let mut vocab = BTreeSet::new();
    let mut s = SplitStats { examples: split.len(), ..SplitStats::default() };
    for ex in split {
        images.insert(ex.image_id.as_str());
        vocab.extend(tokenize(&ex.hypothesis));
        match ex.label {
            Label::Contradiction => s.contradiction += 1,
            Label::Neutral => s.neutral += 1,
            Label::Entailment => s.entailment += 1,
        }
    }
    s.images = images.len();
    s.vocabulary = vocab.len();
    s
}

/// Per-split statistics laid out like the published dataset table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tokenizer: String,
    /// What the vocabulary counts cover.
    pub vocabulary_scope: String,
    pub splits: Vec<(String, SplitStats)>,
    pub balance: Vec<(String, BalanceReport)>,
}

impl DatasetStats {
    pub fn from_splits<'a>(splits: impl IntoIterator<Item = (&'a str, &'a [VEExample])>) -> Self {
        let splits: Vec<(String, SplitStats)> = splits.into_iter().map(|(n, s)| (n.to_owned(), compute_stats(s))).collect();
        let balance = splits.iter().map(|(n, s)| (n.clone(), s.balance())).collect();
        Self {
            tokenizer: TOKENIZER_VERSION.to_owned(),
            vocabulary_scope: "hypothesis tokens".to_owned(),
            splits,
            balance,
        }
    }

    pub fn from_partition(p: &Partition) -> Self {
        Self::from_splits(p.splits())
    }

    pub fn split(&self, name: &str) -> Option<&SplitStats> {
        self.splits.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Rows: images, entailment, neutral, contradiction, vocabulary size;
    /// one column per split.
    pub fn render(&self) -> String {
        let mut out = format!("{:<14}", "");
        for (name, _) in &self.splits {
            out.push_str(&format!("{name:>12}"));
        }
        out.push('\n');
        let rows: [(&str, fn(&SplitStats) -> usize); 5] = [
            ("#Image", |s| s.images),
            ("#Entailment", |s| s.entailment),
            ("#Neutral", |s| s.neutral),
            ("#Contradiction", |s| s.contradiction),
            ("Vocabulary", |s| s.vocabulary),
        ];
        for (label, get) in rows {
            out.push_str(&format!("{label:<14}"));
            for (_, s) in &self.splits {
                out.push_str(&format!("{:>12}", get(s)));
            }
            out.push('\n');
        }
        out.push_str(&format!("tokenizer {} ({})\n", self.tokenizer, self.vocabulary_scope));
        for (name, b) in &self.balance {
            if b.imbalanced {
                out.push_str(&format!(
                    "warning: {name} class balance off by {:.2}% (C/N/E fractions {:.4}/{:.4}/{:.4})\n",
                    100.0 * b.max_deviation,
                    b.fractions[0],
                    b.fractions[1],
                    b.fractions[2]
                ));
            }
        }
        out
    }
}
