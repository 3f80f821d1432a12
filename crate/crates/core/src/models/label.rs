use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Entailment class. The integer encoding is fixed: C = 0, N = 1, E = 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Contradiction = 0,
    Neutral = 1,
    Entailment = 2,
}

impl Label {
    pub const COUNT: usize = 3;
    pub const ALL: [Label; 3] = [Label::Contradiction, Label::Neutral, Label::Entailment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// One-letter column code used in result tables.
    pub fn short(self) -> &'static str {
        match self {
            Label::Contradiction => "C",
            Label::Neutral => "N",
            Label::Entailment => "E",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
            Label::Entailment => "entailment",
        }
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn argmax(scores: &[f32; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Self::ALL[best]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            "entailment" => Ok(Label::Entailment),
            other => Err(Error::Contract(format!("unknown label {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_fixed() {
        assert_eq!(Label::ALL.map(Label::index), [0, 1, 2]);
        assert_eq!(Label::from_index(2), Some(Label::Entailment));
        assert_eq!(Label::from_index(3), None);
        assert_eq!("neutral".parse::<Label>().unwrap(), Label::Neutral);
        assert!("-".parse::<Label>().is_err());
        assert_eq!(serde_json::to_string(&Label::Contradiction).unwrap(), "\"contradiction\"");
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(Label::argmax(&[1.0, 1.0, 0.0]), Label::Contradiction);
        assert_eq!(Label::argmax(&[0.0, 2.0, 2.0]), Label::Neutral);
        assert_eq!(Label::argmax(&[0.0, 1.0, 2.0]), Label::Entailment);
    }
}
