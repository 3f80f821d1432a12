use std::collections::HashMap;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token → row mapping. Row 0 is padding, row 1 the unknown token.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[EmbeddingTable::PAD_INDEX] != PAD_TOKEN || tokens[EmbeddingTable::UNK_INDEX] != UNK_TOKEN
        {
            return Err(Error::Contract("vocabulary must start with the pad and unk tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate().skip(2) {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token_index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(EmbeddingTable::UNK_INDEX)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_index(t.as_ref())).collect()
    }
}

/// Vocabulary and word vectors. Row 0 is padding (always zero), row 1 the
/// unknown-token vector, then one row per known token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocab,
    vectors: Tensor,
}

impl EmbeddingTable {
    pub const PAD_INDEX: usize = 0;
    pub const UNK_INDEX: usize = 1;

    /// Builds a table from `(token, vector)` rows. The unknown-token vector is
    /// zero. Duplicate tokens keep their first vector.
    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut tokens = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        let mut data = vec![0.0; 2 * dim];
        let mut index = HashMap::new();
        for (token, vector) in rows {
            if vector.len() != dim {
                return Err(Error::format(
                    format!("token {token:?}"),
                    format!("vector has {} values, expected {dim}", vector.len()),
                ));
            }
            if token == PAD_TOKEN || token == UNK_TOKEN || index.contains_key(&token) {
                continue;
            }
            index.insert(token.clone(), tokens.len());
            tokens.push(token);
            data.extend(vector);
        }
        let vectors = Tensor::new(vec![tokens.len(), dim], data)?;
        Ok(Self { vocab: Vocab { tokens, index }, vectors })
    }

    /// Rebuilds a table from a token list (as written by [`Self::tokens`])
    /// and its matrix.
    pub fn from_parts(tokens: Vec<String>, vectors: Tensor) -> Result<Self> {
        let vocab = Vocab::from_tokens(tokens)?;
        if vectors.rank() != 2 || vectors.shape()[0] != vocab.len() {
            return Err(Error::Contract(format!(
                "embedding matrix {:?} does not match {} tokens",
                vectors.shape(),
                vocab.len()
            )));
        }
        if vectors.row(Self::PAD_INDEX).iter().any(|&v| v != 0.0) {
            return Err(Error::Contract("pad embedding row must be zero".into()));
        }
        Ok(Self { vocab, vectors })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn into_parts(self) -> (Vocab, Tensor) {
        (self.vocab, self.vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }

    /// Number of rows, pad and unk included.
    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        self.vocab.tokens()
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains(token)
    }

    pub fn token_index(&self, token: &str) -> usize {
        self.vocab.token_index(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode(tokens)
    }
}

/// Looks up `tokens` in `table` (a `V×D` tape variable). Padding positions
/// yield zero rows and never receive gradient.
pub fn embed<T: Scalar>(tape: &mut Tape<'_, T>, table: Var, tokens: &[usize]) -> Result<Var> {
    let size = tape.shape(table).first().copied().unwrap_or(0);
    let rows = tokens
        .iter()
        .map(|&t| match t {
            _ if t >= size => Err(Error::Vocabulary { index: t, size }),
            EmbeddingTable::PAD_INDEX => Ok(None),
            _ => Ok(Some(t)),
        })
        .collect::<Result<Vec<_>>>()?;
    tape.gather_rows(table, &rows)
}
