//! EVE and the baseline classifiers, assembled from [`crate::layers`].
//!
//! | variant          | text branch                 | image branch                           | fusion           |
//! |------------------|-----------------------------|----------------------------------------|------------------|
//! | `EVE_IMAGE/ROI`  | self-attention → GRU        | self-attention → text-image attention  | projected product|
//! | `TOP_DOWN/BOTTOM_UP` | GRU                     | text-image attention                   | projected product|
//! | `HYPOTHESIS_ONLY`| GRU                         | none                                   | none             |
//! | `RELATIONAL`     | GRU                         | g over all ordered region pairs, summed| f MLP            |
//!
//! Grid variants read flattened `d²×k` feature maps, ROI variants read
//! `n×dim` proposal features; the two EVE variants share one implementation.

mod label;
mod loss;

use serde::{Deserialize, Serialize};

pub use label::Label;
pub use loss::{cross_entropy, mean_loss};

use crate::autograd::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{embed, fuse, mlp_classify, CrossAttention, EmbeddingTable, Gru, Linear, Mlp, SelfAttention, Vocab};
use crate::params::{Bound, ParamBuilder, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    EveImage,
    EveRoi,
    HypothesisOnly,
    TopDown,
    BottomUp,
    Relational,
}

/// Where a variant's image premise comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSource {
    Grid,
    Roi,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::EveImage,
        Variant::EveRoi,
        Variant::HypothesisOnly,
        Variant::TopDown,
        Variant::BottomUp,
        Variant::Relational,
    ];

    pub fn region_source(self) -> Option<RegionSource> {
        match self {
            Variant::EveImage | Variant::TopDown | Variant::Relational => Some(RegionSource::Grid),
            Variant::EveRoi | Variant::BottomUp => Some(RegionSource::Roi),
            Variant::HypothesisOnly => None,
        }
    }

    /// Row label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::EveImage => "EVE-Image",
            Variant::EveRoi => "EVE-ROI",
            Variant::HypothesisOnly => "Hypothesis Only",
            Variant::TopDown => "Attention Top-Down",
            Variant::BottomUp => "Attention Bottom-Up",
            Variant::Relational => "Relational Network",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase().replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown model variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub gru_hidden: usize,
    /// Query/key width of every attention layer.
    pub attention_dim: usize,
    /// Width of the attended image vector.
    pub region_value_dim: usize,
    pub fusion_dim: usize,
    pub mlp_hidden: usize,
    /// Width of the relational pair function g.
    pub relation_hidden: usize,
    pub text_self_attention: bool,
    pub image_self_attention: bool,
    /// Adds the input back onto self-attention outputs.
    pub residual: bool,
    pub train_embeddings: bool,
    /// Unit-normalize region vectors before the model sees them. Unset means
    /// on for ROI features and off for grid features.
    pub normalize_regions: Option<bool>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::EveImage,
            gru_hidden: 256,
            attention_dim: 256,
            region_value_dim: 512,
            fusion_dim: 512,
            mlp_hidden: 512,
            relation_hidden: 256,
            text_self_attention: true,
            image_self_attention: true,
            residual: true,
            train_embeddings: false,
            normalize_regions: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn normalizes_regions(&self) -> bool {
        self.normalize_regions.unwrap_or(self.variant.region_source() == Some(RegionSource::Roi))
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("gru_hidden", self.gru_hidden),
            ("attention_dim", self.attention_dim),
            ("region_value_dim", self.region_value_dim),
            ("fusion_dim", self.fusion_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("relation_hidden", self.relation_hidden),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `[3]`, ordered (contradiction, neutral, entailment).
    pub logits: Var,
    /// `L×L` text self-attention weights.
    pub text_attention: Option<Var>,
    /// `N×N` region self-attention weights.
    pub region_self_attention: Option<Var>,
    /// `[N]` text-image attention weights.
    pub region_attention: Option<Var>,
    /// Number of region pairs evaluated by the relational function.
    pub pair_evaluations: usize,
}

impl Forward {
    fn logits_only(logits: Var) -> Self {
        Self { logits, text_attention: None, region_self_attention: None, region_attention: None, pair_evaluations: 0 }
    }
}

#[derive(Clone, Debug)]
struct Parts {
    embedding: ParamId,
    gru: Gru,
    text_attention: Option<SelfAttention>,
    region_attention: Option<SelfAttention>,
    cross: Option<CrossAttention>,
    fusion: Option<(Linear, Linear)>,
    relation: Option<Mlp>,
    head: Mlp,
}

/// A classifier: configuration, vocabulary and parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    region_dim: Option<usize>,
    vocab: Vocab,
    params: ParamStore,
    parts: Parts,
}

impl Model {
    /// Builds a freshly initialized model. `region_dim` is the width of the
    /// region vectors and is required by every variant with an image branch.
    pub fn new(config: ModelConfig, embeddings: EmbeddingTable, region_dim: Option<usize>) -> Result<Self> {
        config.validate()?;
        let needs_regions = config.variant.region_source().is_some();
        let region_dim = match (needs_regions, region_dim) {
            (true, Some(0)) | (true, None) => {
                return Err(Error::Config(format!("{:?} needs a positive region width", config.variant)))
            }
            (true, d) => d,
            (false, _) => None,
        };

        let emb_dim = embeddings.dim();
        let (vocab, vectors) = embeddings.into_parts();
        let mut params = ParamStore::new();
        let mut b = ParamBuilder::new(&mut params, config.seed);
        let embedding = b.tensor("embedding", vectors, config.train_embeddings)?;
        let gru = Gru::new(&mut b, "text_gru", emb_dim, config.gru_hidden)?;
        let h = config.gru_hidden;

        let is_eve = matches!(config.variant, Variant::EveImage | Variant::EveRoi);
        let text_attention = if is_eve && config.text_self_attention {
            Some(SelfAttention::new(&mut b, "text_self_attention", emb_dim, config.attention_dim, emb_dim)?)
        } else {
            None
        };
        let region_attention = match region_dim {
            Some(d) if is_eve && config.image_self_attention => {
                Some(SelfAttention::new(&mut b, "region_self_attention", d, config.attention_dim, d)?)
            }
            _ => None,
        };

        let (cross, fusion, relation, head) = match (config.variant, region_dim) {
            (Variant::HypothesisOnly, _) => (None, None, None, Mlp::new(&mut b, "classifier", &[h, config.mlp_hidden, 3])?),
            (Variant::Relational, Some(d)) => {
                let r = config.relation_hidden;
                let g = Mlp::new(&mut b, "relation", &[2 * d + h, r, r])?;
                let f = Mlp::new(&mut b, "classifier", &[r, config.mlp_hidden, 3])?;
                (None, None, Some(g), f)
            }
            (_, Some(d)) => {
                let v = config.region_value_dim;
                let cross = CrossAttention::new(&mut b, "text_image_attention", h, d, config.attention_dim, v)?;
                let mut fb = b.scoped("fusion");
                let fusion = (
                    Linear::new(&mut fb, "text", h, config.fusion_dim, true)?,
                    Linear::new(&mut fb, "image", v, config.fusion_dim, true)?,
                );
                let head = Mlp::new(&mut b, "classifier", &[config.fusion_dim, config.mlp_hidden, 3])?;
                (Some(cross), Some(fusion), None, head)
            }
            (_, None) => unreachable!("image variants validated above"),
        };

        let parts = Parts { embedding, gru, text_attention, region_attention, cross, fusion, relation, head };
        Ok(Self { config, region_dim, vocab, params, parts })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn region_dim(&self) -> Option<usize> {
        self.region_dim
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode(tokens)
    }

    /// Runs the variant's forward pass. `regions` must be given exactly when
    /// the variant has an image branch.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        tokens: &[usize],
        regions: Option<&Tensor>,
    ) -> Result<Forward> {
        match (self.config.variant, regions) {
            (Variant::HypothesisOnly, None) => self.hypothesis_only_forward(tape, p, tokens),
            (Variant::HypothesisOnly, Some(_)) => {
                Err(Error::Contract("the hypothesis-only model does not accept an image premise".into()))
            }
            (_, None) => Err(Error::EmptyPremise),
            (Variant::EveImage | Variant::EveRoi, Some(r)) => self.eve_forward(tape, p, tokens, r),
            (Variant::TopDown | Variant::BottomUp, Some(r)) => self.attention_baseline_forward(tape, p, tokens, r),
            (Variant::Relational, Some(r)) => self.rn_forward(tape, p, tokens, r),
        }
    }

    /// Logits in `f32` for one example.
    pub fn logits(&self, tokens: &[usize], regions: Option<&Tensor>) -> Result<[f32; 3]> {
        let mut tape = Tape::<f32>::new();
        let p = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &p, tokens, regions)?;
        let l = tape.data(out.logits);
        Ok([l[0], l[1], l[2]])
    }

    pub fn predict(&self, tokens: &[usize], regions: Option<&Tensor>) -> Result<Label> {
        Ok(Label::argmax(&self.logits(tokens, regions)?))
    }

    fn expect_variant(&self, allowed: &[Variant], op: &str) -> Result<()> {
        if allowed.contains(&self.config.variant) {
            Ok(())
        } else {
            Err(Error::Contract(format!("{op} called on a {:?} model", self.config.variant)))
        }
    }

    /// Text branch: embedding, optional self-attention, GRU. Returns the
    /// final state (`[hidden]`) and the attention weights when present.
    fn encode_text<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        tokens: &[usize],
        attention: Option<&SelfAttention>,
    ) -> Result<(Var, Option<Var>)> {
        let visible: Vec<bool> = tokens.iter().map(|&t| t != EmbeddingTable::PAD_INDEX).collect();
        if !visible.iter().any(|&v| v) {
            return Err(Error::EmptyHypothesis);
        }
        let mut x = embed(tape, p.var(self.parts.embedding), tokens)?;
        let mut weights = None;
        if let Some(attn) = attention {
            let (y, w) = attn.forward(tape, p, x, Some(&visible))?;
            x = if self.config.residual { tape.add(y, x)? } else { y };
            weights = Some(w);
        }
        let h0 = tape.constant(Tensor::zeros(&[self.config.gru_hidden]));
        let out = self.parts.gru.forward(tape, p, x, h0, Some(&visible))?;
        Ok((out.final_state, weights))
    }

    fn region_input<T: Scalar>(&self, tape: &mut Tape<'_, T>, regions: &Tensor) -> Result<Var> {
        let d = self.region_dim.expect("image variants carry a region width");
        match *regions.shape() {
            [0, _] => Err(Error::EmptyPremise),
            [_, w] if w == d => Ok(tape.constant(regions.cast())),
            ref s => Err(Error::dim("regions", format!("shape {s:?}, expected [N, {d}]"))),
        }
    }

    fn attend_and_classify<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        text: Var,
        regions: Var,
    ) -> Result<(Var, Var)> {
        let cross = self.parts.cross.as_ref().expect("attention variants have text-image attention");
        let (attended, weights) = cross.forward(tape, p, text, regions)?;
        let (pt, pi) = self.parts.fusion.as_ref().expect("attention variants have fusion projections");
        let fused = fuse(tape, p, text, attended, pt, pi)?;
        let logits = mlp_classify(tape, p, &self.parts.head, fused)?;
        Ok((logits, weights))
    }

    /// EVE: self-attended text into a GRU; self-attended regions weighted by
    /// text-image attention; projected product fusion; MLP head.
    pub fn eve_forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        tokens: &[usize],
        regions: &Tensor,
    ) -> Result<Forward> {
        self.expect_variant(&[Variant::EveImage, Variant::EveRoi], "eve_forward")?;
        let (text, text_attention) = self.encode_text(tape, p, tokens, self.parts.text_attention.as_ref())?;
        let mut r = self.region_input(tape, regions)?;
        let mut region_self_attention = None;
        if let Some(attn) = &self.parts.region_attention {
            let (y, w) = attn.forward(tape, p, r, None)?;
            r = if self.config.residual { tape.add(y, r)? } else { y };
            region_self_attention = Some(w);
        }
        let (logits, weights) = self.attend_and_classify(tape, p, text, r)?;
        Ok(Forward {
            logits,
            text_attention,
            region_self_attention,
            region_attention: Some(weights),
            pair_evaluations: 0,
        })
    }

    /// GRU text feature straight into the classifier; no image path.
    pub fn hypothesis_only_forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, p: &Bound, tokens: &[usize]) -> Result<Forward> {
        self.expect_variant(&[Variant::HypothesisOnly], "hypothesis_only_forward")?;
        let (text, _) = self.encode_text(tape, p, tokens, None)?;
        let logits = mlp_classify(tape, p, &self.parts.head, text)?;
        Ok(Forward::logits_only(logits))
    }

    /// Top-down / bottom-up attention: GRU text feature, text-image attention
    /// over raw regions, projected product fusion.
    pub fn attention_baseline_forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        tokens: &[usize],
        regions: &Tensor,
    ) -> Result<Forward> {
        self.expect_variant(&[Variant::TopDown, Variant::BottomUp], "attention_baseline_forward")?;
        let (text, _) = self.encode_text(tape, p, tokens, None)?;
        let r = self.region_input(tape, regions)?;
        let (logits, weights) = self.attend_and_classify(tape, p, text, r)?;
        Ok(Forward { region_attention: Some(weights), ..Forward::logits_only(logits) })
    }

    /// Relational network: `f(Σ_{i,j} g([r_i; r_j; text]))` over all N²
    /// ordered pairs, self-pairs included.
    pub fn rn_forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        tokens: &[usize],
        regions: &Tensor,
    ) -> Result<Forward> {
        self.expect_variant(&[Variant::Relational], "rn_forward")?;
        let (text, _) = self.encode_text(tape, p, tokens, None)?;
        let r = self.region_input(tape, regions)?;
        let n = tape.shape(r)[0];
        let pairs = n * n;
        let left: Vec<Option<usize>> = (0..pairs).map(|k| Some(k / n)).collect();
        let right: Vec<Option<usize>> = (0..pairs).map(|k| Some(k % n)).collect();
        let left = tape.gather_rows(r, &left)?;
        let right = tape.gather_rows(r, &right)?;
        let text_row = tape.reshape(text, &[1, self.config.gru_hidden])?;
        let text_rows = tape.gather_rows(text_row, &vec![Some(0); pairs])?;
        let joint = tape.concat(&[left, right, text_rows], 1)?;

        let g = self.parts.relation.as_ref().expect("relational variant has g");
        let related = g.forward(tape, p, joint)?;
        let related = tape.relu(related)?;
        let pair_evaluations = tape.shape(related)[0];
        let pooled = tape.sum(related, Axis::Dim(0))?;
        let logits = mlp_classify(tape, p, &self.parts.head, pooled)?;
        Ok(Forward { pair_evaluations, ..Forward::logits_only(logits) })
    }
}
