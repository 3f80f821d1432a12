//! A grounded toy task with a computable answer.
//!
//! A scene places `(object, attribute)` slots in cells of a `d×d` grid. Each
//! occupied cell's feature vector is three one-hot blocks
//! `[object | attribute | object×attribute]`; every cell carries seeded
//! uniform noise. Hypotheses read "a {object} is {attribute}" and are
//! labelled by rule against the scene:
//!
//! | scene holds                             | label         |
//! |-----------------------------------------|---------------|
//! | the object with that attribute          | entailment    |
//! | the object with a different attribute   | contradiction |
//! | no such object                          | neutral       |
//!
//! Examples come in groups of three consecutive items that share one
//! hypothesis and take the labels C, N, E in turn, so the hypothesis alone
//! carries (almost) no label information.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::regions::FeatureGrid;
use super::store::{FeatureContract, FeatureStore, FeatureStoreWriter};
use crate::dataset::{tokenize, write_examples, VEExample};
use crate::error::{Error, Result};
use crate::models::Label;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub objects: Vec<String>,
    pub attributes: Vec<String>,
    /// Distinct objects per scene.
    pub objects_per_scene: usize,
    pub grid_side: usize,
    /// Half-width of the uniform noise added to every feature.
    pub noise: f32,
    pub embedding_dim: usize,
    /// Word vectors depend only on this seed, so every split shares them.
    pub embedding_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self {
            objects: words(&["dog", "cat", "horse", "bird"]),
            attributes: words(&["running", "sitting", "sleeping", "jumping"]),
            objects_per_scene: 2,
            grid_side: 3,
            noise: 0.1,
            embedding_dim: super::DEFAULT_EMBEDDING_DIM,
            embedding_seed: 0,
        }
    }
}

impl SynthConfig {
    /// Channels per cell: object, attribute and joint one-hot blocks.
    pub fn channels(&self) -> usize {
        let (o, a) = (self.objects.len(), self.attributes.len());
        o + a + o * a
    }

    pub fn contract(&self) -> FeatureContract {
        FeatureContract::Grid { k: self.channels(), d: self.grid_side }
    }

    pub fn hypotheses(&self) -> usize {
        self.objects.len() * self.attributes.len()
    }

    pub fn hypothesis(&self, object: usize, attribute: usize) -> String {
        format!("a {} is {}", self.objects[object], self.attributes[attribute])
    }

    /// Object and attribute indices of a grammatical hypothesis.
    pub fn parse_hypothesis(&self, text: &str) -> Option<(usize, usize)> {
        let tokens = tokenize(text);
        match tokens.as_slice() {
            [a, o, is, t] if a == "a" && is == "is" => {
                Some((self.objects.iter().position(|x| x == o)?, self.attributes.iter().position(|x| x == t)?))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for w in self.objects.iter().chain(&self.attributes) {
            if tokenize(w) != [w.clone()] || w == "a" || w == "is" || !seen.insert(w) {
                return Err(Error::Config(format!("inventory word {w:?} must be a distinct single lowercase token")));
            }
        }
        if self.attributes.len() < 2 {
            return Err(Error::Config("contradictions need at least two attributes".into()));
        }
        if self.objects_per_scene == 0 {
            return Err(Error::Config("scenes need at least one object".into()));
        }
        if self.objects.len() <= self.objects_per_scene {
            return Err(Error::Config(format!(
                "neutral scenes need an object outside each scene: {} objects for {} per scene",
                self.objects.len(),
                self.objects_per_scene
            )));
        }
        if self.grid_side == 0 || self.objects_per_scene > self.grid_side * self.grid_side {
            return Err(Error::Config(format!(
                "a {0}×{0} grid cannot hold {1} objects",
                self.grid_side, self.objects_per_scene
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be finite and non-negative".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        Ok(())
    }

    /// `a`, `is`, then objects and attributes, each with a seeded vector.
    pub fn embedding_rows(&self) -> Vec<(String, Vec<f32>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.embedding_seed);
        ["a", "is"]
            .iter()
            .map(|s| s.to_string())
            .chain(self.objects.iter().cloned())
            .chain(self.attributes.iter().cloned())
            .map(|w| {
                let v = (0..self.embedding_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                (w, v)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub object: usize,
    pub attribute: usize,
    /// Grid cell `row·d + col`.
    pub cell: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub slots: Vec<Slot>,
}

impl Scene {
    /// The labelling rule.
    pub fn label(&self, object: usize, attribute: usize) -> Label {
        match self.slots.iter().find(|s| s.object == object) {
            Some(s) if s.attribute == attribute => Label::Entailment,
            Some(_) => Label::Contradiction,
            None => Label::Neutral,
        }
    }

    /// `k×d×d` features for this scene.
    pub fn render(&self, config: &SynthConfig, rng: &mut impl Rng) -> FeatureGrid {
        let (o, a, d) = (config.objects.len(), config.attributes.len(), config.grid_side);
        let k = config.channels();
        let cells = d * d;
        let mut data: Vec<f32> = (0..k * cells)
            .map(|_| if config.noise > 0.0 { rng.gen_range(-config.noise..=config.noise) } else { 0.0 })
            .collect();
        for s in &self.slots {
            for channel in [s.object, o + s.attribute, o + a + s.object * a + s.attribute] {
                data[channel * cells + s.cell] += 1.0;
            }
        }
        FeatureGrid::new(Tensor::new(vec![k, d, d], data).expect("shape matches")).expect("finite features")
    }
}

/// One generated split.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub examples: Vec<VEExample>,
    /// Aligned with `examples`.
    pub scenes: Vec<Scene>,
    /// Aligned with `examples`.
    pub grids: Vec<FeatureGrid>,
}

impl SynthData {
    /// The rule's label for example `i`.
    pub fn oracle(&self, config: &SynthConfig, i: usize) -> Label {
        let (o, a) = config.parse_hypothesis(&self.examples[i].hypothesis).expect("generated hypotheses parse");
        self.scenes[i].label(o, a)
    }
}

/// Generates `count` examples, one scene (and one image) each, with image ids
/// `first_image_id.jpg`, `first_image_id+1.jpg`, ….
pub fn synth_generate(config: &SynthConfig, count: usize, seed: u64, first_image_id: u64) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_obj, n_attr) = (config.objects.len(), config.attributes.len());
    let cells = config.grid_side * config.grid_side;
    // Hypothesis order is shuffled once per split so splits shorter than
    // 3·hypotheses still cover a spread of objects and attributes.
    let mut order: Vec<(usize, usize)> = (0..n_obj).flat_map(|o| (0..n_attr).map(move |a| (o, a))).collect();
    order.shuffle(&mut rng);

    let mut data = SynthData { examples: Vec::with_capacity(count), scenes: Vec::new(), grids: Vec::new() };
    for i in 0..count {
        let (object, attribute) = order[(i / 3) % order.len()];
        let label = Label::ALL[i % 3];
        let mut others: Vec<usize> = (0..n_obj).filter(|&x| x != object).collect();
        others.shuffle(&mut rng);
        let mut placed: Vec<(usize, usize)> = match label {
            Label::Entailment => vec![(object, attribute)],
            Label::Contradiction => {
                let other_attr = (attribute + rng.gen_range(1..n_attr)) % n_attr;
                vec![(object, other_attr)]
            }
            Label::Neutral => Vec::new(),
        };
        while placed.len() < config.objects_per_scene {
            let o = others.pop().expect("validated: enough other objects");
            placed.push((o, rng.gen_range(0..n_attr)));
        }
        let mut free: Vec<usize> = (0..cells).collect();
        free.shuffle(&mut rng);
        let slots = placed.into_iter().zip(free).map(|((object, attribute), cell)| Slot { object, attribute, cell }).collect();
        let scene = Scene { slots };
        debug_assert_eq!(scene.label(object, attribute), label);
        let image_id = format!("{}.jpg", first_image_id + i as u64);
        data.grids.push(scene.render(config, &mut rng));
        data.examples.push(VEExample::new(format!("synth-{seed}-{i}"), image_id, config.hypothesis(object, attribute), label));
        data.scenes.push(scene);
    }
    Ok(data)
}

/// Best accuracy any predictor that sees only the hypothesis string can
/// reach on `examples`: per distinct hypothesis, the count of its most
/// frequent label, summed and divided by the total.
pub fn hypothesis_only_ceiling(examples: &[VEExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for ex in examples {
        counts.entry(ex.hypothesis.as_str()).or_default()[ex.label.index()] += 1;
    }
    let best: usize = counts.values().map(|c| *c.iter().max().expect("three counts")).sum();
    best as f64 / examples.len() as f64
}

/// Sizes of the generated splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 200, val: 60, test: 60 }
    }
}

/// Paths of a synthetic task written by [`write_synth_task`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub features: PathBuf,
    pub embeddings: PathBuf,
}

impl SynthPaths {
    pub fn under(dir: &Path) -> Self {
        Self {
            train: dir.join("train.jsonl"),
            val: dir.join("val.jsonl"),
            test: dir.join("test.jsonl"),
            features: dir.join("features"),
            embeddings: dir.join("embeddings.txt"),
        }
    }
}

/// Train, val and test splits (seeds `seed`, `seed+1`, `seed+2`) over
/// disjoint image ids.
pub fn synth_splits(config: &SynthConfig, sizes: SplitSizes, seed: u64) -> Result<[SynthData; 3]> {
    const FIRST_IMAGE: u64 = 1_000_000;
    let train = synth_generate(config, sizes.train, seed, FIRST_IMAGE)?;
    let val = synth_generate(config, sizes.val, seed.wrapping_add(1), FIRST_IMAGE + sizes.train as u64)?;
    let test = synth_generate(config, sizes.test, seed.wrapping_add(2), FIRST_IMAGE + (sizes.train + sizes.val) as u64)?;
    Ok([train, val, test])
}

/// Writes the three splits as dataset files, all grids into one feature
/// store, and the word vectors as an embedding text file.
pub fn write_synth_task(dir: &Path, config: &SynthConfig, sizes: SplitSizes, seed: u64) -> Result<(SynthPaths, FeatureStore)> {
    let splits = synth_splits(config, sizes, seed)?;
    let paths = SynthPaths::under(dir);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut store = FeatureStoreWriter::create(&paths.features, config.contract())?;
    for (split, path) in splits.iter().zip([&paths.train, &paths.val, &paths.test]) {
        write_examples(path, &split.examples)?;
        for (ex, grid) in split.examples.iter().zip(&split.grids) {
            store.insert_grid(&ex.image_id, grid)?;
        }
    }
    let file = std::fs::File::create(&paths.embeddings).map_err(|e| Error::io(&paths.embeddings, e))?;
    super::write_embeddings(std::io::BufWriter::new(file), &config.embedding_rows())
        .map_err(|e| Error::io(&paths.embeddings, e))?;
    let store = store.finish()?;
    Ok((paths, store))
}
