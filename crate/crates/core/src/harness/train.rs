use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::eval::{evaluate, evaluate_with_loss, Premises};
use super::optim::{adam_step, AdamHyper, AdamState, DecayMode};
use crate::autograd::Tape;
use crate::dataset::{read_examples, VEExample};
use crate::error::{Error, Result};
use crate::features::{load_embeddings, FeatureStore, DEFAULT_EMBEDDING_DIM};
use crate::models::{cross_entropy, mean_loss, Model, ModelConfig};
use crate::params::ParamStore;

/// Learning-rate halving when validation loss stalls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    pub enabled: bool,
    /// Epochs without a new lowest validation loss before the rate drops.
    pub patience: usize,
    pub factor: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { enabled: true, patience: 3, factor: 0.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPaths {
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    /// Feature directory; unused by the hypothesis-only model.
    pub features: Option<PathBuf>,
    pub embeddings: PathBuf,
    /// Receives `best.veft`, `best.json` and `train_log.jsonl`.
    pub output: PathBuf,
}

/// Optimization settings shared by [`fit`] and [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds parameter initialization and the per-epoch shuffles.
    pub seed: u64,
    pub plateau: PlateauConfig,
    /// Evaluate the training split after every epoch.
    pub track_train_accuracy: bool,
    /// Stop once tracked training accuracy reaches this fraction.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            decay_mode: DecayMode::Decoupled,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            plateau: PlateauConfig::default(),
            track_train_accuracy: false,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.plateau.enabled && (self.plateau.patience == 0 || !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0)) {
            return Err(Error::Config("plateau needs patience ≥ 1 and a factor in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Full training run description, as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds parameter initialization and shuffling; overrides `model.seed`.
    pub seed: u64,
    pub plateau: PlateauConfig,
    pub track_train_accuracy: bool,
    pub stop_at_train_accuracy: Option<f64>,
    pub embedding_dim: usize,
    pub model: ModelConfig,
    pub paths: TrainPaths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(ModelConfig::default(), TrainPaths::default())
    }
}

impl TrainConfig {
    pub fn new(model: ModelConfig, paths: TrainPaths) -> Self {
        let o = TrainOptions::default();
        Self {
            learning_rate: o.learning_rate,
            weight_decay: o.weight_decay,
            decay_mode: o.decay_mode,
            batch_size: o.batch_size,
            epochs: o.epochs,
            seed: o.seed,
            plateau: o.plateau,
            track_train_accuracy: o.track_train_accuracy,
            stop_at_train_accuracy: o.stop_at_train_accuracy,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            model,
            paths,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))
    }

    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            decay_mode: self.decay_mode,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            plateau: self.plateau.clone(),
            track_train_accuracy: self.track_train_accuracy,
            stop_at_train_accuracy: self.stop_at_train_accuracy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        self.model.validate()?;
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example loss over the epoch's batches.
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    /// Rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub epochs: Vec<EpochLog>,
    /// 0 when no epoch ran (the weights are the initialization).
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

/// In-memory training. On return `model` holds the selected weights: the
/// epoch with the best validation accuracy (earliest on ties), or the last
/// epoch when there is no validation split.
pub fn fit(
    model: &mut Model,
    train: &[VEExample],
    val: &[VEExample],
    premises: &Premises,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome> {
    options.validate()?;
    if train.is_empty() && options.epochs > 0 {
        return Err(Error::Contract("training split is empty".into()));
    }
    let encoded: Vec<Vec<usize>> = train.iter().map(|ex| model.encode(&ex.tokens())).collect();
    for ex in train {
        premises.for_example(model, ex)?;
    }

    let mut state = AdamState::new(model.params().iter().map(|(_, p)| p.tensor.numel()));
    let mut hyper = AdamHyper {
        lr: options.learning_rate,
        weight_decay: options.weight_decay,
        decay_mode: options.decay_mode,
        ..AdamHyper::default()
    };
    let mut logs = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0;
    let mut lowest_loss = f64::INFINITY;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..options.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(options.batch_size).enumerate() {
            let batch_loss = train_step(model, train, &encoded, batch, premises, &mut state, &hyper)
                .map_err(|e| diverged(e, epoch + 1, b, batch, train))?;
            loss_sum += batch_loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_accuracy =
            if options.track_train_accuracy { Some(evaluate(model, "train", train, premises)?.accuracy) } else { None };
        let (val_accuracy, val_loss) = if val.is_empty() {
            (None, None)
        } else {
            let (report, loss) = evaluate_with_loss(model, "val", val, premises)?;
            (Some(report.accuracy), Some(loss))
        };
        let log = EpochLog { epoch: epoch + 1, train_loss, train_accuracy, val_accuracy, val_loss, learning_rate: hyper.lr };
        on_epoch(&log);
        logs.push(log);

        if let Some(acc) = val_accuracy {
            if best.as_ref().map_or(true, |(b, _, _)| acc > *b) {
                best = Some((acc, epoch + 1, model.params().clone()));
            }
        }
        if let Some(loss) = val_loss {
            if loss < lowest_loss {
                lowest_loss = loss;
                stale = 0;
            } else {
                stale += 1;
                if options.plateau.enabled && stale >= options.plateau.patience {
                    hyper.lr *= options.plateau.factor;
                    stale = 0;
                }
            }
        }
        if let (Some(target), Some(acc)) = (options.stop_at_train_accuracy, train_accuracy) {
            if acc >= target {
                break;
            }
        }
    }

    let (best_epoch, best_val_accuracy) = match best {
        Some((acc, epoch, params)) => {
            *model.params_mut() = params;
            (epoch, Some(acc))
        }
        None => (logs.len(), None),
    };
    Ok(FitOutcome { epochs: logs, best_epoch, best_val_accuracy })
}

/// One optimizer step on one batch; returns the batch mean loss.
fn train_step(
    model: &mut Model,
    train: &[VEExample],
    encoded: &[Vec<usize>],
    batch: &[usize],
    premises: &Premises,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<f64> {
    let (loss_value, grads, vars) = {
        let mut tape = Tape::<f32>::new();
        let p = model.params().bind(&mut tape);
        let mut losses = Vec::with_capacity(batch.len());
        for &i in batch {
            let out = model.forward(&mut tape, &p, &encoded[i], premises.for_example(model, &train[i])?)?;
            losses.push(cross_entropy(&mut tape, out.logits, train[i].label)?);
        }
        let loss = mean_loss(&mut tape, &losses)?;
        let value = tape.data(loss)[0] as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "batch loss" });
        }
        (value, tape.backward(loss)?, p)
    };

    let trainable: Vec<bool> = model.params().iter().map(|(_, p)| p.trainable).collect();
    let sizes: Vec<usize> = model.params().iter().map(|(_, p)| p.tensor.numel()).collect();
    let fallback: Vec<Vec<f32>> = sizes
        .iter()
        .zip(vars.vars())
        .map(|(&n, &v)| if grads.raw(v).is_none() { vec![0.0; n] } else { Vec::new() })
        .collect();
    let grad_refs: Vec<Option<&[f32]>> = vars
        .vars()
        .iter()
        .enumerate()
        .map(|(i, &v)| trainable[i].then(|| grads.raw(v).unwrap_or(&fallback[i])))
        .collect();
    let mut values: Vec<&mut [f32]> = model.params_mut().iter_mut().map(|p| p.tensor.data_mut()).collect();
    adam_step(&mut values, &grad_refs, state, hyper)?;
    Ok(loss_value)
}

fn diverged(e: Error, epoch: usize, batch: usize, indices: &[usize], train: &[VEExample]) -> Error {
    match e {
        Error::NonFinite { op } => {
            let pairs: Vec<&str> = indices.iter().map(|&i| train[i].pair_id.as_str()).collect();
            let dump = serde_json::json!({ "epoch": epoch, "batch": batch, "op": op, "pair_ids": pairs });
            Error::Diverged(dump.to_string())
        }
        other => other,
    }
}

/// Paths written by [`train`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl TrainArtifacts {
    pub fn under(dir: &Path) -> Self {
        Self { checkpoint: dir.join("best.veft"), log: dir.join("train_log.jsonl") }
    }
}

/// Builds a model from the configured files, checks that every image has
/// features, trains, and writes the selected checkpoint and a JSONL log.
pub fn train(config: &TrainConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<(Model, FitOutcome, TrainArtifacts)> {
    config.validate()?;
    let options = config.options();
    let paths = &config.paths;
    let train_set = read_examples(&paths.train)?;
    let val_set = match &paths.val {
        Some(p) => read_examples(p)?,
        None => Vec::new(),
    };
    let store = match (&paths.features, config.model.variant.region_source()) {
        (Some(dir), Some(_)) => Some(FeatureStore::open(dir)?),
        (None, Some(_)) => return Err(Error::Config(format!("{:?} needs paths.features", config.model.variant))),
        (_, None) => None,
    };
    if let Some(store) = &store {
        let missing = store.missing(train_set.iter().chain(&val_set).map(|e| e.image_id.as_str()));
        if !missing.is_empty() {
            return Err(Error::Preflight { missing });
        }
    }

    let vocab: BTreeSet<String> = train_set.iter().flat_map(VEExample::tokens).collect();
    let file = std::fs::File::open(&paths.embeddings).map_err(|e| Error::io(&paths.embeddings, e))?;
    let loaded = load_embeddings(
        std::io::BufReader::new(file),
        &vocab,
        config.embedding_dim,
        &paths.embeddings.display().to_string(),
    )?;
    let region_dim = store.as_ref().map(|s| s.contract().region_dim());
    let model_config = ModelConfig { seed: config.seed, ..config.model.clone() };
    let coverage = loaded.coverage();
    let mut model = Model::new(model_config, loaded.table, region_dim)?;
    let premises = Premises::load(&model, store.as_ref(), train_set.iter().chain(&val_set))?;

    std::fs::create_dir_all(&paths.output).map_err(|e| Error::io(&paths.output, e))?;
    let artifacts = TrainArtifacts::under(&paths.output);
    let log_file = std::fs::File::create(&artifacts.log).map_err(|e| Error::io(&artifacts.log, e))?;
    let mut log = std::io::BufWriter::new(log_file);
    let start = serde_json::json!({
        "event": "start",
        "variant": config.model.variant,
        "train_examples": train_set.len(),
        "val_examples": val_set.len(),
        "embedding_coverage": coverage,
        "parameters": model.params().numel(),
    });
    writeln!(log, "{start}").map_err(|e| Error::io(&artifacts.log, e))?;

    let mut write_err = None;
    let mut on_epoch = on_epoch;
    let result = fit(&mut model, &train_set, &val_set, &premises, &options, |e| {
        let mut line = serde_json::to_value(e).expect("epoch log serializes");
        line["event"] = "epoch".into();
        if let Err(err) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_err.get_or_insert(err);
        }
        on_epoch(e);
    });
    if let Some(err) = write_err {
        return Err(Error::io(&artifacts.log, err));
    }
    let outcome = match result {
        Ok(o) => o,
        Err(Error::Diverged(dump)) => {
            let _ = writeln!(log, "{{\"event\":\"diverged\",\"detail\":{dump}}}");
            let _ = log.flush();
            return Err(Error::Diverged(dump));
        }
        Err(e) => return Err(e),
    };
    save_checkpoint(&model, &artifacts.checkpoint, outcome.best_epoch, outcome.best_val_accuracy)?;
    let done = serde_json::json!({
        "event": "done",
        "best_epoch": outcome.best_epoch,
        "best_val_accuracy": outcome.best_val_accuracy,
    });
    writeln!(log, "{done}").and_then(|_| log.flush()).map_err(|e| Error::io(&artifacts.log, e))?;
    Ok((model, outcome, artifacts))
}
