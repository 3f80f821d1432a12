use std::path::{Path, PathBuf};

use eve_core::dataset::{build_dataset as build, read_examples, write_partition, DatasetStats, SplitSpec};
use eve_core::features::{hypothesis_only_ceiling, synth_splits, write_synth_task, FeatureStore, SplitSizes, SynthConfig};
use eve_core::harness::{
    evaluate, load_checkpoint, report_json, report_table, rows_from_records, run_gradient_suite, train as run_training,
    EvalRecord, Premises, TrainConfig,
};
use eve_core::{Error, Variant};
use serde::Serialize;

use crate::{BuildArgs, EvalArgs, GradcheckArgs, ReportArgs, StatsArgs, SynthArgs, TrainArgs};

pub struct Failure {
    pub message: String,
    pub validation: bool,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { validation: e.is_validation(), message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn invalid(message: impl Into<String>) -> Failure {
    Failure { message: message.into(), validation: true }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure { message: format!("{}: {e}", path.display()), validation: false })
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure { message: format!("{}: {e}", path.display()), validation: false })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    write_text(path, &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"))
}

fn split_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct MalformedEntry<'a> {
    source: String,
    line: usize,
    detail: &'a str,
}

pub fn build_dataset(a: BuildArgs) -> Outcome {
    let spec = SplitSpec::from_files(&a.train_images, &a.val_images, &a.test_images)?;
    let built = build(&a.snli, &spec, a.strict)?;
    let paths = write_partition(&a.out, &built.partition)?;

    let malformed: Vec<MalformedEntry> = built
        .sources
        .iter()
        .flat_map(|s| s.malformed.iter().map(|m| MalformedEntry { source: s.path.display().to_string(), line: m.line, detail: &m.detail }))
        .collect();
    for m in &malformed {
        eprintln!("warning: {}:{}: {}", m.source, m.line, m.detail);
    }
    let report = serde_json::json!({
        "records": built.sources.iter().map(|s| s.records).sum::<usize>(),
        "no_consensus_skipped": built.skipped,
        "empty_hypotheses": built.empty_hypotheses,
        "dropped_unlisted_images": built.partition.dropped.len(),
        "malformed": malformed,
        "outputs": paths,
    });
    write_json(&a.out.join("build_report.json"), &report)?;
    write_json(&a.out.join("stats.json"), &built.stats)?;
    print!("{}", built.stats.render());
    println!(
        "kept {} examples, {} without consensus, {} on unlisted images, {} malformed lines",
        built.partition.kept(),
        built.skipped,
        built.partition.dropped.len(),
        malformed.len()
    );
    Ok(())
}

pub fn stats(a: StatsArgs) -> Outcome {
    let mut splits = Vec::new();
    for path in &a.files {
        splits.push((split_name(path), read_examples(path)?));
    }
    let stats = DatasetStats::from_splits(splits.iter().map(|(n, xs)| (n.as_str(), xs.as_slice())));
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    } else {
        print!("{}", stats.render());
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Outcome {
    let config: SynthConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    let d = SplitSizes::default();
    let sizes = SplitSizes { train: a.train.unwrap_or(d.train), val: a.val.unwrap_or(d.val), test: a.test.unwrap_or(d.test) };
    let (paths, store) = write_synth_task(&a.out, &config, sizes, a.seed)?;
    write_json(&a.out.join("synth_config.json"), &serde_json::json!({ "config": config, "sizes": sizes, "seed": a.seed }))?;
    let [_, _, test] = synth_splits(&config, sizes, a.seed)?;
    println!("wrote {} images of features to {}", store.manifest().entries.len(), paths.features.display());
    println!("splits: {} / {} / {} examples", sizes.train, sizes.val, sizes.test);
    if !test.examples.is_empty() {
        println!("hypothesis-only ceiling on test: {:.2}%", 100.0 * hypothesis_only_ceiling(&test.examples));
    }
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => TrainConfig::from_json(&read_text(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = &a.variant {
        c.model.variant = v.parse::<Variant>()?;
    }
    let set = |slot: &mut PathBuf, v: &Option<PathBuf>| {
        if let Some(v) = v {
            *slot = v.clone();
        }
    };
    set(&mut c.paths.train, &a.train);
    set(&mut c.paths.embeddings, &a.embeddings);
    set(&mut c.paths.output, &a.output);
    if a.val.is_some() {
        c.paths.val = a.val.clone();
    }
    if a.features.is_some() {
        c.paths.features = a.features.clone();
    }
    c.embedding_dim = a.embedding_dim.unwrap_or(c.embedding_dim);
    c.epochs = a.epochs.unwrap_or(c.epochs);
    c.learning_rate = a.lr.unwrap_or(c.learning_rate);
    c.weight_decay = a.weight_decay.unwrap_or(c.weight_decay);
    c.batch_size = a.batch_size.unwrap_or(c.batch_size);
    c.seed = a.seed.unwrap_or(c.seed);
    if a.no_plateau {
        c.plateau.enabled = false;
    }
    for (name, p) in [("train", &c.paths.train), ("embeddings", &c.paths.embeddings), ("output", &c.paths.output)] {
        if p.as_os_str().is_empty() {
            return Err(invalid(format!("paths.{name} is not set (config file or --{name})")));
        }
    }
    Ok(c)
}

pub fn train(a: TrainArgs) -> Outcome {
    let config = train_config(&a)?;
    let quiet = a.quiet;
    let (_, outcome, artifacts) = run_training(&config, |e| {
        if !quiet {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{:.2}%", 100.0 * x));
            println!(
                "epoch {:>4}  loss {:.4}  train {}  val {}  lr {:e}",
                e.epoch,
                e.train_loss,
                opt(e.train_accuracy),
                opt(e.val_accuracy),
                e.learning_rate
            );
        }
    })?;
    write_json(&config.paths.output.join("config.json"), &config)?;
    println!("checkpoint {} (epoch {})", artifacts.checkpoint.display(), outcome.best_epoch);
    if let Some(acc) = outcome.best_val_accuracy {
        println!("best validation accuracy {:.2}%", 100.0 * acc);
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Outcome {
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    let examples = read_examples(&a.data)?;
    let store = a.features.as_deref().map(FeatureStore::open).transpose()?;
    let premises = Premises::load(&model, store.as_ref(), &examples)?;
    let split = a.split.clone().unwrap_or_else(|| split_name(&a.data));
    let report = evaluate(&model, &split, &examples, &premises)?;
    let record = EvalRecord { model: a.name.clone().unwrap_or_else(|| model.variant().display_name().to_owned()), report };
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{:.2}", 100.0 * x));
    let r = &record.report;
    println!(
        "{} on {}: accuracy {:.2}%  C {}  N {}  E {}  ({} examples)",
        record.model,
        r.split,
        100.0 * r.accuracy,
        pct(r.per_class[0]),
        pct(r.per_class[1]),
        pct(r.per_class[2]),
        r.examples
    );
    if let Some(out) = &a.out {
        write_json(out, &record)?;
    }
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Outcome {
    let start = std::time::Instant::now();
    let results = run_gradient_suite();
    let elapsed = start.elapsed().as_secs_f64();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
    } else {
        for r in &results {
            println!("{} {:<40} max rel error {:.3e}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.max_rel_error);
        }
        println!("{} checks in {elapsed:.2}s", results.len());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(invalid(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Outcome {
    let mut records = Vec::new();
    for path in &a.records {
        let record: EvalRecord =
            serde_json::from_str(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    let rows = rows_from_records(&records)?;
    let text = if a.json { report_json(&rows) + "\n" } else { report_table(&rows) };
    match &a.out {
        Some(out) => write_text(out, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
