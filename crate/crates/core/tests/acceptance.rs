//! Acceptance gate. Criteria run one after another inside a single test so
//! that wall-clock limits are measured without competing test threads; each
//! prints one PASS/FAIL line and the test fails if any criterion does.
//!
//! Criterion 5 checks the real SNLI-VE build when `EVE_SNLI_DIR` names a
//! directory holding `snli_1.0_train.jsonl`, `snli_1.0_dev.jsonl`,
//! `snli_1.0_test.jsonl` and the image lists `train_images.txt`,
//! `val_images.txt`, `test_images.txt`; otherwise it runs the synthetic
//! corpus properties.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use eve_core::dataset::{
    build_dataset, partition_by_image, read_examples_from, write_examples_to, SplitSpec, BALANCE_TOLERANCE,
};
use eve_core::features::{hypothesis_only_ceiling, synth_splits, veft, write_synth_task, SplitSizes, SynthData};
use eve_core::harness::{evaluate, fit, run_gradient_suite, train, Premises, TrainConfig, TrainOptions, TrainPaths};
use eve_core::layers::EmbeddingTable;
use eve_core::{Label, Model, ModelConfig, SynthConfig, Tape, Tensor, VEExample, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tiny(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        gru_hidden: 8,
        attention_dim: 4,
        region_value_dim: 6,
        fusion_dim: 5,
        mlp_hidden: 7,
        relation_hidden: 6,
        seed,
        ..ModelConfig::default()
    }
}

fn tiny_table(rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let rows = ["a", "dog", "cat", "is", "red", "running"]
        .iter()
        .map(|w| (w.to_string(), (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    EmbeddingTable::from_rows(4, rows).unwrap()
}

fn random_regions(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Tensor {
    Tensor::new(vec![n, width], (0..n * width).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap()
}

fn synth_premises(model: &Model, splits: &[SynthData]) -> Premises {
    Premises::from_grids(
        model,
        splits.iter().flat_map(|s| s.examples.iter().zip(&s.grids).map(|(e, g)| (e.image_id.as_str(), g))),
    )
}

fn synth_model(config: &SynthConfig, model: ModelConfig) -> Model {
    let table = EmbeddingTable::from_rows(config.embedding_dim, config.embedding_rows()).unwrap();
    Model::new(model, table, Some(config.contract().region_dim())).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let results = run_gradient_suite();
    let elapsed = start.elapsed();
    let names: Vec<&str> = results.iter().map(|r| r.name.as_str()).collect();
    let models = ["EVE-Image", "EVE-ROI", "Relational Network", "Attention Top-Down"];
    let covered = models.iter().all(|m| names.iter().any(|n| n.ends_with(m)));
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    check(
        failed.is_empty() && covered && worst < 1e-3 && elapsed < Duration::from_secs(60),
        format!(
            "{} checks, worst relative error {worst:.2e} (< 1e-3), {:.1}s (< 60s), failing {failed:?}, models covered {covered}",
            results.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn check_rows(w: &[f32], cols: usize, visible: Option<&[bool]>, what: &str) -> Result<(), String> {
    for (r, row) in w.chunks(cols).enumerate() {
        let sum: f64 = row.iter().map(|&x| x as f64).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("{what} row {r} sums to {sum}"));
        }
        for (c, &x) in row.iter().enumerate() {
            if x < 0.0 {
                return Err(format!("{what} weight ({r},{c}) = {x} is negative"));
            }
            if visible.is_some_and(|v| !v[c]) && x != 0.0 {
                return Err(format!("{what} weight ({r},{c}) on a masked position is {x}"));
            }
        }
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let region_width = 5;
    let variants = [Variant::EveRoi, Variant::BottomUp, Variant::Relational];
    let mut worst_perm = 0.0f32;
    let mut masked_checked = 0;
    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let variant = variants[i as usize % variants.len()];
        let model = Model::new(tiny(variant, i), tiny_table(&mut rng), Some(region_width)).unwrap();
        let words = ["a", "dog", "cat", "is", "red", "running"];
        let len = rng.gen_range(1..=6);
        let mut tokens: Vec<usize> = (0..len).map(|_| model.encode(&[*words.choose(&mut rng).unwrap()])[0]).collect();
        for _ in 0..rng.gen_range(0..=3) {
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, EmbeddingTable::PAD_INDEX);
        }
        let visible: Vec<bool> = tokens.iter().map(|&t| t != EmbeddingTable::PAD_INDEX).collect();
        let n = rng.gen_range(1..=6);
        let regions = random_regions(&mut rng, n, region_width);

        let mut tape = Tape::<f32>::new();
        let p = model.params().bind(&mut tape);
        let out = model.forward(&mut tape, &p, &tokens, Some(&regions)).map_err(|e| format!("instance {i}: {e}"))?;
        let at = |e: String| format!("instance {i} ({variant:?}): {e}");
        if let Some(w) = out.text_attention {
            check_rows(tape.data(w), tokens.len(), Some(&visible), "text attention").map_err(at)?;
            masked_checked += visible.iter().filter(|v| !**v).count();
        }
        if let Some(w) = out.region_self_attention {
            check_rows(tape.data(w), n, None, "region self-attention").map_err(at)?;
        }
        if let Some(w) = out.region_attention {
            check_rows(tape.data(w), n, None, "text-image attention").map_err(at)?;
        }
        let base = model.logits(&tokens, Some(&regions)).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permuted = model.logits(&tokens, Some(&regions.select_rows(&order))).unwrap();
        let diff = base.iter().zip(&permuted).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        worst_perm = worst_perm.max(diff);
    }
    check(
        worst_perm <= 1e-5,
        format!("1000 instances: rows sum to 1 within 1e-6, non-negative, {masked_checked} masked columns exactly 0; worst ROI-permutation logit change {worst_perm:.2e} (<= 1e-5)"),
    )
}

fn criterion_3() -> Outcome {
    let config = SynthConfig::default();
    let sizes = SplitSizes::default();
    let splits = synth_splits(&config, sizes, 0).unwrap();
    let mut model = synth_model(&config, ModelConfig::new(Variant::EveImage));
    let premises = synth_premises(&model, &splits);
    let options = TrainOptions {
        epochs: 200,
        track_train_accuracy: true,
        stop_at_train_accuracy: Some(0.95),
        ..TrainOptions::default()
    };
    let start = Instant::now();
    let out = fit(&mut model, &splits[0].examples, &[], &premises, &options, |_| {}).unwrap();
    let elapsed = start.elapsed();
    let last = out.epochs.last().unwrap();
    let acc = last.train_accuracy.unwrap();
    check(
        splits[0].examples.len() == 200 && acc >= 0.95 && out.epochs.len() <= 200 && elapsed < Duration::from_secs(300),
        format!(
            "{} training examples, lr {} batch {}: train accuracy {:.1}% (>= 95%) after {} epochs (<= 200) in {:.0}s (< 300s)",
            splits[0].examples.len(),
            options.learning_rate,
            options.batch_size,
            100.0 * acc,
            last.epoch,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let config = SynthConfig::default();
    let splits = synth_splits(&config, SplitSizes { train: 1200, val: 120, test: 300 }, 0).unwrap();
    let test = &splits[2].examples;

    let mut by_hypothesis: BTreeMap<&str, BTreeSet<Label>> = BTreeMap::new();
    for ex in test {
        by_hypothesis.entry(&ex.hypothesis).or_default().insert(ex.label);
    }
    let all_three = by_hypothesis.values().all(|labels| labels.len() == 3);
    // Enumeration oracle: best any hypothesis-only rule can do is the
    // majority label of each hypothesis string.
    let ceiling = hypothesis_only_ceiling(test);

    let mut ho = synth_model(&config, ModelConfig::new(Variant::HypothesisOnly));
    let none = Premises::none();
    fit(&mut ho, &splits[0].examples, &splits[1].examples, &none, &TrainOptions { epochs: 10, ..TrainOptions::default() }, |_| {})
        .unwrap();
    let ho_acc = evaluate(&ho, "test", test, &none).unwrap().accuracy;

    let mut eve = synth_model(&config, ModelConfig::new(Variant::EveImage));
    let premises = synth_premises(&eve, &splits);
    let out = fit(&mut eve, &splits[0].examples, &splits[1].examples, &premises, &TrainOptions { epochs: 30, ..TrainOptions::default() }, |_| {})
        .unwrap();
    let eve_acc = evaluate(&eve, "test", test, &premises).unwrap().accuracy;
    check(
        all_three && ceiling <= 0.40 && ho_acc <= 0.40 && eve_acc >= 0.90,
        format!(
            "{} test hypotheses each under all three labels: {all_three}; hypothesis-only ceiling {:.1}% and trained accuracy {:.1}% (<= 40%); EVE-Image {:.1}% (>= 90%, checkpoint epoch {})",
            by_hypothesis.len(),
            100.0 * ceiling,
            100.0 * ho_acc,
            100.0 * eve_acc,
            out.best_epoch
        ),
    )
}

/// Published SNLI-VE counts: images, entailment, neutral, contradiction, vocabulary.
const SNLI_VE_COUNTS: [(&str, [usize; 5]); 3] = [
    ("train", [29_783, 176_932, 176_045, 176_550, 29_550]),
    ("val", [1_000, 5_959, 5_960, 5_939, 6_576]),
    ("test", [1_000, 5_973, 5_964, 5_964, 6_592]),
];

fn criterion_5_real(dir: &Path) -> Outcome {
    let snli: Vec<PathBuf> = ["train", "dev", "test"].iter().map(|s| dir.join(format!("snli_1.0_{s}.jsonl"))).collect();
    let spec = SplitSpec::from_files(&dir.join("train_images.txt"), &dir.join("val_images.txt"), &dir.join("test_images.txt"))
        .map_err(|e| e.to_string())?;
    let built = build_dataset(&snli, &spec, false).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let mut vocab_notes = Vec::new();
    for (name, expected) in SNLI_VE_COUNTS {
        let s = built.stats.split(name).unwrap();
        let got = [s.images, s.entailment, s.neutral, s.contradiction];
        if got != expected[..4] {
            problems.push(format!("{name}: counts {got:?}, expected {:?}", &expected[..4]));
        }
        if s.vocabulary != expected[4] {
            problems.push(format!(
                "{name}: vocabulary {} vs {} under tokenizer {}; investigate the tokenizer",
                s.vocabulary,
                expected[4],
                eve_core::dataset::TOKENIZER_VERSION
            ));
        }
        vocab_notes.push(format!("{name} vocabulary {}", s.vocabulary));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("real data: all counts match exactly; {}", vocab_notes.join(", "))
        } else {
            format!("real data: {}", problems.join("; "))
        },
    )
}

fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<VEExample>, SplitSpec, BTreeSet<String>) {
    let images: Vec<String> = (0..rng.gen_range(3..40)).map(|i| format!("{}.jpg", 100 + i)).collect();
    let mut sets: [BTreeSet<String>; 3] = Default::default();
    let mut unlisted = BTreeSet::new();
    for (i, img) in images.iter().enumerate() {
        // Every split gets at least one image; the rest go anywhere, or nowhere.
        let slot = if i < 3 { i } else { rng.gen_range(0..4) };
        match slot {
            3 => {
                unlisted.insert(img.clone());
            }
            s => {
                sets[s].insert(img.clone());
            }
        }
    }
    let examples = (0..rng.gen_range(0..200))
        .map(|k| {
            VEExample::new(format!("p{k}"), images.choose(rng).unwrap().clone(), "a dog", Label::ALL[rng.gen_range(0..3)])
        })
        .collect();
    let [train, val, test] = sets;
    (examples, SplitSpec::new(train, val, test).unwrap(), unlisted)
}

fn criterion_5_synthetic() -> Outcome {
    let mut flagged = 0;
    for case in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let (examples, spec, unlisted) = random_corpus(&mut rng);
        let input = examples.clone();
        let part = partition_by_image(examples, &spec).map_err(|e| format!("corpus {case}: {e}"))?;
        let at = |m: &str| format!("corpus {case}: {m}");

        let ids = |xs: &[VEExample]| xs.iter().map(|e| e.image_id.clone()).collect::<BTreeSet<_>>();
        let (tr, va, te) = (ids(&part.train), ids(&part.val), ids(&part.test));
        if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
            return Err(at("splits share an image"));
        }
        if part.kept() + part.dropped.len() != input.len() {
            return Err(at("kept + dropped differs from input size"));
        }
        for ex in &input {
            let homes = [(&part.train, &spec.train), (&part.val, &spec.val), (&part.test, &spec.test)]
                .iter()
                .filter(|(split, _)| split.iter().any(|e| e.pair_id == ex.pair_id))
                .map(|(_, set)| set.contains(&ex.image_id))
                .collect::<Vec<_>>();
            let dropped = part.dropped.contains(&ex.pair_id);
            match (homes.as_slice(), dropped) {
                ([true], false) => {}
                ([], true) if unlisted.contains(&ex.image_id) => {}
                _ => return Err(at(&format!("{} routed to {homes:?}, dropped {dropped}", ex.pair_id))),
            }
        }

        for (name, split) in part.splits() {
            let stats = eve_core::dataset::compute_stats(split);
            let report = stats.balance();
            let n = split.len();
            let expected = n > 0
                && Label::ALL.iter().any(|&l| {
                    let c = split.iter().filter(|e| e.label == l).count();
                    (c as f64 / n as f64 - 1.0 / 3.0).abs() > BALANCE_TOLERANCE
                });
            if report.imbalanced != expected {
                return Err(at(&format!("{name} balance flag {} but expected {expected}", report.imbalanced)));
            }
            flagged += usize::from(expected);
        }
    }
    Ok(format!(
        "real data not provided (set EVE_SNLI_DIR); 500 synthetic corpora: disjoint, total and exclusive routing, {flagged} splits flagged imbalanced exactly as defined"
    ))
}

fn criterion_5() -> Outcome {
    match std::env::var_os("EVE_SNLI_DIR") {
        Some(dir) => criterion_5_real(Path::new(&dir)),
        None => criterion_5_synthetic(),
    }
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig { embedding_dim: 16, ..SynthConfig::default() };
    let (paths, _) = write_synth_task(&dir.path().join("task"), &synth, SplitSizes { train: 40, val: 12, test: 4 }, 3).unwrap();
    let run = |out: &str| {
        let mut config = TrainConfig::new(
            ModelConfig { gru_hidden: 16, attention_dim: 8, region_value_dim: 16, fusion_dim: 16, mlp_hidden: 16, ..ModelConfig::default() },
            TrainPaths {
                train: paths.train.clone(),
                val: Some(paths.val.clone()),
                features: Some(paths.features.clone()),
                embeddings: paths.embeddings.clone(),
                output: dir.path().join(out),
            },
        );
        config.embedding_dim = synth.embedding_dim;
        config.epochs = 4;
        config.batch_size = 8;
        config.learning_rate = 1e-2;
        config.seed = 11;
        let (_, _, artifacts) = train(&config, |_| {}).unwrap();
        let read = |p: &Path| std::fs::read(p).unwrap();
        [read(&artifacts.checkpoint), read(&artifacts.checkpoint.with_extension("json")), read(&artifacts.log)]
    };
    let a = run("a");
    let b = run("b");
    check(
        a == b,
        format!("checkpoint ({} bytes), sidecar and loss log ({} bytes) identical across two runs: {}", a[0].len(), a[2].len(), a == b),
    )
}

fn random_tensors(rng: &mut ChaCha8Rng) -> Vec<(String, Tensor)> {
    (0..rng.gen_range(1..=4))
        .map(|i| {
            let rank = rng.gen_range(0..=4);
            let mut shape = Vec::new();
            let mut total = 1;
            for _ in 0..rank {
                let d = rng.gen_range(0..=(64 / total).min(6));
                shape.push(d);
                total *= d.max(1);
            }
            let numel = shape.iter().product();
            let data = (0..numel).map(|_| f32::from_bits(rng.gen())).collect();
            (format!("t{i}.{}", rng.gen::<u16>()), Tensor::new(shape, data).unwrap())
        })
        .collect()
}

/// Byte ranges of tensor payloads, from the documented layout.
fn payload_ranges(tensors: &[(String, Tensor)]) -> Vec<std::ops::Range<usize>> {
    let mut at = 4 + 2 + 4;
    let mut out = Vec::new();
    for (name, t) in tensors {
        at += 2 + name.len() + 1 + 8 * t.rank();
        out.push(at..at + 4 * t.numel());
        at += 4 * t.numel();
    }
    out
}

fn random_examples(rng: &mut ChaCha8Rng) -> Vec<VEExample> {
    let alphabet = ['a', 'Z', ' ', '"', '\\', 'é', '猫', '\t', '🙂', '.', '\u{2028}'];
    (0..rng.gen_range(0..12))
        .map(|k| {
            // The format requires at least one token per hypothesis.
            let h: String = std::iter::once('w').chain((0..rng.gen_range(0..20)).map(|_| *alphabet.choose(rng).unwrap())).collect();
            let mut ex = VEExample::new(format!("{k}r{}", rng.gen::<u32>()), format!("{}.jpg", rng.gen::<u32>()), h, Label::ALL[rng.gen_range(0..3)]);
            if rng.gen_bool(0.3) {
                ex.extra.insert("note".into(), serde_json::json!({ "n": rng.gen::<u32>(), "s": "x" }));
            }
            ex
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let mut corruptions = 0;
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let tensors = random_tensors(&mut rng);
        let bytes = veft::encode(&tensors).map_err(|e| e.to_string())?;
        let back = veft::decode(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        let same = back.len() == tensors.len()
            && back.iter().zip(&tensors).all(|((n1, t1), (n2, t2))| {
                n1 == n2 && t1.shape() == t2.shape() && t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits())
            });
        if !same {
            return Err(format!("VEFT case {case} is not bit-exact"));
        }

        let mut flips: Vec<usize> = payload_ranges(&tensors).into_iter().flatten().collect();
        flips.push(bytes.len() - 1 - rng.gen_range(0..4));
        if let Some(&i) = flips.choose(&mut rng) {
            let mut bad = bytes.clone();
            bad[i] ^= 1 << rng.gen_range(0..8);
            if veft::decode(&bad).is_ok() {
                return Err(format!("VEFT case {case}: flipped byte {i} went undetected"));
            }
            corruptions += 1;
        }
        let cut = rng.gen_range(0..bytes.len());
        if veft::decode(&bytes[..cut]).is_ok() {
            return Err(format!("VEFT case {case}: truncation to {cut} bytes went undetected"));
        }
        let mut bad_magic = bytes.clone();
        bad_magic[rng.gen_range(0..4)] ^= 0x20;
        if veft::decode(&bad_magic).is_ok() {
            return Err(format!("VEFT case {case}: bad magic went undetected"));
        }
        corruptions += 2;

        let examples = random_examples(&mut rng);
        let mut buf = Vec::new();
        write_examples_to(&mut buf, &examples).unwrap();
        let back = read_examples_from(buf.as_slice(), "memory").map_err(|e| format!("dataset case {case}: {e}"))?;
        if back != examples {
            return Err(format!("dataset case {case} did not round-trip"));
        }
    }
    Ok(format!("200 VEFT and 200 dataset cases round-trip exactly; {corruptions} corruptions detected"))
}

fn criterion_8() -> Outcome {
    let mut compared = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = tiny_table(&mut rng);
        let td = Model::new(tiny(Variant::TopDown, seed), table.clone(), Some(5)).unwrap();
        let eve_config = ModelConfig { text_self_attention: false, image_self_attention: false, ..tiny(Variant::EveImage, seed + 1000) };
        let mut eve = Model::new(eve_config, table, Some(5)).unwrap();
        let shared: Vec<(String, Tensor)> = td.params().iter().map(|(_, p)| (p.name.clone(), p.tensor.clone())).collect();
        eve.params_mut().load_values(&shared).map_err(|e| e.to_string())?;

        let tokens = eve.encode(&["a", "dog", "is", "running"][..rng.gen_range(1..=4)]);
        let n = rng.gen_range(1..=8);
        let regions = random_regions(&mut rng, n, 5);
        let mut t1 = Tape::<f32>::new();
        let p1 = eve.params().bind(&mut t1);
        let a = eve.eve_forward(&mut t1, &p1, &tokens, &regions).unwrap();
        let mut t2 = Tape::<f32>::new();
        let p2 = td.params().bind(&mut t2);
        let b = td.attention_baseline_forward(&mut t2, &p2, &tokens, &regions).unwrap();
        let bits = |t: &Tape<'_, f32>, v| t.data(v).iter().map(|x: &f32| x.to_bits()).collect::<Vec<_>>();
        if bits(&t1, a.logits) != bits(&t2, b.logits) || bits(&t1, a.region_attention.unwrap()) != bits(&t2, b.region_attention.unwrap()) {
            return Err(format!("seed {seed}: EVE without self-attention differs from Top-Down"));
        }
        compared += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rn = Model::new(tiny(Variant::Relational, 7), tiny_table(&mut rng), Some(5)).unwrap();
    let tokens = rn.encode(&["a", "cat"]);
    for n in 1..=12 {
        let mut tape = Tape::<f32>::new();
        let p = rn.params().bind(&mut tape);
        let out = rn.rn_forward(&mut tape, &p, &tokens, &random_regions(&mut rng, n, 5)).unwrap();
        if out.pair_evaluations != n * n {
            return Err(format!("N = {n}: {} pair evaluations", out.pair_evaluations));
        }
    }
    Ok(format!("{compared} instances bit-identical to Top-Down; RN evaluates exactly N² pairs for N = 1..=12"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 gradient suite", criterion_1),
        ("2 attention invariants", criterion_2),
        ("3 synthetic learnability", criterion_3),
        ("4 grounding separation", criterion_4),
        ("5 dataset reproduction", criterion_5),
        ("6 determinism", criterion_6),
        ("7 format round trips", criterion_7),
        ("8 baseline structural reduction", criterion_8),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("FAIL criterion {name}: {detail} [{secs:.1}s]");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
