//! Finite-difference checks over every differentiable op, every layer, and
//! the full forward+loss of each model with an image branch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{grad_check, Axis, Tape, Var};
use crate::error::Result;
use crate::layers::EmbeddingTable;
use crate::models::{cross_entropy, Label, Model, ModelConfig, Variant};
use crate::params::{Bound, ParamBuilder, ParamStore};
use crate::tensor::Tensor;

pub const SUITE_EPS: f64 = 1e-3;
pub const SUITE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
    pub passed: bool,
}

type Loss = Box<dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>>;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

/// Values bounded away from zero, for kinked ops.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) { m } else { -m }
    });
    Tensor::new(shape.to_vec(), data.collect()).expect("shape matches")
}

/// Reduces any output to a scalar through fixed random weights, so every
/// output coordinate contributes to the checked gradient.
fn project(tape: &mut Tape<'_, f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, tape.shape(y));
    let w = tape.constant(w);
    let yw = tape.mul(y, w)?;
    tape.sum(yw, Axis::All)
}

fn op_cases() -> Vec<(&'static str, Vec<Tensor<f64>>, Loss)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases: Vec<(&'static str, Vec<Tensor<f64>>, Loss)> = Vec::new();
    macro_rules! case {
        ($name:expr, [$($input:expr),*], |$t:ident, $v:ident| $body:expr) => {{
            let inputs = vec![$($input),*];
            let f: Loss = Box::new(move |$t: &mut Tape<'_, f64>, $v: &[Var]| {
                let y = $body;
                project($t, y, 7)
            });
            cases.push(($name, inputs, f));
        }};
    }
    case!("matmul", [random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2])], |t, v| t.matmul(v[0], v[1])?);
    case!("transpose", [random(&mut rng, &[3, 2])], |t, v| t.transpose(v[0])?);
    case!("add (broadcast row)", [random(&mut rng, &[3, 4]), random(&mut rng, &[4])], |t, v| t.add(v[0], v[1])?);
    case!("sub (broadcast scalar)", [random(&mut rng, &[2, 3]), random(&mut rng, &[1])], |t, v| t.sub(v[0], v[1])?);
    case!("mul", [random(&mut rng, &[2, 3]), random(&mut rng, &[2, 3])], |t, v| t.mul(v[0], v[1])?);
    case!("scale", [random(&mut rng, &[5])], |t, v| t.scale(v[0], -0.7)?);
    case!("tanh", [random(&mut rng, &[2, 3])], |t, v| t.tanh(v[0])?);
    case!("sigmoid", [random(&mut rng, &[2, 3])], |t, v| t.sigmoid(v[0])?);
    case!("relu", [off_zero(&mut rng, &[2, 3])], |t, v| t.relu(v[0])?);
    case!("exp", [random(&mut rng, &[4])], |t, v| t.exp(v[0])?);
    case!("log", [random(&mut rng, &[4])], |t, v| {
        let sq = t.square(v[0])?;
        let one = t.constant(Tensor::vector(vec![0.5]));
        let pos = t.add(sq, one)?;
        t.log(pos)?
    });
    case!("neg", [random(&mut rng, &[3])], |t, v| t.neg(v[0])?);
    case!("square", [random(&mut rng, &[3])], |t, v| t.square(v[0])?);
    case!("sum (axis 0)", [random(&mut rng, &[3, 4])], |t, v| t.sum(v[0], Axis::Dim(0))?);
    case!("mean (axis 1)", [random(&mut rng, &[3, 4])], |t, v| t.mean(v[0], Axis::Dim(1))?);
    case!("max (axis 1)", [Tensor::new(vec![2, 3], vec![0.1, 0.9, -0.5, 1.2, 0.3, -0.8]).expect("shape")], |t, v| t
        .max(v[0], Axis::Dim(1))?);
    case!("concat", [random(&mut rng, &[2, 3]), random(&mut rng, &[2, 2])], |t, v| t.concat(&[v[0], v[1]], 1)?);
    case!("narrow", [random(&mut rng, &[4, 3])], |t, v| t.narrow(v[0], 0, 1, 2)?);
    case!("reshape", [random(&mut rng, &[2, 6])], |t, v| t.reshape(v[0], &[3, 4])?);
    case!("softmax", [random(&mut rng, &[3, 4])], |t, v| t.softmax(v[0], 1, None)?);
    case!("softmax (masked)", [random(&mut rng, &[2, 3])], |t, v| {
        t.softmax(v[0], 1, Some(&[true, false, true, true, true, false]))?
    });
    case!("log_softmax", [random(&mut rng, &[2, 4])], |t, v| t.log_softmax(v[0], 1)?);
    case!("gather_rows", [random(&mut rng, &[4, 3])], |t, v| t.gather_rows(v[0], &[Some(2), None, Some(0), Some(2)])?);
    cases
}

fn params_as_inputs(store: &ParamStore) -> Vec<Tensor<f64>> {
    store.iter().map(|(_, p)| p.tensor.cast()).collect()
}

fn record(name: impl Into<String>, check: Result<crate::autograd::GradCheck>) -> SuiteCheck {
    let name = name.into();
    match check {
        Ok(c) => SuiteCheck { name, max_rel_error: c.max_rel_error, coordinates: c.coordinates, passed: c.passes(SUITE_TOLERANCE) },
        Err(_) => SuiteCheck { name, max_rel_error: f64::INFINITY, coordinates: 0, passed: false },
    }
}

fn layer_checks(out: &mut Vec<SuiteCheck>) {
    use crate::layers::{fuse, mlp_classify, CrossAttention, Gru, Linear, Mlp, SelfAttention};
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let mut store = ParamStore::new();
    let mut b = ParamBuilder::new(&mut store, 5);
    let gru = Gru::new(&mut b, "gru", 3, 8).expect("gru");
    let seq = random(&mut rng, &[4, 3]);
    let inputs = params_as_inputs(&store);
    out.push(record(
        "layer: gru",
        grad_check(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                let x = t.constant(seq.clone());
                let h0 = t.constant(Tensor::zeros(&[8]));
                let o = gru.forward(t, &p, x, h0, Some(&[true, true, true, false]))?;
                project(t, o.final_state, 3)
            },
            &inputs,
            SUITE_EPS,
        ),
    ));

    let mut store = ParamStore::new();
    let mut b = ParamBuilder::new(&mut store, 6);
    let attn = SelfAttention::new(&mut b, "self", 5, 4, 5).expect("self attention");
    let x = random(&mut rng, &[4, 5]);
    let inputs = params_as_inputs(&store);
    out.push(record(
        "layer: self-attention",
        grad_check(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                let x = t.constant(x.clone());
                let (y, _) = attn.forward(t, &p, x, Some(&[true, true, false, true]))?;
                project(t, y, 4)
            },
            &inputs,
            SUITE_EPS,
        ),
    ));

    let mut store = ParamStore::new();
    let mut b = ParamBuilder::new(&mut store, 7);
    let cross = CrossAttention::new(&mut b, "cross", 8, 5, 4, 6).expect("cross attention");
    let text = random(&mut rng, &[8]);
    let regions = random(&mut rng, &[4, 5]);
    let inputs = params_as_inputs(&store);
    out.push(record(
        "layer: text-image attention",
        grad_check(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                let tx = t.constant(text.clone());
                let r = t.constant(regions.clone());
                let (y, _) = cross.forward(t, &p, tx, r)?;
                project(t, y, 5)
            },
            &inputs,
            SUITE_EPS,
        ),
    ));

    let mut store = ParamStore::new();
    let mut b = ParamBuilder::new(&mut store, 8);
    let pt = Linear::new(&mut b, "pt", 8, 6, true).expect("linear");
    let pi = Linear::new(&mut b, "pi", 5, 6, true).expect("linear");
    let head = Mlp::new(&mut b, "head", &[6, 7, 3]).expect("mlp");
    let text = random(&mut rng, &[8]);
    let image = random(&mut rng, &[5]);
    let inputs = params_as_inputs(&store);
    out.push(record(
        "layer: fusion + classifier",
        grad_check(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                let tx = t.constant(text.clone());
                let im = t.constant(image.clone());
                let fused = fuse(t, &p, tx, im, &pt, &pi)?;
                let logits = mlp_classify(t, &p, &head, fused)?;
                cross_entropy(t, logits, Label::Neutral)
            },
            &inputs,
            SUITE_EPS,
        ),
    ));

    let table = Tensor::<f64>::new(vec![4, 3], {
        let mut d = random(&mut rng, &[4, 3]).into_data();
        d[..3].fill(0.0);
        d
    })
    .expect("shape");
    out.push(record(
        "layer: embedding lookup",
        grad_check(
            |t, v| {
                let e = crate::layers::embed(t, v[0], &[2, 0, 3, 2])?;
                project(t, e, 6)
            },
            &[table],
            SUITE_EPS,
        ),
    ));
}

/// Tiny model of each image variant: GRU hidden 8, four tokens, four regions.
fn model_checks(out: &mut Vec<SuiteCheck>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rows = ["a", "dog", "is", "red"].iter().map(|w| (w.to_string(), (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
    let table = EmbeddingTable::from_rows(4, rows).expect("table");
    let regions = Tensor::new(vec![4, 5], (0..20).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).expect("shape");
    for variant in [Variant::EveImage, Variant::EveRoi, Variant::Relational, Variant::TopDown, Variant::BottomUp] {
        let config = ModelConfig {
            variant,
            gru_hidden: 8,
            attention_dim: 4,
            region_value_dim: 6,
            fusion_dim: 5,
            mlp_hidden: 7,
            relation_hidden: 6,
            train_embeddings: true,
            seed: 3,
            ..ModelConfig::default()
        };
        let model = Model::new(config, table.clone(), Some(5)).expect("model");
        let tokens = model.encode(&["a", "dog", "is", "red"]);
        let inputs = params_as_inputs(model.params());
        let check = grad_check(
            |t, v| {
                let p = Bound::from_vars(v.to_vec());
                let o = model.forward(t, &p, &tokens, Some(&regions))?;
                cross_entropy(t, o.logits, Label::Contradiction)
            },
            &inputs,
            SUITE_EPS,
        );
        out.push(record(format!("model: {}", variant.display_name()), check));
    }
}

/// Runs every check; `passed` means max relative error below 1e-3.
pub fn run_gradient_suite() -> Vec<SuiteCheck> {
    let mut out = Vec::new();
    for (name, inputs, f) in op_cases() {
        out.push(record(format!("op: {name}"), grad_check(|t, v| f(t, v), &inputs, SUITE_EPS)));
    }
    layer_checks(&mut out);
    model_checks(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let results = run_gradient_suite();
        assert!(results.len() >= 30);
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
    }
}
