//! Finite-difference gradient cases shared by the core tests and the acceptance suite.

#![allow(dead_code)]

use dlban_core::classifier::{attention_node, gru_cell_node, loss_graph, ClassifierShape, SequenceClassifier, Variant};
use dlban_core::gradcheck::check_gradients;
use dlban_core::rng::{self, RngExt};
use dlban_core::{DenseArray, Graph, Mode, NodeId, ParamSet};

pub const STEP: f64 = 1e-5;
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;

pub struct CaseResult {
    pub name: &'static str,
    pub instance: u64,
    pub max_relative_error: f64,
}

fn random(r: &mut rng::Rng, rows: usize, cols: usize) -> DenseArray {
    let data = (0..rows * cols).map(|_| rng::uniform(r, -1.0, 1.0)).collect();
    DenseArray::matrix(rows, cols, data).unwrap()
}

type Builder = fn(&mut Graph, NodeId, NodeId) -> NodeId;
type Primitive = (&'static str, (usize, usize), (usize, usize), Builder);

/// Primitive cases: `(name, a shape, b shape, op)`; `a` and `b` are both parameters.
fn primitives(n: usize, m: usize) -> Vec<Primitive> {
    vec![
        ("matmul", (n, m), (m, 3), |g, a, b| g.matmul(a, b)),
        ("add_bias", (n, m), (1, m), |g, a, b| g.add_bias(a, b)),
        ("add", (n, m), (n, m), |g, a, b| g.add(a, b)),
        ("sub", (n, m), (n, m), |g, a, b| g.sub(a, b)),
        ("mul", (n, m), (n, m), |g, a, b| g.mul(a, b)),
        ("scale_shift", (n, m), (n, m), |g, a, _| g.scale_shift(a, -1.7, 0.3)),
        ("sigmoid", (n, m), (n, m), |g, a, _| g.sigmoid(a)),
        ("tanh", (n, m), (n, m), |g, a, _| g.tanh(a)),
        ("leaky_relu", (n, m), (n, m), |g, a, _| g.leaky_relu(a, 0.2)),
        ("softplus", (n, m), (n, m), |g, a, _| g.softplus(a)),
        ("concat_cols", (n, m), (n, 2), |g, a, b| g.concat_cols(&[a, b, a])),
        ("slice_cols", (n, m), (n, m), |g, a, _| g.slice_cols(a, 1, 1)),
        ("reshape", (n, m), (n, m), |_, a, _| a),
        ("dropout", (n, m), (n, m), |g, a, _| g.dropout(a, 0.3)),
        ("softmax_rows", (n, m), (n, m), |g, a, _| g.softmax_rows(a)),
        ("scale_rows", (n, m), (n, 1), |g, a, b| g.scale_rows(a, b)),
        ("sum", (n, m), (n, m), |g, a, _| g.sum(a)),
        ("mean", (n, m), (n, m), |g, a, _| g.mean(a)),
    ]
}

/// Weights the output by a fixed random input so every entry reaches the loss differently.
fn weighted_sum(g: &mut Graph, out: NodeId) -> NodeId {
    let c = g.input("c");
    let prod = g.mul(out, c);
    g.sum(prod)
}

fn output_shape(g: &mut Graph, out: NodeId, inputs: &[(&str, &DenseArray)], params: &ParamSet) -> (usize, usize) {
    let mut b = dlban_core::Bindings::new();
    for (n, v) in inputs {
        b.bind(n, v);
    }
    b.bind_params(params);
    g.forward(&b, Mode::Train { seed: 9 }).unwrap();
    g.value(out).unwrap().dims2()
}

fn check(g: &mut Graph, out: NodeId, params: &ParamSet, seed: u64) -> f64 {
    let mut r = rng::seeded(seed ^ 0xC0FFEE);
    let (rows, cols) = output_shape(g, out, &[], params);
    let c = random(&mut r, rows, cols);
    let loss = weighted_sum(g, out);
    check_gradients(g, loss, &[("c", &c)], params, Mode::Train { seed: 9 }, STEP)
        .unwrap()
        .max_relative_error
}

pub fn primitive_cases(instances: u64) -> Vec<CaseResult> {
    let mut results = Vec::new();
    for instance in 0..instances {
        let mut r = rng::seeded(instance);
        let n = r.random_range(1..5);
        let m = r.random_range(2..5);
        for (name, sa, sb, op) in primitives(n, m) {
            let mut g = Graph::new();
            let a = g.param("a");
            let b = g.param("b");
            let out = if name == "reshape" { g.reshape(a, &[m, n]) } else { op(&mut g, a, b) };
            let mut params = ParamSet::new();
            params.insert("a", random(&mut r, sa.0, sa.1));
            params.insert("b", random(&mut r, sb.0, sb.1));
            results.push(CaseResult { name, instance, max_relative_error: check(&mut g, out, &params, instance) });
        }
    }
    results
}

pub fn gru_cell_cases(instances: u64) -> Vec<CaseResult> {
    (0..instances)
        .map(|instance| {
            let mut r = rng::seeded(100 + instance);
            let (n, m, h) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..5));
            let mut g = Graph::new();
            let x = g.param("x");
            let h0 = g.param("h");
            let out = gru_cell_node(&mut g, x, h0, "cell");
            let mut params = ParamSet::new();
            params.insert("x", random(&mut r, n, m));
            params.insert("h", random(&mut r, n, h));
            for gate in ["r", "z", "h"] {
                params.insert(format!("cell.w_{gate}"), random(&mut r, m, h));
                params.insert(format!("cell.u_{gate}"), random(&mut r, h, h));
                params.insert(format!("cell.b_{gate}"), random(&mut r, 1, h));
            }
            CaseResult { name: "gru_cell", instance, max_relative_error: check(&mut g, out, &params, instance) }
        })
        .collect()
}

pub fn attention_cases(instances: u64) -> Vec<CaseResult> {
    (0..instances)
        .map(|instance| {
            let mut r = rng::seeded(200 + instance);
            let (n, q, f, a) = (r.random_range(1..4), r.random_range(1..5), r.random_range(2..6), r.random_range(1..4));
            let mut g = Graph::new();
            let states: Vec<NodeId> = (0..q).map(|t| g.param(&format!("h{t}"))).collect();
            let (pooled, _) = attention_node(&mut g, &states, "att");
            let mut params = ParamSet::new();
            for t in 0..q {
                params.insert(format!("h{t}"), random(&mut r, n, f));
            }
            params.insert("att.w", random(&mut r, f, a));
            params.insert("att.b", random(&mut r, 1, a));
            params.insert("att.u", random(&mut r, a, 1));
            CaseResult { name: "attention", instance, max_relative_error: check(&mut g, pooled, &params, instance) }
        })
        .collect()
}

/// Full classifier loss on `q = 3`, `m = 6`, `H = 4` instances, dropout active with a fixed seed.
pub fn model_cases(instances: u64, variant: Variant) -> Vec<CaseResult> {
    (0..instances)
        .map(|instance| {
            let mut r = rng::seeded(300 + instance);
            let shape = ClassifierShape { hidden: 4, ..ClassifierShape::new(variant, 3, 6) };
            let model = SequenceClassifier::new(shape, instance).unwrap();
            let batch = r.random_range(1..4);
            let x = random(&mut r, batch, 18);
            let h0 = DenseArray::zeros(&[batch, 4]);
            let mut y = DenseArray::zeros(&[batch, 2]);
            for i in 0..batch {
                y.set(i, r.random_range(0..2), 1.0);
            }
            let (mut g, loss) = loss_graph(&shape).unwrap();
            let res = check_gradients(
                &mut g,
                loss,
                &[("x", &x), ("h0", &h0), ("y", &y)],
                &model.params,
                Mode::Train { seed: instance },
                STEP,
            )
            .unwrap();
            let name = match variant {
                Variant::BigruAttention => "bigru_attention_model",
                Variant::Gru => "gru_model",
                Variant::Lstm => "lstm_model",
            };
            CaseResult { name, instance, max_relative_error: res.max_relative_error }
        })
        .collect()
}

pub fn all_cases(instances: u64) -> Vec<CaseResult> {
    let mut all = primitive_cases(instances);
    all.extend(gru_cell_cases(instances));
    all.extend(attention_cases(instances));
    for v in [Variant::BigruAttention, Variant::Gru, Variant::Lstm] {
        all.extend(model_cases(instances, v));
    }
    all
}
