//! Browser bindings. Each exported function takes plain strings or numbers and
//! returns a JSON document; the `*_json` twins are the same functions without
//! the `JsValue` error type so they can be tested natively.

use serde::Serialize;
use tailaug::config::{Mode, Settings};
use tailaug::metrics::{ndcg_at_k, pooled_ttest, precision_at_k, ranking};
use tailaug::pipeline::{self, Dataset};
use tailaug::synthgen::{generate, SynthSpec};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Point {
    x: f64,
    y: f64,
    label: String,
    tail: bool,
}

#[derive(Serialize)]
struct Augmentation {
    mode: String,
    p: usize,
    train: Vec<Point>,
    prototypes: Vec<Point>,
    generated: Vec<Point>,
    macro_f1: f64,
    tail_macro_f1: f64,
    tail_macro_f1_before: f64,
    l_gen: [f64; 2],
    l_var: [f64; 2],
    l_div: [f64; 2],
}

#[derive(Serialize)]
struct Ranking {
    order: Vec<usize>,
    k: usize,
    precision: f64,
    ndcg: f64,
}

#[derive(Serialize)]
struct TTestOut {
    mean_a: f64,
    mean_b: f64,
    t: f64,
    df: f64,
    p: f64,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
        .collect()
}

fn toy_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        d: 2,
        n_head: 3,
        n_tail: 3,
        docs_per_head: 60,
        docs_per_tail: 3,
        intra_head_std: 1.0,
        intra_tail_std: 0.3,
        co_label_prob: 0.0,
        center_scale: 3.0,
        test_per_label: 15,
        seed,
    }
}

/// Runs the full pipeline on a two-dimensional toy dataset.
pub fn augment_json(mode: &str, p: usize, seed: u64) -> Result<String, String> {
    let mode: Mode = mode.parse().map_err(err)?;
    let spec = toy_spec(seed);
    let ds = generate(&spec).map_err(err)?;
    let data = Dataset::from_synth(&ds);
    let settings = Settings {
        seed,
        mode,
        tail_count: spec.n_tail,
        pairs_p: p,
        eigen_rank: Some(1),
        ..Settings::default()
    };
    let before = pipeline::run(&Settings { mode: Mode::NoAug, ..settings.clone() }, &data, None).map_err(err)?.0;
    let (report, state) = pipeline::run(&settings, &data, None).map_err(err)?;
    let space = &ds.space;
    let point = |row: &[f64], label: usize| Point {
        x: row[0],
        y: row[1],
        label: space.name(label).to_string(),
        tail: space.is_tail(label),
    };
    let rows = ds.train_features.rows();
    let train = ds
        .train
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| point(rows.row(i), d.labels[0]))
        .collect();
    let prototypes = state
        .prototypes
        .iter()
        .flatten()
        .map(|pr| point(&pr.o, pr.label))
        .collect();
    let generated = state
        .generated
        .as_ref()
        .map(|g| (0..g.len()).map(|i| point(g.instances.row(i), g.labels[i])).collect())
        .unwrap_or_default();
    let h = &state.transfer_history;
    let pair = |f: fn(&tailaug::generator::Losses) -> f64| match (h.first(), h.last()) {
        (Some(a), Some(b)) => [f(a), f(b)],
        _ => [0.0, 0.0],
    };
    let out = Augmentation {
        mode: mode.to_string(),
        p,
        train,
        prototypes,
        generated,
        macro_f1: report.macro_f1,
        tail_macro_f1: report.tail_macro_f1.unwrap_or(0.0),
        tail_macro_f1_before: before.tail_macro_f1.unwrap_or(0.0),
        l_gen: pair(|l| l.gen),
        l_var: pair(|l| l.var),
        l_div: pair(|l| l.div),
    };
    serde_json::to_string(&out).map_err(err)
}

/// P@k and nDCG@k of one score vector against a 0/1 relevance vector.
pub fn rank_json(scores: &str, truth: &str, k: usize) -> Result<String, String> {
    let scores = numbers(scores)?;
    let truth: Vec<bool> = numbers(truth)?.into_iter().map(|t| t != 0.0).collect();
    if scores.len() != truth.len() {
        return Err(format!("{} scores but {} relevance values", scores.len(), truth.len()));
    }
    let out = Ranking {
        order: ranking(&scores),
        k,
        precision: precision_at_k(&scores, &truth, k).map_err(err)?,
        ndcg: ndcg_at_k(&scores, &truth, k).map_err(err)?,
    };
    serde_json::to_string(&out).map_err(err)
}

/// Pooled two-sample t-test on two lists of run values.
pub fn ttest_json(a: &str, b: &str) -> Result<String, String> {
    let (a, b) = (numbers(a)?, numbers(b)?);
    let t = pooled_ttest(&a, &b).map_err(err)?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let out = TTestOut {
        mean_a: mean(&a),
        mean_b: mean(&b),
        t: t.t,
        df: t.df,
        p: t.p,
    };
    serde_json::to_string(&out).map_err(err)
}

#[wasm_bindgen]
pub fn augment(mode: &str, p: usize, seed: u32) -> Result<String, JsValue> {
    augment_json(mode, p, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rank(scores: &str, truth: &str, k: usize) -> Result<String, JsValue> {
    rank_json(scores, truth, k).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ttest(a: &str, b: &str) -> Result<String, JsValue> {
    ttest_json(a, b).map_err(|e| JsValue::from_str(&e))
}
