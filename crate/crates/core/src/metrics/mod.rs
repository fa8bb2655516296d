//! Evaluation: P@k, nDCG@k, macro-F1 (overall, head, tail) and significance testing.
//!
//! [`EvalReport`] serializes two ways:
//!
//! * [`EvalReport::to_tsv`]: one `key<TAB>value` line per scalar, e.g. `p@1`,
//!   `ndcg@3`, `macro_f1`, `tail_macro_f1`, then `label:<name>:f1` style lines.
//! * [`EvalReport::to_json`]: the struct as JSON (field names as declared here).

mod ranking;
mod ttest;

pub use ranking::{label_f1, macro_f1, ndcg_at_k, precision_at_k, ranking, F1Summary, LabelF1};
pub use ttest::{inc_beta, ln_gamma, load_values, pooled_ttest, read_values, student_t_two_tailed, TTest};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const RANK_CUTOFFS: [usize; 3] = [1, 3, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub tail: bool,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: usize,
    /// Documents without any relevant label, left out of the ranking metrics.
    pub skipped: usize,
    pub threshold: f64,
    /// `(k, P@k)` for each cutoff not exceeding the label count.
    pub p_at_k: Vec<(usize, f64)>,
    pub ndcg_at_k: Vec<(usize, f64)>,
    pub macro_f1: f64,
    pub head_macro_f1: Option<f64>,
    pub tail_macro_f1: Option<f64>,
    pub per_label: Vec<LabelReport>,
}

impl EvalReport {
    pub fn p_at(&self, k: usize) -> Option<f64> {
        self.p_at_k.iter().find(|(c, _)| *c == k).map(|&(_, v)| v)
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg_at_k.iter().find(|(c, _)| *c == k).map(|&(_, v)| v)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "documents\t{}", self.documents);
        let _ = writeln!(s, "skipped\t{}", self.skipped);
        let _ = writeln!(s, "threshold\t{:?}", self.threshold);
        for (k, v) in &self.p_at_k {
            let _ = writeln!(s, "p@{k}\t{v:?}");
        }
        for (k, v) in &self.ndcg_at_k {
            let _ = writeln!(s, "ndcg@{k}\t{v:?}");
        }
        let _ = writeln!(s, "macro_f1\t{:?}", self.macro_f1);
        if let Some(v) = self.head_macro_f1 {
            let _ = writeln!(s, "head_macro_f1\t{v:?}");
        }
        if let Some(v) = self.tail_macro_f1 {
            let _ = writeln!(s, "tail_macro_f1\t{v:?}");
        }
        for l in &self.per_label {
            let _ = writeln!(s, "label:{}:support\t{}", l.label, l.support);
            let _ = writeln!(s, "label:{}:precision\t{:?}", l.label, l.precision);
            let _ = writeln!(s, "label:{}:recall\t{:?}", l.label, l.recall);
            let _ = writeln!(s, "label:{}:f1\t{:?}", l.label, l.f1);
            if l.degenerate {
                let _ = writeln!(s, "label:{}:degenerate\ttrue", l.label);
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores `scores` (documents x labels, classifier row order) against `truth`
/// (same layout, 0/1). Label names and the head/tail split come from `space`.
pub fn evaluate(scores: &Matrix, truth: &[Vec<f64>], space: &LabelSpace, threshold: f64) -> Result<EvalReport> {
    let l = space.len();
    if scores.cols() != l || truth.len() != scores.rows() || truth.iter().any(|t| t.len() != l) {
        return Err(Error::Shape(format!(
            "scores {:?} do not match {} truth rows over {l} labels",
            scores.shape(),
            truth.len()
        )));
    }
    let truth_b: Vec<Vec<bool>> = truth.iter().map(|t| t.iter().map(|&v| v > 0.5).collect()).collect();
    let cutoffs: Vec<usize> = RANK_CUTOFFS.iter().copied().filter(|&k| k <= l).collect();
    let mut p_sum = vec![0.0; cutoffs.len()];
    let mut n_sum = vec![0.0; cutoffs.len()];
    let mut counted = 0usize;
    for (i, t) in truth_b.iter().enumerate() {
        if !t.iter().any(|&x| x) {
            continue;
        }
        counted += 1;
        let s = scores.row(i);
        for (c, &k) in cutoffs.iter().enumerate() {
            p_sum[c] += precision_at_k(s, t, k)?;
            n_sum[c] += ndcg_at_k(s, t, k)?;
        }
    }
    let denom = counted.max(1) as f64;
    let p_at_k = cutoffs.iter().zip(&p_sum).map(|(&k, &v)| (k, v / denom)).collect();
    let ndcg_at_k = cutoffs.iter().zip(&n_sum).map(|(&k, &v)| (k, v / denom)).collect();

    let preds: Vec<Vec<bool>> = (0..scores.rows())
        .map(|i| scores.row(i).iter().map(|&v| v >= threshold).collect())
        .collect();
    let all: Vec<usize> = (0..l).collect();
    let n_head = space.head().len();
    let overall = if l > 0 { macro_f1(&preds, &truth_b, &all)? } else {
        return Err(Error::Argument("label space is empty".into()));
    };
    let head_cols: Vec<usize> = (0..n_head).collect();
    let tail_cols: Vec<usize> = (n_head..l).collect();
    let head_macro_f1 = (!head_cols.is_empty())
        .then(|| macro_f1(&preds, &truth_b, &head_cols).map(|s| s.macro_f1))
        .transpose()?;
    let tail_macro_f1 = (!tail_cols.is_empty())
        .then(|| macro_f1(&preds, &truth_b, &tail_cols).map(|s| s.macro_f1))
        .transpose()?;
    let order = space.order();
    let per_label = overall
        .per_label
        .iter()
        .map(|s| LabelReport {
            label: space.name(order[s.label]).to_string(),
            tail: s.label >= n_head,
            support: s.tp + s.fn_,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            degenerate: s.degenerate,
        })
        .collect();
    Ok(EvalReport {
        documents: scores.rows(),
        skipped: scores.rows() - counted,
        threshold,
        p_at_k,
        ndcg_at_k,
        macro_f1: overall.macro_f1,
        head_macro_f1,
        tail_macro_f1,
        per_label,
    })
}
