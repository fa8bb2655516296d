//! Ranking metrics and macro-F1.
//!
//! Scores are ranked descending; equal scores put the lower label index first.
//! DCG uses `log2(t + 1)` for rank position `t` starting at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label indices ordered by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn check(scores: &[f64], truth: &[bool], k: usize) -> Result<()> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} truth entries",
            scores.len(),
            truth.len()
        )));
    }
    if k == 0 || k > scores.len() {
        return Err(Error::Argument(format!("k = {k} must be in 1..={}", scores.len())));
    }
    Ok(())
}

pub fn precision_at_k(scores: &[f64], truth: &[bool], k: usize) -> Result<f64> {
    check(scores, truth, k)?;
    let hits = ranking(scores).into_iter().take(k).filter(|&l| truth[l]).count();
    Ok(hits as f64 / k as f64)
}

/// Errors when `truth` has no relevant label.
pub fn ndcg_at_k(scores: &[f64], truth: &[bool], k: usize) -> Result<f64> {
    check(scores, truth, k)?;
    let relevant = truth.iter().filter(|&&t| t).count();
    if relevant == 0 {
        return Err(Error::Argument("nDCG is undefined without a relevant label".into()));
    }
    let dcg: f64 = ranking(scores)
        .into_iter()
        .take(k)
        .enumerate()
        .filter(|&(_, l)| truth[l])
        .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(relevant)).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    Ok(dcg / ideal)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelF1 {
    pub label: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Never predicted and never relevant: F1 is 0 by convention.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub macro_f1: f64,
    pub per_label: Vec<LabelF1>,
}

pub fn label_f1(predictions: &[Vec<bool>], truth: &[Vec<bool>], label: usize) -> LabelF1 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in predictions.iter().zip(truth) {
        match (p[label], t[label]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    LabelF1 {
        label,
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        degenerate: tp + fp + fn_ == 0,
    }
}

/// Mean per-label F1 over `subset` (column indices of the binary matrices).
pub fn macro_f1(predictions: &[Vec<bool>], truth: &[Vec<bool>], subset: &[usize]) -> Result<F1Summary> {
    if subset.is_empty() {
        return Err(Error::Argument("macro-F1 over an empty label subset".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} prediction rows vs {} truth rows",
            predictions.len(),
            truth.len()
        )));
    }
    let width = truth.first().map_or(0, Vec::len);
    if predictions.iter().chain(truth).any(|r| r.len() != width) {
        return Err(Error::Shape("ragged prediction or truth rows".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&l| l >= width) {
        return Err(Error::Argument(format!("label column {bad} out of range")));
    }
    let per_label: Vec<LabelF1> = subset.iter().map(|&l| label_f1(predictions, truth, l)).collect();
    let macro_f1 = per_label.iter().map(|s| s.f1).sum::<f64>() / per_label.len() as f64;
    Ok(F1Summary { macro_f1, per_label })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_examples() {
        let s = [0.9, 0.8, 0.1, 0.7];
        let t = [true, false, false, true];
        assert_eq!(precision_at_k(&s, &t, 1).unwrap(), 1.0);
        assert!((precision_at_k(&s, &t, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&s, &[false; 4], 2).unwrap(), 0.0);
        assert!(matches!(precision_at_k(&s, &t, 5), Err(Error::Argument(_))));
    }

    #[test]
    fn ndcg_examples() {
        // ranking [0, 1, 2], relevant {0, 2}
        let s = [0.9, 0.5, 0.1];
        let t = [true, false, true];
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&s, &t, 3).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.91972).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&s, &[true, false, false], 1).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[0.1, 0.9, 0.5], &[false, true, true], 2).unwrap(), 1.0);
        assert!(ndcg_at_k(&s, &[false; 3], 1).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(ranking(&[0.5, 0.7, 0.5, 0.7]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn f1_hand_counts() {
        // A: TP=1 FP=1 FN=0, B: TP=1 FP=0 FN=1
        let pred = vec![vec![true, true], vec![true, false], vec![false, false]];
        let truth = vec![vec![true, true], vec![false, false], vec![false, true]];
        let s = macro_f1(&pred, &truth, &[0, 1]).unwrap();
        assert!((s.per_label[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.per_label[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(&truth, &truth, &[0, 1]).unwrap().macro_f1, 1.0);
        assert!(macro_f1(&pred, &truth, &[]).is_err());
    }

    #[test]
    fn degenerate_label_scores_zero() {
        let pred = vec![vec![true, false]];
        let truth = vec![vec![true, false]];
        let s = macro_f1(&pred, &truth, &[0, 1]).unwrap();
        assert!(s.per_label[1].degenerate);
        assert_eq!(s.per_label[1].f1, 0.0);
        assert_eq!(s.macro_f1, 0.5);
    }
}
