//! Retraining of tail classifier rows on generated instances.
//!
//! Each tail row is an independent binary problem. Positives are the generated
//! instances of that label (plus its real documents when configured). Negatives
//! are drawn uniformly with replacement: as many generations of other tail
//! labels as there are positives, and as many head-label documents (not
//! carrying the label) as there are positives. Positive and negative sides get
//! equal total weight. Head rows are never touched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace};
use crate::error::{Error, Result};
use crate::extractor::{bce_with_logits, sigmoid, ClassifierWeights};
use crate::generator::GeneratedSet;
use crate::linalg::{dot, Matrix};
use crate::optim::{Adam, AdamConfig};
use crate::par;
use crate::rng::substream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePolicy {
    /// Other-tail generations and head documents, each matched in count to the positives.
    #[default]
    Balanced,
    /// Head documents only, matched in count to the positives.
    HeadOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
    pub negative_policy: NegativePolicy,
    pub include_real_shots: bool,
    pub threshold: f64,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        AdjustConfig {
            adam: AdamConfig::default(),
            epochs: 100,
            seed: 0,
            negative_policy: NegativePolicy::Balanced,
            include_real_shots: true,
            threshold: 0.5,
        }
    }
}

/// Training set of one tail row.
#[derive(Clone, Debug)]
pub struct RowProblem {
    pub examples: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RowProblem {
    pub fn loss(&self, w: &[f64]) -> f64 {
        self.examples
            .iter()
            .zip(&self.targets)
            .zip(&self.weights)
            .map(|((x, &y), &wt)| wt * bce_with_logits(&[dot(w, x)], &[y]).unwrap_or(f64::NAN))
            .sum()
    }

    fn grad(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for ((x, &y), &wt) in self.examples.iter().zip(&self.targets).zip(&self.weights) {
            let coef = wt * (sigmoid(dot(w, x)) - y);
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += coef * xi;
            }
        }
        g
    }

    pub fn accuracy(&self, w: &[f64], threshold: f64) -> f64 {
        let hits = self
            .examples
            .iter()
            .zip(&self.targets)
            .filter(|(x, &y)| (sigmoid(dot(w, x)) >= threshold) == (y == 1.0))
            .count();
        hits as f64 / self.examples.len().max(1) as f64
    }
}

/// Builds the training set for tail position `tail_pos`.
pub fn row_problem(
    tail_pos: usize,
    space: &LabelSpace,
    generated: &GeneratedSet,
    reps: &Matrix,
    corpus: &Corpus,
    cfg: &AdjustConfig,
) -> Result<RowProblem> {
    let label = space.tail()[tail_pos];
    let mut positives: Vec<Vec<f64>> = generated
        .rows_for(label)
        .into_iter()
        .map(|i| generated.instances.row(i).to_vec())
        .collect();
    if positives.is_empty() {
        return Err(Error::Argument(format!(
            "tail label `{}` has no generated instances",
            space.name(label)
        )));
    }
    if cfg.include_real_shots {
        for (i, doc) in corpus.docs.iter().enumerate() {
            if doc.has_label(label) {
                positives.push(reps.row(i).to_vec());
            }
        }
    }
    let n_pos = positives.len();
    let mut rng = substream(cfg.seed, tail_pos as u64);
    let mut negatives: Vec<Vec<f64>> = Vec::new();
    if cfg.negative_policy == NegativePolicy::Balanced {
        let pool: Vec<usize> = (0..generated.len()).filter(|&i| generated.labels[i] != label).collect();
        if !pool.is_empty() {
            for _ in 0..n_pos {
                let i = pool[rng.random_range(0..pool.len())];
                negatives.push(generated.instances.row(i).to_vec());
            }
        }
    }
    let head_pool: Vec<usize> = corpus
        .docs
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.has_label(label) && space.head().iter().any(|&h| d.has_label(h)))
        .map(|(i, _)| i)
        .collect();
    if !head_pool.is_empty() {
        for _ in 0..n_pos {
            let i = head_pool[rng.random_range(0..head_pool.len())];
            negatives.push(reps.row(i).to_vec());
        }
    }
    if negatives.is_empty() {
        return Err(Error::Argument(format!(
            "no negative examples available for tail label `{}`",
            space.name(label)
        )));
    }
    let n_neg = negatives.len();
    let mut weights = vec![1.0 / n_pos as f64; n_pos];
    weights.extend(std::iter::repeat_n(1.0 / n_neg as f64, n_neg));
    let mut targets = vec![1.0; n_pos];
    targets.extend(std::iter::repeat_n(0.0, n_neg));
    positives.extend(negatives);
    Ok(RowProblem {
        examples: positives,
        targets,
        weights,
    })
}

#[derive(Clone, Debug)]
pub struct Adjusted {
    pub classifier: ClassifierWeights,
    /// Per tail row: weighted training loss at the start of each epoch, then the final loss.
    pub histories: Vec<Vec<f64>>,
}

/// Retrains tail rows, warm-started from `cls`, and concatenates them with the untouched head rows.
pub fn adjust(
    cls: &ClassifierWeights,
    space: &LabelSpace,
    generated: &GeneratedSet,
    reps: &Matrix,
    corpus: &Corpus,
    cfg: &AdjustConfig,
) -> Result<Adjusted> {
    if cfg.adam.lr.is_nan() || cfg.adam.lr <= 0.0 {
        return Err(Error::Argument("learning rate must be positive".into()));
    }
    if generated.is_empty() {
        return Err(Error::Argument("generated set is empty".into()));
    }
    if cls.n_head != space.head().len() || cls.n_labels() != space.len() {
        return Err(Error::Shape(format!(
            "classifier has {} rows ({} head) but the label space has {} labels ({} head)",
            cls.n_labels(),
            cls.n_head,
            space.len(),
            space.head().len()
        )));
    }
    if reps.cols() != cls.dim() || generated.instances.cols() != cls.dim() {
        return Err(Error::Shape("representation dimension differs from classifier".into()));
    }
    let rows = par::map_range(space.tail().len(), |t| -> Result<(Vec<f64>, Vec<f64>)> {
        let problem = row_problem(t, space, generated, reps, corpus, cfg)?;
        let mut w = cls.weights.row(cls.n_head + t).to_vec();
        let mut opt = Adam::new(cfg.adam, w.len());
        let mut history = Vec::with_capacity(cfg.epochs + 1);
        for epoch in 0..cfg.epochs {
            let loss = problem.loss(&w);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: format!("tail row {t} loss is {loss}"),
                });
            }
            history.push(loss);
            let g = problem.grad(&w);
            opt.step(&mut w, &g);
        }
        history.push(problem.loss(&w));
        Ok((w, history))
    });
    let mut tail = Matrix::zeros(space.tail().len(), cls.dim());
    let mut histories = Vec::with_capacity(rows.len());
    for (t, r) in rows.into_iter().enumerate() {
        let (w, h) = r?;
        tail.row_mut(t).copy_from_slice(&w);
        histories.push(h);
    }
    let classifier = concat(&cls.head(), &tail)?;
    Ok(Adjusted { classifier, histories })
}

pub fn concat(head: &Matrix, tail: &Matrix) -> Result<ClassifierWeights> {
    ClassifierWeights::concat(head, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_orders_head_then_tail() {
        let head = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap();
        let tail = Matrix::from_rows(&[vec![5.0, 5.0]], 2).unwrap();
        let c = concat(&head, &tail).unwrap();
        assert_eq!(c.n_labels(), 3);
        assert_eq!(c.weights.row(2), &[5.0, 5.0]);
        let again = concat(&c.head(), &c.tail()).unwrap();
        assert!(again.weights.bit_eq(&c.weights));
        assert!(concat(&head, &Matrix::zeros(1, 3)).is_err());
    }
}
