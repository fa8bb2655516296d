//! Pairwise instance relations harvested from head labels.
//!
//! For each head label, `p` ordered pairs of distinct documents carrying the
//! label are drawn (with replacement across pairs) and the difference of their
//! representations is stored together with the pair that produced it.

use rand::Rng;

use crate::corpus::{Corpus, LabelSpace};
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm, sub, Matrix};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelRelations {
    pub label: usize,
    /// p x d, one relation per row
    pub vectors: Matrix,
    /// Document indices `(first, second)` behind each row: row = r[first] - r[second].
    pub provenance: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationSet {
    pub p: usize,
    /// One entry per head label, in label-space head order.
    pub per_label: Vec<LabelRelations>,
}

impl RelationSet {
    pub fn len(&self) -> usize {
        self.per_label.iter().map(|l| l.vectors.rows()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.per_label.first().map_or(0, |l| l.vectors.cols())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.per_label
            .iter()
            .flat_map(|l| (0..l.vectors.rows()).map(move |z| l.vectors.row(z)))
    }

    /// Checks every stored vector against the difference of its provenance pair, bit for bit.
    pub fn verify(&self, reps: &Matrix) -> bool {
        self.per_label.iter().all(|lr| {
            lr.provenance.iter().enumerate().all(|(z, &(a, b))| {
                sub(reps.row(a), reps.row(b))
                    .iter()
                    .zip(lr.vectors.row(z))
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            })
        })
    }
}

/// Draws an ordered pair of distinct positions in `0..n` (n >= 2).
fn ordered_pair(rng: &mut impl Rng, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Collects `p` relations per head label. Label `b` draws from ChaCha stream `b`
/// of `seed`, so the result does not depend on collection order.
pub fn collect(reps: &Matrix, corpus: &Corpus, space: &LabelSpace, p: usize, seed: u64) -> Result<RelationSet> {
    if p == 0 {
        return Err(Error::Argument("p must be at least 1".into()));
    }
    if reps.rows() != corpus.len() {
        return Err(Error::Shape(format!(
            "{} representations for {} documents",
            reps.rows(),
            corpus.len()
        )));
    }
    let docs = corpus.label_docs(space.len());
    let per_label = crate::par::map_range(space.head().len(), |h| {
        let label = space.head()[h];
        let pool = &docs[label];
        if pool.len() < 2 {
            return Err(Error::Collection(format!(
                "head label `{}` has {} document(s); at least 2 are needed",
                space.name(label),
                pool.len()
            )));
        }
        let mut rng = substream(seed, label as u64);
        let mut vectors = Matrix::zeros(p, reps.cols());
        let mut provenance = Vec::with_capacity(p);
        for z in 0..p {
            let (i, j) = ordered_pair(&mut rng, pool.len());
            let (a, b) = (pool[i], pool[j]);
            vectors.row_mut(z).copy_from_slice(&sub(reps.row(a), reps.row(b)));
            provenance.push((a, b));
        }
        Ok(LabelRelations {
            label,
            vectors,
            provenance,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RelationSet { p, per_label })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationStats {
    /// (label, mean relation norm)
    pub per_label_mean_norm: Vec<(usize, f64)>,
    pub mean_norm: f64,
    pub global_mean: Vec<f64>,
}

pub fn relation_stats(set: &RelationSet) -> Result<RelationStats> {
    if set.is_empty() {
        return Err(Error::Argument("relation set is empty".into()));
    }
    let d = set.dim();
    let mut global = vec![0.0; d];
    let mut norm_total = 0.0;
    let mut per_label = Vec::with_capacity(set.per_label.len());
    for lr in &set.per_label {
        let mut label_total = 0.0;
        for z in 0..lr.vectors.rows() {
            let c = lr.vectors.row(z);
            label_total += norm(c);
            axpy(&mut global, 1.0, c);
        }
        norm_total += label_total;
        per_label.push((lr.label, label_total / lr.vectors.rows().max(1) as f64));
    }
    let n = set.len() as f64;
    for g in &mut global {
        *g /= n;
    }
    Ok(RelationStats {
        per_label_mean_norm: per_label,
        mean_norm: norm_total / n,
        global_mean: global,
    })
}
