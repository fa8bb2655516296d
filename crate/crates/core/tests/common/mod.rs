#![allow(dead_code)]

use rand::Rng;
use tailaug::corpus::{Corpus, Document, EmbeddingTable, LabelSpace};
use tailaug::eigen::EigenBasis;
use tailaug::extractor::{AttentionExtractor, ClassifierWeights, ExtractorShape};
use tailaug::generator::{Prototype, TransferMatrix, TransferScope};
use tailaug::relations::{LabelRelations, RelationSet};
use tailaug::rng::{rng, StreamRng};
use tailaug::Matrix;

/// P@k by counting, for every label, how many labels outrank it.
pub fn brute_precision(scores: &[f64], truth: &[bool], k: usize) -> f64 {
    let hits = (0..scores.len())
        .filter(|&i| truth[i] && rank_of(scores, i) < k)
        .count();
    hits as f64 / k as f64
}

pub fn brute_ndcg(scores: &[f64], truth: &[bool], k: usize) -> f64 {
    let mut dcg = 0.0;
    for i in 0..scores.len() {
        let r = rank_of(scores, i);
        if truth[i] && r < k {
            dcg += 1.0 / (r as f64 + 2.0).log2();
        }
    }
    let relevant = truth.iter().filter(|&&t| t).count();
    let ideal: f64 = (0..relevant.min(k)).map(|r| 1.0 / (r as f64 + 2.0).log2()).sum();
    dcg / ideal
}

/// Zero-based rank; ties go to the lower index.
fn rank_of(scores: &[f64], i: usize) -> usize {
    (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

/// Classical Jacobi with the largest off-diagonal element as pivot.
/// Returns eigenvalues descending and eigenvectors as columns.
pub fn max_pivot_jacobi(s: &Matrix) -> (Vec<f64>, Matrix) {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..(50 * n * n).max(1) {
        let (mut p, mut q, mut big) = (0, 0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big <= 1e-17 * scale {
            break;
        }
        let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let t = if theta == 0.0 { 1.0 } else { t };
        let c = 1.0 / (t * t + 1.0).sqrt();
        let sn = t * c;
        for k in 0..n {
            let (akp, akq) = (a[k][p], a[k][q]);
            a[k][p] = c * akp - sn * akq;
            a[k][q] = sn * akp + c * akq;
        }
        for k in 0..n {
            let (apk, aqk) = (a[p][k], a[q][k]);
            a[p][k] = c * apk - sn * aqk;
            a[q][k] = sn * apk + c * aqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - sn * vq;
            row[q] = sn * vp + c * vq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (values, vectors)
}

pub fn random_matrix(rng: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vec(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_symmetric(rng: &mut StreamRng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n, 1.0);
    Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Orthogonal matrix by Gram-Schmidt on a random square matrix.
pub fn random_orthogonal(rng: &mut StreamRng, n: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v = random_vec(rng, n, 1.0);
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= d * ci;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Random orthonormal d x m basis.
pub fn random_basis(rng: &mut StreamRng, d: usize, m: usize) -> EigenBasis {
    let r = random_orthogonal(rng, d);
    EigenBasis {
        q: Matrix::from_fn(d, m, |i, j| r[(i, j)]),
        eigenvalues: vec![1.0; m],
        explained_ratio: 1.0,
    }
}

/// A small random transfer problem.
pub struct TransferCase {
    pub protos: Vec<Prototype>,
    pub rel: RelationSet,
    pub basis: EigenBasis,
    pub w: TransferMatrix,
}

pub fn transfer_case(seed: u64, scope: TransferScope) -> TransferCase {
    let mut r = rng(seed);
    let d = r.random_range(2..=8);
    let m = r.random_range(1..=d);
    let n_tail = r.random_range(1..=3);
    let n_head = r.random_range(1..=3);
    let p = r.random_range(1..=3);
    let protos = (0..n_tail)
        .map(|j| Prototype {
            label: n_head + j,
            o: random_vec(&mut r, d, 2.0),
            docs: vec![j],
        })
        .collect();
    let per_label = (0..n_head)
        .map(|b| LabelRelations {
            label: b,
            vectors: random_matrix(&mut r, p, d, 1.0),
            provenance: vec![(0, 1); p],
        })
        .collect();
    let basis = random_basis(&mut r, d, m);
    let mut w = TransferMatrix::identity(d, scope, n_tail);
    for m in &mut w.weights {
        for x in m.as_mut_slice() {
            *x += r.random_range(-0.5..0.5);
        }
    }
    TransferCase {
        protos,
        rel: RelationSet { p, per_label },
        basis,
        w,
    }
}

/// A small random text problem for stage-1 gradient checks.
pub struct TextCase {
    pub ex: AttentionExtractor,
    pub cls: ClassifierWeights,
    pub docs: Vec<Vec<Option<usize>>>,
    pub targets: Vec<Vec<f64>>,
}

pub fn text_case(seed: u64) -> TextCase {
    let mut r = rng(seed);
    let e = r.random_range(2..=5);
    let shape = ExtractorShape {
        da: r.random_range(1..=4),
        heads: r.random_range(1..=3),
        d: r.random_range(1..=8),
    };
    let vocab_size = 6;
    let vocab: Vec<String> = (0..vocab_size).map(|i| format!("w{i}")).collect();
    let emb = random_matrix(&mut r, vocab_size, e, 1.0);
    let mut ex = AttentionExtractor::with_embeddings(vocab, emb, shape, seed).unwrap();
    ex.w1 = random_matrix(&mut r, shape.da, e, 1.0);
    ex.w2 = random_matrix(&mut r, shape.heads, shape.da, 1.0);
    ex.p_agg = random_matrix(&mut r, shape.d, e, 1.0);
    let n_labels = 3;
    let cls = ClassifierWeights::new(random_matrix(&mut r, n_labels, shape.d, 1.0), 2).unwrap();
    let n_docs = r.random_range(1..=3);
    let docs = (0..n_docs)
        .map(|_| {
            let len = r.random_range(1..=5);
            (0..len)
                .map(|_| {
                    if r.random_bool(0.15) {
                        None
                    } else {
                        Some(r.random_range(0..vocab_size))
                    }
                })
                .collect()
        })
        .collect();
    let targets = (0..n_docs)
        .map(|_| (0..n_labels).map(|_| f64::from(r.random_bool(0.5))).collect())
        .collect();
    TextCase { ex, cls, docs, targets }
}

impl TextCase {
    pub fn loss(&self, ex: &AttentionExtractor, cls: &ClassifierWeights) -> f64 {
        let caches: Vec<_> = self
            .docs
            .iter()
            .map(|d| ex.forward(d, &vec![true; d.len()]).unwrap())
            .collect();
        ex.backward(cls, &caches, &self.targets, false).unwrap().0
    }
}

/// Relative error with a small floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// A tiny token corpus over distinct words, plus an embedding table covering them.
pub fn toy_text(n_docs: usize, n_labels: usize, seed: u64) -> (Corpus, LabelSpace, EmbeddingTable) {
    let mut r = rng(seed);
    let words: Vec<String> = (0..4 * n_labels).map(|i| format!("tok{i}")).collect();
    let vectors = random_matrix(&mut r, words.len(), 4, 1.0);
    let table = EmbeddingTable::from_parts(words.clone(), vectors).unwrap();
    let mut freq = vec![0; n_labels];
    let docs = (0..n_docs)
        .map(|i| {
            let label = i % n_labels;
            freq[label] += 1;
            let tokens = (0..3).map(|_| words[4 * label + r.random_range(0..4)].clone()).collect();
            Document {
                id: format!("d{i}"),
                tokens,
                labels: vec![label],
            }
        })
        .collect();
    let names = (0..n_labels).map(|l| format!("L{l}")).collect();
    let space = LabelSpace::new(names, freq).unwrap();
    (Corpus { docs }, space, table)
}
