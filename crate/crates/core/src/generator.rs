//! Tail-label instance generation.
//!
//! A tail label `j` is summarized by a prototype `o_j` (mean of a few of its
//! documents). Each head relation `c` of head label `b` produces the synthetic
//! instance `g = W (o_j + c)`. The transfer matrix `W` is fitted to
//!
//! ```text
//! L_gen = Σ_{j,b,z} ‖o_j − g‖²
//! L_var = Σ_{j,b,z} ‖Q Qᵀ g − g‖²
//! L_div = −Σ_{j,b} Σ_z ‖Qᵀ g_z − mean_{z'} Qᵀ g_{z'}‖²     (mean within the (j, b) group)
//! L     = α L_gen + β L_var + γ L_div
//! ```
//!
//! With `u = o + c`, the gradient is `∂L/∂W = Σ (∂L/∂g) uᵀ` where
//!
//! ```text
//! ∂L/∂g_z = 2α (g_z − o) + 2β (P − I)ᵀ (P − I) g_z − 2γ Q (Qᵀ g_z − ȳ),   P = Q Qᵀ
//! ```
//!
//! The mean term of `L_div` contributes nothing extra because deviations from a
//! mean sum to zero.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace};
use crate::eigen::EigenBasis;
use crate::error::{Error, Result};
use crate::linalg::{add, axpy, mean_rows, norm_sq, sub, Matrix};
use crate::optim::{Adam, AdamConfig};
use crate::par;
use crate::relations::RelationSet;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq)]
pub struct Prototype {
    pub label: usize,
    pub o: Vec<f64>,
    /// Sampled document indices, ascending.
    pub docs: Vec<usize>,
}

impl Prototype {
    pub fn q_used(&self) -> usize {
        self.docs.len()
    }
}

/// Mean of `min(q, available)` documents of `label`, drawn without replacement
/// from ChaCha stream `label` of `seed`.
pub fn prototype(reps: &Matrix, label_docs: &[usize], label: usize, q: usize, seed: u64) -> Result<Prototype> {
    if q == 0 {
        return Err(Error::Argument("q must be at least 1".into()));
    }
    if label_docs.is_empty() {
        return Err(Error::Argument(format!("label {label} has no documents")));
    }
    let mut rng = substream(seed, label as u64);
    let take = q.min(label_docs.len());
    let mut docs: Vec<usize> = index::sample(&mut rng, label_docs.len(), take)
        .into_iter()
        .map(|i| label_docs[i])
        .collect();
    docs.sort_unstable();
    let o = mean_rows(docs.iter().map(|&i| reps.row(i)), reps.cols());
    Ok(Prototype { label, o, docs })
}

/// One prototype per tail label, in label-space tail order.
pub fn prototypes(reps: &Matrix, corpus: &Corpus, space: &LabelSpace, q: usize, seed: u64) -> Result<Vec<Prototype>> {
    let docs = corpus.label_docs(space.len());
    space
        .tail()
        .iter()
        .map(|&label| {
            prototype(reps, &docs[label], label, q, seed).map_err(|e| match e {
                Error::Argument(_) if docs[label].is_empty() => Error::Argument(format!(
                    "tail label `{}` has no documents",
                    space.name(label)
                )),
                e => e,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferScope {
    /// One matrix for all tail labels.
    #[default]
    Shared,
    /// One matrix per tail label.
    PerLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub scope: TransferScope,
    /// One entry when shared, otherwise one per tail label (tail order).
    pub weights: Vec<Matrix>,
}

impl TransferMatrix {
    pub fn identity(d: usize, scope: TransferScope, n_tail: usize) -> Self {
        let count = match scope {
            TransferScope::Shared => 1,
            TransferScope::PerLabel => n_tail,
        };
        TransferMatrix {
            scope,
            weights: vec![Matrix::identity(d); count],
        }
    }

    pub fn shared(w: Matrix) -> Self {
        TransferMatrix {
            scope: TransferScope::Shared,
            weights: vec![w],
        }
    }

    /// Matrix applied to generations of the `tail_pos`-th tail label.
    pub fn for_tail(&self, tail_pos: usize) -> &Matrix {
        match self.scope {
            TransferScope::Shared => &self.weights[0],
            TransferScope::PerLabel => &self.weights[tail_pos],
        }
    }

    fn slot(&self, tail_pos: usize) -> usize {
        match self.scope {
            TransferScope::Shared => 0,
            TransferScope::PerLabel => tail_pos,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
    /// Shots per tail prototype.
    pub q: usize,
    pub scope: TransferScope,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            epochs: 200,
            seed: 0,
            q: 5,
            scope: TransferScope::Shared,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub gen: f64,
    pub div: f64,
    pub var: f64,
    pub transfer: f64,
    /// Number of generated instances the sums run over.
    pub instances: usize,
}

impl Losses {
    fn combine(gen: f64, div: f64, var: f64, w: LossWeights, instances: usize) -> Self {
        Losses {
            gen,
            div,
            var,
            transfer: w.alpha * gen + w.beta * var + w.gamma * div,
            instances,
        }
    }

    pub fn mean_gen(&self) -> f64 {
        self.gen / self.instances.max(1) as f64
    }

    pub fn mean_var(&self) -> f64 {
        self.var / self.instances.max(1) as f64
    }

    pub fn mean_div(&self) -> f64 {
        self.div / self.instances.max(1) as f64
    }
}

fn check_inputs(w: &TransferMatrix, protos: &[Prototype], rel: &RelationSet, basis: &EigenBasis) -> Result<usize> {
    if protos.is_empty() {
        return Err(Error::Argument("no tail prototypes".into()));
    }
    if rel.per_label.is_empty() {
        return Err(Error::Argument("relation set is empty".into()));
    }
    if let Some(lr) = rel.per_label.iter().find(|lr| lr.vectors.rows() == 0) {
        return Err(Error::Argument(format!("head label {} contributes no relations", lr.label)));
    }
    let d = protos[0].o.len();
    if rel.dim() != d || basis.dim() != d || protos.iter().any(|p| p.o.len() != d) {
        return Err(Error::Shape("prototype, relation and eigenbasis dimensions differ".into()));
    }
    if w.scope == TransferScope::PerLabel && w.weights.len() != protos.len() {
        return Err(Error::Shape(format!(
            "{} per-label transfer matrices for {} tail labels",
            w.weights.len(),
            protos.len()
        )));
    }
    if w.weights.iter().any(|m| m.shape() != (d, d)) {
        return Err(Error::Shape(format!("transfer matrix must be {d}x{d}")));
    }
    Ok(d)
}

struct GroupResult {
    gen: f64,
    div: f64,
    var: f64,
    grad: Option<Matrix>,
}

fn group_terms(
    w: &Matrix,
    o: &[f64],
    relations: &Matrix,
    basis: &EigenBasis,
    lw: LossWeights,
    with_grad: bool,
) -> GroupResult {
    let p = relations.rows();
    let d = o.len();
    let inputs: Vec<Vec<f64>> = (0..p).map(|z| add(o, relations.row(z))).collect();
    let gens: Vec<Vec<f64>> = inputs.iter().map(|u| w.matvec(u)).collect();
    let coords: Vec<Vec<f64>> = gens.iter().map(|g| basis.coords(g)).collect();
    let center = mean_rows(coords.iter().map(Vec::as_slice), basis.rank());

    let mut gen = 0.0;
    let mut var = 0.0;
    let mut div = 0.0;
    let mut grad = with_grad.then(|| Matrix::zeros(d, d));
    for z in 0..p {
        let g = &gens[z];
        let to_proto = sub(g, o);
        gen += norm_sq(&to_proto);
        // e = (P - I) g
        let e = sub(&basis.q.matvec(&coords[z]), g);
        var += norm_sq(&e);
        let spread = sub(&coords[z], &center);
        div -= norm_sq(&spread);
        if let Some(grad) = &mut grad {
            let mut dg = vec![0.0; d];
            axpy(&mut dg, 2.0 * lw.alpha, &to_proto);
            // (P - I)ᵀ e = Q Qᵀ e - e
            let back = sub(&basis.project(&e), &e);
            axpy(&mut dg, 2.0 * lw.beta, &back);
            axpy(&mut dg, -2.0 * lw.gamma, &basis.q.matvec(&spread));
            grad.add_outer(1.0, &dg, &inputs[z]);
        }
    }
    GroupResult { gen, div, var, grad }
}

fn evaluate(
    w: &TransferMatrix,
    protos: &[Prototype],
    rel: &RelationSet,
    basis: &EigenBasis,
    lw: LossWeights,
    with_grad: bool,
) -> Result<(Losses, Option<Vec<Matrix>>)> {
    let d = check_inputs(w, protos, rel, basis)?;
    let n_head = rel.per_label.len();
    let groups = par::map_range(protos.len() * n_head, |k| {
        let (j, b) = (k / n_head, k % n_head);
        group_terms(w.for_tail(j), &protos[j].o, &rel.per_label[b].vectors, basis, lw, with_grad)
    });
    let (mut gen, mut div, mut var) = (0.0, 0.0, 0.0);
    let mut grads = with_grad.then(|| vec![Matrix::zeros(d, d); w.weights.len()]);
    for (k, g) in groups.into_iter().enumerate() {
        gen += g.gen;
        div += g.div;
        var += g.var;
        if let (Some(acc), Some(part)) = (&mut grads, &g.grad) {
            acc[w.slot(k / n_head)].add_assign(part);
        }
    }
    Ok((Losses::combine(gen, div, var, lw, protos.len() * rel.len()), grads))
}

pub fn losses(
    w: &TransferMatrix,
    protos: &[Prototype],
    rel: &RelationSet,
    basis: &EigenBasis,
    lw: LossWeights,
) -> Result<Losses> {
    Ok(evaluate(w, protos, rel, basis, lw, false)?.0)
}

/// Analytic gradient of the weighted transfer loss, one matrix per entry of `w.weights`.
pub fn grad_w(
    w: &TransferMatrix,
    protos: &[Prototype],
    rel: &RelationSet,
    basis: &EigenBasis,
    lw: LossWeights,
) -> Result<(Losses, Vec<Matrix>)> {
    let (l, g) = evaluate(w, protos, rel, basis, lw, true)?;
    Ok((l, g.unwrap_or_default()))
}

#[derive(Clone, Debug)]
pub struct TransferFit {
    pub transfer: TransferMatrix,
    /// Losses at the start of each epoch, followed by the losses of the returned matrix.
    pub history: Vec<Losses>,
    pub initial: Losses,
    pub fitted: Losses,
}

/// Fits `W` with full-batch Adam starting from the identity. Returns the iterate
/// with the lowest weighted loss seen, so the result never scores worse than
/// the starting point.
pub fn train_w(
    protos: &[Prototype],
    rel: &RelationSet,
    basis: &EigenBasis,
    cfg: &TransferConfig,
) -> Result<TransferFit> {
    let lw = cfg.weights;
    if lw.alpha < 0.0 || lw.beta < 0.0 || lw.gamma < 0.0 {
        return Err(Error::Argument("loss weights must be non-negative".into()));
    }
    if cfg.adam.lr.is_nan() || cfg.adam.lr <= 0.0 {
        return Err(Error::Argument("learning rate must be positive".into()));
    }
    let d = protos.first().map_or(0, |p| p.o.len());
    let mut w = TransferMatrix::identity(d, cfg.scope, protos.len());
    let mut opts: Vec<Adam> = w.weights.iter().map(|m| Adam::for_matrix(cfg.adam, m)).collect();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut best: Option<(Losses, TransferMatrix)> = None;
    for epoch in 0..cfg.epochs {
        let (l, grads) = grad_w(&w, protos, rel, basis, lw)?;
        if !l.transfer.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("transfer loss is {}", l.transfer),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| l.transfer < b.transfer) {
            best = Some((l, w.clone()));
        }
        history.push(l);
        for ((m, g), opt) in w.weights.iter_mut().zip(&grads).zip(&mut opts) {
            opt.step_matrix(m, g);
        }
    }
    let last = losses(&w, protos, rel, basis, lw)?;
    if !last.transfer.is_finite() || !w.is_finite() {
        return Err(Error::Training {
            epoch: cfg.epochs,
            msg: format!("transfer loss is {}", last.transfer),
        });
    }
    if best.as_ref().is_none_or(|(b, _)| last.transfer < b.transfer) {
        best = Some((last, w));
    }
    let (fitted, transfer) = best.expect("at least the final iterate is recorded");
    history.push(fitted);
    let initial = history[0];
    Ok(TransferFit {
        transfer,
        history,
        initial,
        fitted,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedEntry {
    /// Position of the tail label in the label-space tail list.
    pub tail_pos: usize,
    /// Position of the head label in the relation set.
    pub head_pos: usize,
    /// Relation row within that head label.
    pub z: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetPolicy {
    #[default]
    All,
    /// At most `per_group` relations per (tail, head) group, drawn without replacement.
    Sample { per_group: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSet {
    /// One generated instance per row.
    pub instances: Matrix,
    pub entries: Vec<GeneratedEntry>,
    /// Tail label index (into the label space) of each row.
    pub labels: Vec<usize>,
    pub policy: SubsetPolicy,
}

impl GeneratedSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows generated for tail label `label`.
    pub fn rows_for(&self, label: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// `g = W (o + c)` for every tail prototype and every (selected) relation,
/// ordered by tail label, then head label, then relation index.
pub fn generate(w: &TransferMatrix, protos: &[Prototype], rel: &RelationSet, policy: SubsetPolicy) -> Result<GeneratedSet> {
    if rel.is_empty() {
        return Err(Error::Argument("cannot generate from an empty relation set".into()));
    }
    let d = rel.dim();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut labels = Vec::new();
    for (j, proto) in protos.iter().enumerate() {
        if proto.o.len() != d {
            return Err(Error::Shape("prototype and relation dimensions differ".into()));
        }
        let m = w.for_tail(j);
        if m.shape() != (d, d) {
            return Err(Error::Shape(format!("transfer matrix must be {d}x{d}")));
        }
        for (b, lr) in rel.per_label.iter().enumerate() {
            let zs: Vec<usize> = match policy {
                SubsetPolicy::All => (0..lr.vectors.rows()).collect(),
                SubsetPolicy::Sample { per_group, seed } => {
                    let n = lr.vectors.rows();
                    let mut rng = substream(seed, (j * rel.per_label.len() + b) as u64);
                    let mut zs = index::sample(&mut rng, n, per_group.min(n)).into_vec();
                    zs.sort_unstable();
                    zs
                }
            };
            for z in zs {
                rows.push(m.matvec(&add(&proto.o, lr.vectors.row(z))));
                entries.push(GeneratedEntry { tail_pos: j, head_pos: b, z });
                labels.push(proto.label);
            }
        }
    }
    Ok(GeneratedSet {
        instances: Matrix::from_rows(&rows, d)?,
        entries,
        labels,
        policy,
    })
}
