//! Stage 1: multi-head attention pooling over word embeddings, a sigmoid
//! classifier on top, and joint training with binary cross-entropy.
//!
//! Shapes, with `n` tokens, embedding size `e`, attention hidden size `da`,
//! `s` heads and representation size `d`:
//!
//! ```text
//! H  : n x e           token embeddings (one row per token)
//! A  = softmax_row(W2 · tanh(W1 · Hᵀ))      s x n, masked positions get 0
//! M  = A · H                                s x e
//! r  = P_agg · mean_rows(M)                 d
//! ŷ  = sigmoid(W_a · r)                     l
//! ```
//!
//! When precomputed features are supplied the attention part is bypassed and
//! only `W_a` is trained.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingTable, FeatureFile, LabelSpace};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::optim::{Adam, AdamConfig};
use crate::par;
use crate::rng::{self, derive_seed, StreamRng};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Summed binary cross-entropy of sigmoid(logits) against 0/1 targets, in the
/// overflow-free form `max(x, 0) - x·y + ln(1 + e^-|x|)`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    Ok(logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum())
}

/// Summed binary cross-entropy on probabilities. Probabilities are clamped
/// away from 0 and 1; prefer [`bce_with_logits`] when logits are available.
pub fn bce_probs(probs: &[f64], targets: &[f64]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} targets",
            probs.len(),
            targets.len()
        )));
    }
    const EPS: f64 = 1e-15;
    Ok(probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum())
}

/// Label classifier `W_a` (l x d). Rows are in label-space order: head labels, then tail labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierWeights {
    pub weights: Matrix,
    pub n_head: usize,
}

impl ClassifierWeights {
    pub fn new(weights: Matrix, n_head: usize) -> Result<Self> {
        if n_head > weights.rows() {
            return Err(Error::Shape(format!(
                "{n_head} head rows in a {}-row classifier",
                weights.rows()
            )));
        }
        Ok(ClassifierWeights { weights, n_head })
    }

    pub fn n_labels(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_tail(&self) -> usize {
        self.n_labels() - self.n_head
    }

    pub fn head(&self) -> Matrix {
        self.weights.select_rows(&(0..self.n_head).collect::<Vec<_>>())
    }

    pub fn tail(&self) -> Matrix {
        self.weights
            .select_rows(&(self.n_head..self.n_labels()).collect::<Vec<_>>())
    }

    /// `W_a = [W_head ; W_tail]`
    pub fn concat(head: &Matrix, tail: &Matrix) -> Result<Self> {
        let weights = head.vstack(tail)?;
        ClassifierWeights::new(weights, head.rows())
    }

    pub fn logits(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.dim() {
            return Err(Error::Shape(format!(
                "representation has {} entries, classifier expects {}",
                r.len(),
                self.dim()
            )));
        }
        Ok(self.weights.matvec(r))
    }

    pub fn predict(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(r)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict_all(&self, reps: &Matrix) -> Result<Matrix> {
        let rows = (0..reps.rows())
            .map(|i| self.predict(reps.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows, self.n_labels())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorShape {
    /// attention hidden size
    pub da: usize,
    /// attention heads
    pub heads: usize,
    /// representation size
    pub d: usize,
}

impl Default for ExtractorShape {
    fn default() -> Self {
        ExtractorShape { da: 100, heads: 4, d: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_embeddings: bool,
    /// Stop once the relative change in epoch loss stays below this for 3 epochs.
    pub early_stop_tol: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 20,
            batch_size: 32,
            seed: 0,
            train_embeddings: false,
            early_stop_tol: Some(1e-4),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Token id in the extractor vocabulary; `None` is out of vocabulary (zero vector).
pub type TokenId = Option<usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionExtractor {
    pub vocab: Vec<String>,
    /// vocab x e
    pub embeddings: Matrix,
    /// da x e
    pub w1: Matrix,
    /// heads x da
    pub w2: Matrix,
    /// d x e
    pub p_agg: Matrix,
    index: HashMap<String, usize>,
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    tokens: Vec<TokenId>,
    /// n x e
    h: Matrix,
    /// n x da, tanh(W1 h_t) per position
    t: Matrix,
    /// heads x n
    pub attention: Matrix,
    /// mean over heads of M, length e
    pooled: Vec<f64>,
    pub representation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub p_agg: Matrix,
    pub classifier: Matrix,
    /// Present only when embeddings are trainable.
    pub embeddings: Option<Matrix>,
}

impl Gradients {
    fn zeros(ex: &AttentionExtractor, cls: &ClassifierWeights, with_embeddings: bool) -> Self {
        Gradients {
            w1: Matrix::zeros(ex.w1.rows(), ex.w1.cols()),
            w2: Matrix::zeros(ex.w2.rows(), ex.w2.cols()),
            p_agg: Matrix::zeros(ex.p_agg.rows(), ex.p_agg.cols()),
            classifier: Matrix::zeros(cls.weights.rows(), cls.weights.cols()),
            embeddings: with_embeddings
                .then(|| Matrix::zeros(ex.embeddings.rows(), ex.embeddings.cols())),
        }
    }

    fn add(&mut self, other: &Gradients) {
        self.w1.add_assign(&other.w1);
        self.w2.add_assign(&other.w2);
        self.p_agg.add_assign(&other.p_agg);
        self.classifier.add_assign(&other.classifier);
        if let (Some(a), Some(b)) = (&mut self.embeddings, &other.embeddings) {
            a.add_assign(b);
        }
    }

    fn scale(&mut self, s: f64) {
        self.w1.scale(s);
        self.w2.scale(s);
        self.p_agg.scale(s);
        self.classifier.scale(s);
        if let Some(e) = &mut self.embeddings {
            e.scale(s);
        }
    }
}

fn xavier(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl AttentionExtractor {
    /// Randomly initialized extractor whose vocabulary is the intersection of the
    /// embedding table with the corpus tokens (in table order).
    pub fn new(table: &EmbeddingTable, corpus: &Corpus, shape: ExtractorShape, seed: u64) -> Result<Self> {
        if shape.da == 0 || shape.heads == 0 || shape.d == 0 {
            return Err(Error::Argument("da, heads and d must be at least 1".into()));
        }
        let mut used = vec![false; table.len()];
        for doc in &corpus.docs {
            for tok in &doc.tokens {
                if let Some(i) = table.id_of(tok) {
                    used[i] = true;
                }
            }
        }
        let keep: Vec<usize> = (0..table.len()).filter(|&i| used[i]).collect();
        let vocab: Vec<String> = keep.iter().map(|&i| table.words()[i].clone()).collect();
        let embeddings = table.vectors().select_rows(&keep);
        Self::with_embeddings(vocab, embeddings, shape, seed)
    }

    pub fn with_embeddings(vocab: Vec<String>, embeddings: Matrix, shape: ExtractorShape, seed: u64) -> Result<Self> {
        let e = embeddings.cols();
        let mut rng = rng::rng(derive_seed(seed, "extractor-init"));
        let w1 = xavier(&mut rng, shape.da, e);
        let w2 = xavier(&mut rng, shape.heads, shape.da);
        let p_agg = xavier(&mut rng, shape.d, e);
        Self::from_parts(vocab, embeddings, w1, w2, p_agg)
    }

    pub fn from_parts(vocab: Vec<String>, embeddings: Matrix, w1: Matrix, w2: Matrix, p_agg: Matrix) -> Result<Self> {
        let e = embeddings.cols();
        if vocab.len() != embeddings.rows() {
            return Err(Error::Shape("vocabulary and embedding rows differ".into()));
        }
        if w1.cols() != e || p_agg.cols() != e || w2.cols() != w1.rows() {
            return Err(Error::Shape(format!(
                "inconsistent extractor shapes: W1 {:?}, W2 {:?}, P_agg {:?}, e = {e}",
                w1.shape(),
                w2.shape(),
                p_agg.shape()
            )));
        }
        if w1.rows() == 0 || w2.rows() == 0 || p_agg.rows() == 0 {
            return Err(Error::Argument("da, heads and d must be at least 1".into()));
        }
        let mut ex = AttentionExtractor {
            vocab,
            embeddings,
            w1,
            w2,
            p_agg,
            index: HashMap::new(),
        };
        ex.reindex();
        Ok(ex)
    }

    fn reindex(&mut self) {
        self.index = self
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn heads(&self) -> usize {
        self.w2.rows()
    }

    pub fn dim(&self) -> usize {
        self.p_agg.rows()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.index.get(t).copied()).collect()
    }

    fn embedding(&self, tok: TokenId) -> Vec<f64> {
        match tok {
            Some(i) => self.embeddings.row(i).to_vec(),
            None => vec![0.0; self.embed_dim()],
        }
    }

    /// Forward pass; `mask[t] == false` marks padding.
    pub fn forward(&self, tokens: &[TokenId], mask: &[bool]) -> Result<ForwardCache> {
        if tokens.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} tokens with a {}-entry mask",
                tokens.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Representation("document has no non-padding tokens".into()));
        }
        let n = tokens.len();
        let e = self.embed_dim();
        let s = self.heads();
        let rows: Vec<Vec<f64>> = tokens.iter().map(|&t| self.embedding(t)).collect();
        let h = Matrix::from_rows(&rows, e)?;
        let mut t_mat = Matrix::zeros(n, self.w1.rows());
        for pos in 0..n {
            let z = self.w1.matvec(h.row(pos));
            for (dst, v) in t_mat.row_mut(pos).iter_mut().zip(z) {
                *dst = v.tanh();
            }
        }
        let mut attention = Matrix::zeros(s, n);
        for head in 0..s {
            let w2 = self.w2.row(head);
            let scores: Vec<f64> = (0..n).map(|pos| dot(w2, t_mat.row(pos))).collect();
            let max = (0..n)
                .filter(|&p| mask[p])
                .map(|p| scores[p])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for pos in 0..n {
                if mask[pos] {
                    let w = (scores[pos] - max).exp();
                    attention[(head, pos)] = w;
                    total += w;
                }
            }
            for v in attention.row_mut(head) {
                *v /= total;
            }
        }
        let mut pooled = vec![0.0; e];
        for head in 0..s {
            for pos in 0..n {
                axpy(&mut pooled, attention[(head, pos)] / s as f64, h.row(pos));
            }
        }
        let representation = self.p_agg.matvec(&pooled);
        Ok(ForwardCache {
            tokens: tokens.to_vec(),
            h,
            t: t_mat,
            attention,
            pooled,
            representation,
        })
    }

    /// Representation of an unpadded token sequence.
    pub fn represent(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let ids = self.encode(tokens);
        let mask = vec![true; ids.len()];
        Ok(self.forward(&ids, &mask)?.representation)
    }

    /// Gradient of the summed BCE of one document given its forward cache.
    fn doc_backward(
        &self,
        cls: &ClassifierWeights,
        cache: &ForwardCache,
        targets: &[f64],
        with_embeddings: bool,
    ) -> Result<(f64, Gradients)> {
        if cache.h.cols() != self.embed_dim() || cache.attention.rows() != self.heads() {
            return Err(Error::State("forward cache does not match this extractor".into()));
        }
        let r = &cache.representation;
        let logits = cls.logits(r)?;
        let loss = bce_with_logits(&logits, targets)?;
        let mut g = Gradients::zeros(self, cls, with_embeddings);
        let dlogit: Vec<f64> = logits.iter().zip(targets).map(|(&x, &y)| sigmoid(x) - y).collect();
        g.classifier.add_outer(1.0, &dlogit, r);
        let dr = cls.weights.matvec_t(&dlogit);
        g.p_agg.add_outer(1.0, &dr, &cache.pooled);
        let dpooled = self.p_agg.matvec_t(&dr);

        let n = cache.h.rows();
        let s = self.heads();
        let inv_s = 1.0 / s as f64;
        // dL/dA[i, t] is the same for every head.
        let da_col: Vec<f64> = (0..n).map(|pos| inv_s * dot(&dpooled, cache.h.row(pos))).collect();
        let mut dt = Matrix::zeros(n, self.w1.rows());
        for head in 0..s {
            let a = cache.attention.row(head);
            let expected = dot(a, &da_col);
            for pos in 0..n {
                let de = a[pos] * (da_col[pos] - expected);
                if de == 0.0 {
                    continue;
                }
                axpy(g.w2.row_mut(head), de, cache.t.row(pos));
                axpy(dt.row_mut(pos), de, self.w2.row(head));
            }
        }
        for pos in 0..n {
            let dz: Vec<f64> = dt
                .row(pos)
                .iter()
                .zip(cache.t.row(pos))
                .map(|(&d, &t)| d * (1.0 - t * t))
                .collect();
            g.w1.add_outer(1.0, &dz, cache.h.row(pos));
            if let (Some(ge), Some(id)) = (&mut g.embeddings, cache.tokens[pos]) {
                let mut dh = self.w1.matvec_t(&dz);
                let weight: f64 = (0..s).map(|head| cache.attention[(head, pos)]).sum::<f64>() * inv_s;
                axpy(&mut dh, weight, &dpooled);
                axpy(ge.row_mut(id), 1.0, &dh);
            }
        }
        Ok((loss, g))
    }

    /// Mean batch loss and its gradients. `caches[i]` must come from
    /// [`forward`](Self::forward) on document `i` of the batch.
    pub fn backward(
        &self,
        cls: &ClassifierWeights,
        caches: &[ForwardCache],
        targets: &[Vec<f64>],
        with_embeddings: bool,
    ) -> Result<(f64, Gradients)> {
        if caches.is_empty() {
            return Err(Error::State("backward called without a forward cache".into()));
        }
        if caches.len() != targets.len() {
            return Err(Error::State(format!(
                "{} forward caches for {} target rows",
                caches.len(),
                targets.len()
            )));
        }
        let parts = par::map_range(caches.len(), |i| {
            self.doc_backward(cls, &caches[i], &targets[i], with_embeddings)
        });
        let mut total = Gradients::zeros(self, cls, with_embeddings);
        let mut loss = 0.0;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            total.add(&g);
        }
        let inv = 1.0 / caches.len() as f64;
        total.scale(inv);
        Ok((loss * inv, total))
    }
}

/// Stage-1 result.
#[derive(Clone, Debug)]
pub struct Stage1 {
    pub extractor: Option<AttentionExtractor>,
    pub classifier: ClassifierWeights,
    pub loss_history: Vec<f64>,
}

fn early_stop(history: &[f64], tol: Option<f64>) -> bool {
    let Some(tol) = tol else { return false };
    if history.len() < 4 {
        return false;
    }
    history[history.len() - 4..]
        .windows(2)
        .all(|w| ((w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE)).abs() < tol)
}

fn init_classifier(n_labels: usize, n_head: usize, d: usize, seed: u64) -> ClassifierWeights {
    let mut rng = rng::rng(derive_seed(seed, "classifier-init"));
    ClassifierWeights {
        weights: xavier(&mut rng, n_labels, d),
        n_head,
    }
}

/// Trains the extractor and classifier jointly on token documents.
pub fn train_stage1(
    corpus: &Corpus,
    table: &EmbeddingTable,
    space: &LabelSpace,
    shape: ExtractorShape,
    cfg: &TrainConfig,
) -> Result<Stage1> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Argument("training corpus is empty".into()));
    }
    let mut ex = AttentionExtractor::new(table, corpus, shape, cfg.seed)?;
    let mut cls = init_classifier(space.len(), space.head().len(), shape.d, cfg.seed);
    let docs: Vec<Vec<TokenId>> = corpus.docs.iter().map(|d| ex.encode(&d.tokens)).collect();
    for (doc, ids) in corpus.docs.iter().zip(&docs) {
        if ids.is_empty() {
            return Err(Error::Representation(format!("document `{}` has no tokens", doc.id)));
        }
    }
    let targets: Vec<Vec<f64>> = corpus.docs.iter().map(|d| space.targets(d)).collect();

    let mut opt_w1 = Adam::for_matrix(cfg.adam, &ex.w1);
    let mut opt_w2 = Adam::for_matrix(cfg.adam, &ex.w2);
    let mut opt_p = Adam::for_matrix(cfg.adam, &ex.p_agg);
    let mut opt_cls = Adam::for_matrix(cfg.adam, &cls.weights);
    let mut opt_emb = Adam::for_matrix(cfg.adam, &ex.embeddings);
    let mut shuffle = rng::rng(derive_seed(cfg.seed, "stage1-shuffle"));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let caches = par::map_range(batch.len(), |i| {
                let ids = &docs[batch[i]];
                ex.forward(ids, &vec![true; ids.len()])
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let batch_targets: Vec<Vec<f64>> = batch.iter().map(|&i| targets[i].clone()).collect();
            let (loss, grads) = ex.backward(&cls, &caches, &batch_targets, cfg.train_embeddings)?;
            epoch_loss += loss * batch.len() as f64;
            opt_w1.step_matrix(&mut ex.w1, &grads.w1);
            opt_w2.step_matrix(&mut ex.w2, &grads.w2);
            opt_p.step_matrix(&mut ex.p_agg, &grads.p_agg);
            opt_cls.step_matrix(&mut cls.weights, &grads.classifier);
            if let Some(ge) = &grads.embeddings {
                opt_emb.step_matrix(&mut ex.embeddings, ge);
            }
        }
        let mean = epoch_loss / corpus.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("stage-1 loss is {mean}"),
            });
        }
        log::debug!("stage1 epoch {epoch}: loss {mean:.6}");
        history.push(mean);
        if early_stop(&history, cfg.early_stop_tol) {
            log::info!("stage1 converged after {} epochs", epoch + 1);
            break;
        }
    }
    Ok(Stage1 {
        extractor: Some(ex),
        classifier: cls,
        loss_history: history,
    })
}

/// Trains only the classifier on fixed representations (feature-file bypass).
pub fn train_classifier(
    reps: &Matrix,
    targets: &[Vec<f64>],
    n_head: usize,
    cfg: &TrainConfig,
) -> Result<Stage1> {
    cfg.validate()?;
    if reps.rows() == 0 {
        return Err(Error::Argument("no training representations".into()));
    }
    if targets.len() != reps.rows() {
        return Err(Error::Shape(format!(
            "{} representations for {} target rows",
            reps.rows(),
            targets.len()
        )));
    }
    let n_labels = targets[0].len();
    let mut cls = init_classifier(n_labels, n_head, reps.cols(), cfg.seed);
    let mut opt = Adam::for_matrix(cfg.adam, &cls.weights);
    let mut shuffle = rng::rng(derive_seed(cfg.seed, "stage1-shuffle"));
    let mut order: Vec<usize> = (0..reps.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let parts = par::map_range(batch.len(), |i| -> Result<(f64, Vec<f64>)> {
                let r = reps.row(batch[i]);
                let logits = cls.logits(r)?;
                let y = &targets[batch[i]];
                let loss = bce_with_logits(&logits, y)?;
                let dlogit = logits.iter().zip(y).map(|(&x, &t)| sigmoid(x) - t).collect();
                Ok((loss, dlogit))
            });
            let mut grad = Matrix::zeros(cls.weights.rows(), cls.weights.cols());
            for (i, part) in parts.into_iter().enumerate() {
                let (loss, dlogit) = part?;
                epoch_loss += loss;
                grad.add_outer(1.0, &dlogit, reps.row(batch[i]));
            }
            grad.scale(1.0 / batch.len() as f64);
            opt.step_matrix(&mut cls.weights, &grad);
        }
        let mean = epoch_loss / reps.rows() as f64;
        if !mean.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("stage-1 loss is {mean}"),
            });
        }
        history.push(mean);
        if early_stop(&history, cfg.early_stop_tol) {
            break;
        }
    }
    Ok(Stage1 {
        extractor: None,
        classifier: cls,
        loss_history: history,
    })
}

/// Representations for every document of `corpus`, in corpus order.
pub enum RepresentationSource<'a> {
    Extractor(&'a AttentionExtractor),
    Features(&'a FeatureFile),
}

pub fn represent_all(source: RepresentationSource<'_>, corpus: &Corpus) -> Result<Matrix> {
    match source {
        RepresentationSource::Features(ff) => {
            let mut data = Vec::with_capacity(corpus.len() * ff.dim());
            for doc in &corpus.docs {
                let row = ff
                    .get(&doc.id)
                    .ok_or_else(|| Error::Lookup(format!("doc_id `{}` missing from feature file", doc.id)))?;
                data.extend_from_slice(row);
            }
            Matrix::from_vec(corpus.len(), ff.dim(), data)
        }
        RepresentationSource::Extractor(ex) => {
            let rows = par::map_range(corpus.len(), |i| {
                let doc = &corpus.docs[i];
                ex.represent(&doc.tokens)
                    .map_err(|e| Error::Representation(format!("document `{}`: {e}", doc.id)))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Matrix::from_rows(&rows, ex.dim())
        }
    }
}
