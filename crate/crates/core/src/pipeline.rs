//! End-to-end orchestration.
//!
//! The run is split into stages that the monolithic [`run`] and the chained
//! command-line subcommands share:
//!
//! | stage | produces |
//! |---|---|
//! | `train-base` | extractor (text input) and stage-1 classifier |
//! | `collect` | head relations |
//! | `eigen` | scatter eigenbasis `Q` |
//! | `generate` | tail prototypes, transfer matrix `W`, generated instances |
//! | `adjust` | classifier with retrained tail rows |
//! | `eval` | evaluation report |
//!
//! Every stage reads and extends a [`State`], which round-trips through a
//! [`Checkpoint`]. Stage randomness is derived from the global seed and the
//! stage name, so a chained run reproduces a monolithic one bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{Mode, PipelineConfig, Settings};
use crate::corpus::{
    load_corpus, load_embeddings, load_eval_corpus, load_features, Corpus, EmbeddingTable, FeatureFile, LabelSpace,
};
use crate::eigen::{scatter, top_eigen, EigenBasis};
use crate::error::{Error, Result};
use crate::extractor::{represent_all, train_classifier, train_stage1, AttentionExtractor, ClassifierWeights, RepresentationSource};
use crate::generator::{
    generate, losses, prototypes, train_w, GeneratedEntry, GeneratedSet, Losses, Prototype, SubsetPolicy,
    TransferMatrix, TransferScope,
};
use crate::linalg::Matrix;
use crate::metrics::{evaluate, EvalReport};
use crate::relations::{collect, LabelRelations, RelationSet};
use crate::synthgen::SynthDataset;
use crate::tailadjust::adjust;

pub const TRAIN_BASE: &str = "train-base";
pub const COLLECT: &str = "collect";
pub const EIGEN: &str = "eigen";
pub const GENERATE: &str = "generate";
pub const ADJUST: &str = "adjust";
pub const EVAL: &str = "eval";
pub const STAGES: [&str; 6] = [TRAIN_BASE, COLLECT, EIGEN, GENERATE, ADJUST, EVAL];

/// Where document representations come from.
#[derive(Clone, Debug)]
pub enum Inputs {
    /// Token documents encoded by a trained extractor.
    Text(EmbeddingTable),
    /// Precomputed representations; stage 1 trains the classifier only.
    Features { train: FeatureFile, test: Option<FeatureFile> },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub space: LabelSpace,
    pub train: Corpus,
    pub test: Option<Corpus>,
    pub inputs: Inputs,
}

impl Dataset {
    /// Loads the inputs named in `cfg.paths` and splits labels by `tail_count`.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let s = &cfg.settings;
        let train_path = cfg
            .paths
            .train
            .as_ref()
            .ok_or_else(|| Error::Argument("no training corpus given (`train`)".into()))?;
        let (train, space) = load_corpus(train_path, s.max_words)?;
        let space = space.split_head_tail(s.tail_count)?;
        let test = cfg
            .paths
            .test
            .as_ref()
            .map(|p| load_eval_corpus(p, s.max_words, &space))
            .transpose()?;
        let inputs = match (&cfg.paths.train_features, &cfg.paths.embeddings) {
            (Some(tf), _) => {
                let test_ff = match (&cfg.paths.test_features, &test) {
                    (Some(p), _) => Some(load_features(p)?),
                    (None, Some(_)) => {
                        return Err(Error::Argument(
                            "feature input needs `test_features` when a test corpus is given".into(),
                        ))
                    }
                    (None, None) => None,
                };
                Inputs::Features {
                    train: load_features(tf)?,
                    test: test_ff,
                }
            }
            (None, Some(emb)) => Inputs::Text(load_embeddings(emb)?),
            (None, None) => {
                return Err(Error::Argument(
                    "either `embeddings` or `train_features` must be given".into(),
                ))
            }
        };
        Ok(Dataset {
            space,
            train,
            test,
            inputs,
        })
    }

    pub fn from_synth(ds: &SynthDataset) -> Self {
        Dataset {
            space: ds.space.clone(),
            train: ds.train.clone(),
            test: Some(ds.test.clone()),
            inputs: Inputs::Features {
                train: ds.train_features.clone(),
                test: Some(ds.test_features.clone()),
            },
        }
    }

    /// Same data with a different head/tail boundary.
    pub fn with_tail_count(&self, tail_count: usize) -> Result<Self> {
        Ok(Dataset {
            space: self.space.split_head_tail(tail_count)?,
            ..self.clone()
        })
    }
}

/// Everything produced so far.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub settings: Settings,
    pub space: LabelSpace,
    pub stages: Vec<String>,
    pub extractor: Option<AttentionExtractor>,
    pub stage1: ClassifierWeights,
    pub stage1_loss: Vec<f64>,
    pub relations: Option<RelationSet>,
    pub basis: Option<EigenBasis>,
    pub prototypes: Option<Vec<Prototype>>,
    pub transfer: Option<TransferMatrix>,
    /// Losses per epoch of the `W` fit; a single entry when `W` was not fitted.
    pub transfer_history: Vec<Losses>,
    pub generated: Option<GeneratedSet>,
    pub adjusted: Option<ClassifierWeights>,
    pub adjust_history: Vec<Vec<f64>>,
    pub report: Option<EvalReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

fn missing(stage: &str, needs: &str) -> Error {
    Error::State(format!("stage `{stage}` needs the output of `{needs}`; run `{needs}` first"))
}

impl State {
    /// Classifier used for prediction: the adjusted one when available.
    pub fn classifier(&self) -> &ClassifierWeights {
        self.adjusted.as_ref().unwrap_or(&self.stage1)
    }

    fn mark(&mut self, stage: &str) {
        let pos = STAGES.iter().position(|s| *s == stage).unwrap_or(STAGES.len());
        self.stages.retain(|s| STAGES.iter().position(|x| x == s).unwrap_or(0) < pos);
        self.stages.push(stage.to_string());
    }

    /// Drops outputs of `stage` and every later stage.
    fn reset_from(&mut self, stage: &str) {
        let pos = STAGES.iter().position(|s| *s == stage).unwrap_or(0);
        for later in &STAGES[pos..] {
            match *later {
                COLLECT => self.relations = None,
                EIGEN => self.basis = None,
                GENERATE => {
                    self.prototypes = None;
                    self.transfer = None;
                    self.transfer_history.clear();
                    self.generated = None;
                }
                ADJUST => {
                    self.adjusted = None;
                    self.adjust_history.clear();
                }
                EVAL => self.report = None,
                _ => {}
            }
        }
        self.stages.retain(|s| STAGES.iter().position(|x| x == s).unwrap_or(0) < pos);
    }

    /// Representations of a split, in corpus order.
    pub fn representations(&self, data: &Dataset, split: Split) -> Result<Matrix> {
        let corpus = match split {
            Split::Train => &data.train,
            Split::Test => data
                .test
                .as_ref()
                .ok_or_else(|| Error::Argument("no test corpus given".into()))?,
        };
        match (&data.inputs, &self.extractor) {
            (Inputs::Features { train, test }, _) => {
                let ff = match split {
                    Split::Train => train,
                    Split::Test => test
                        .as_ref()
                        .ok_or_else(|| Error::Argument("no test feature file given".into()))?,
                };
                represent_all(RepresentationSource::Features(ff), corpus)
            }
            (Inputs::Text(_), Some(ex)) => represent_all(RepresentationSource::Extractor(ex), corpus),
            (Inputs::Text(_), None) => Err(Error::State(
                "text input needs a trained extractor, but the checkpoint has none".into(),
            )),
        }
    }
}

/// Stage 1.
pub fn train_base(settings: &Settings, data: &Dataset) -> Result<State> {
    let cfg = settings.stage1_config();
    let s1 = match &data.inputs {
        Inputs::Text(table) => train_stage1(&data.train, table, &data.space, settings.extractor, &cfg)?,
        Inputs::Features { train, .. } => {
            let reps = represent_all(RepresentationSource::Features(train), &data.train)?;
            let targets: Vec<Vec<f64>> = data.train.docs.iter().map(|d| data.space.targets(d)).collect();
            train_classifier(&reps, &targets, data.space.head().len(), &cfg)?
        }
    };
    let mut state = State {
        settings: settings.clone(),
        space: data.space.clone(),
        stages: Vec::new(),
        extractor: s1.extractor,
        stage1: s1.classifier,
        stage1_loss: s1.loss_history,
        relations: None,
        basis: None,
        prototypes: None,
        transfer: None,
        transfer_history: Vec::new(),
        generated: None,
        adjusted: None,
        adjust_history: Vec::new(),
        report: None,
    };
    state.mark(TRAIN_BASE);
    Ok(state)
}

fn check_space(state: &State, data: &Dataset) -> Result<()> {
    if state.space != data.space {
        return Err(Error::Validation(
            "label space of the checkpoint differs from the one derived from the inputs (check `train` and `tail_count`)"
                .into(),
        ));
    }
    Ok(())
}

pub fn collect_relations(settings: &Settings, data: &Dataset, state: &mut State, reps: &Matrix) -> Result<()> {
    check_space(state, data)?;
    state.reset_from(COLLECT);
    state.settings = settings.clone();
    state.relations = Some(collect(reps, &data.train, &data.space, settings.pairs_p, settings.collect_seed())?);
    state.mark(COLLECT);
    Ok(())
}

pub fn eigenbasis(settings: &Settings, data: &Dataset, state: &mut State, reps: &Matrix) -> Result<()> {
    check_space(state, data)?;
    state.reset_from(EIGEN);
    state.settings = settings.clone();
    let s = scatter(reps, &data.train, &data.space)?;
    let basis = top_eigen(&s, settings.rank_for(reps.cols()))?;
    log::info!(
        "eigenbasis: rank {}, explained variance {:.4}",
        basis.rank(),
        basis.explained_ratio
    );
    state.basis = Some(basis);
    state.mark(EIGEN);
    Ok(())
}

pub fn generate_tail(settings: &Settings, data: &Dataset, state: &mut State, reps: &Matrix) -> Result<()> {
    check_space(state, data)?;
    let rel = state.relations.clone().ok_or_else(|| missing(GENERATE, COLLECT))?;
    let basis = state.basis.clone().ok_or_else(|| missing(GENERATE, EIGEN))?;
    state.reset_from(GENERATE);
    state.settings = settings.clone();
    let tcfg = settings.transfer_config();
    let protos = prototypes(reps, &data.train, &data.space, tcfg.q, tcfg.seed)?;
    let (w, history) = match settings.mode.loss_weights(tcfg.weights) {
        Some(weights) => {
            let fit = train_w(&protos, &rel, &basis, &crate::generator::TransferConfig { weights, ..tcfg.clone() })?;
            log::info!(
                "transfer fit: L_gen {:.4} -> {:.4}, L_var {:.4} -> {:.4}",
                fit.initial.gen,
                fit.fitted.gen,
                fit.initial.var,
                fit.fitted.var
            );
            (fit.transfer, fit.history)
        }
        None => {
            let w = TransferMatrix::identity(rel.dim(), tcfg.scope, protos.len());
            let l = losses(&w, &protos, &rel, &basis, tcfg.weights)?;
            (w, vec![l])
        }
    };
    state.generated = Some(generate(&w, &protos, &rel, settings.subset_policy())?);
    state.prototypes = Some(protos);
    state.transfer = Some(w);
    state.transfer_history = history;
    state.mark(GENERATE);
    Ok(())
}

pub fn adjust_tail(settings: &Settings, data: &Dataset, state: &mut State, reps: &Matrix) -> Result<()> {
    check_space(state, data)?;
    if settings.mode == Mode::NoAug {
        state.reset_from(ADJUST);
        state.settings = settings.clone();
        state.adjusted = Some(state.stage1.clone());
        state.mark(ADJUST);
        return Ok(());
    }
    let generated = state.generated.clone().ok_or_else(|| missing(ADJUST, GENERATE))?;
    state.reset_from(ADJUST);
    state.settings = settings.clone();
    let out = adjust(&state.stage1, &data.space, &generated, reps, &data.train, &settings.adjust_config())?;
    state.adjusted = Some(out.classifier);
    state.adjust_history = out.histories;
    state.mark(ADJUST);
    Ok(())
}

/// Evaluates the current classifier on the test corpus, or on the training corpus when none is given.
pub fn eval(settings: &Settings, data: &Dataset, state: &mut State) -> Result<EvalReport> {
    check_space(state, data)?;
    let (split, corpus) = match &data.test {
        Some(t) => (Split::Test, t),
        None => {
            log::warn!("no test corpus; evaluating on the training corpus");
            (Split::Train, &data.train)
        }
    };
    let reps = state.representations(data, split)?;
    let scores = state.classifier().predict_all(&reps)?;
    let truth: Vec<Vec<f64>> = corpus.docs.iter().map(|d| data.space.targets(d)).collect();
    let report = evaluate(&scores, &truth, &data.space, settings.adjust.threshold)?;
    state.reset_from(EVAL);
    state.report = Some(report.clone());
    state.mark(EVAL);
    Ok(report)
}

/// Runs one named stage (other than `train-base`) on an existing state.
pub fn run_stage(stage: &str, settings: &Settings, data: &Dataset, state: &mut State) -> Result<()> {
    let wrap = |e: Error| e.in_stage(stage_name(stage));
    if stage == EVAL {
        return eval(settings, data, state).map(|_| ()).map_err(wrap);
    }
    let reps = state.representations(data, Split::Train).map_err(wrap)?;
    match stage {
        COLLECT => collect_relations(settings, data, state, &reps),
        EIGEN => eigenbasis(settings, data, state, &reps),
        GENERATE => generate_tail(settings, data, state, &reps),
        ADJUST => adjust_tail(settings, data, state, &reps),
        other => Err(Error::Argument(format!("unknown stage `{other}`"))),
    }
    .map_err(wrap)
}

fn stage_name(stage: &str) -> &'static str {
    STAGES.iter().find(|s| **s == stage).copied().unwrap_or("pipeline")
}

/// Stages a run goes through for `mode`.
pub fn stages_for(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::NoAug => &[TRAIN_BASE, ADJUST, EVAL],
        _ => &STAGES,
    }
}

/// Runs the remaining stages of `mode` after `train-base`, saving a checkpoint after each when `checkpoint` is set.
pub fn continue_from(
    settings: &Settings,
    data: &Dataset,
    state: &mut State,
    checkpoint: Option<&Path>,
) -> Result<EvalReport> {
    for stage in &stages_for(settings.mode)[1..] {
        run_stage(stage, settings, data, state)?;
        if let Some(path) = checkpoint {
            save_state(state, &data.train, path)?;
        }
    }
    state
        .report
        .clone()
        .ok_or_else(|| Error::State("pipeline finished without a report".into()))
}

/// Full pipeline.
pub fn run(settings: &Settings, data: &Dataset, checkpoint: Option<&Path>) -> Result<(EvalReport, State)> {
    let mut state = train_base(settings, data).map_err(|e| e.in_stage(TRAIN_BASE))?;
    if let Some(path) = checkpoint {
        save_state(&state, &data.train, path)?;
    }
    let report = continue_from(settings, data, &mut state, checkpoint)?;
    Ok((report, state))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    PairsP,
    TailCount,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::PairsP => "pairs_p",
            SweepParam::TailCount => "tail_count",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs_p" | "p" => Ok(SweepParam::PairsP),
            "tail_count" => Ok(SweepParam::TailCount),
            _ => Err(Error::Argument(format!("cannot sweep over `{s}` (pairs_p or tail_count)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub report: EvalReport,
}

/// Runs the pipeline once per value. A `pairs_p` sweep shares one stage-1 result.
pub fn sweep(settings: &Settings, data: &Dataset, param: SweepParam, values: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    match param {
        SweepParam::PairsP => {
            let base = train_base(settings, data).map_err(|e| e.in_stage(TRAIN_BASE))?;
            for &p in values {
                let s = Settings {
                    pairs_p: p,
                    ..settings.clone()
                };
                let mut state = base.clone();
                let report = continue_from(&s, data, &mut state, None)?;
                rows.push(SweepRow { value: p, report });
            }
        }
        SweepParam::TailCount => {
            for &k in values {
                let s = Settings {
                    tail_count: k,
                    ..settings.clone()
                };
                let (report, _) = run(&s, &data.with_tail_count(k)?, None)?;
                rows.push(SweepRow { value: k, report });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_tsv(param: SweepParam, rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"));
    let mut s = format!(
        "{}\tp@1\tp@3\tp@5\tndcg@3\tndcg@5\tmacro_f1\thead_macro_f1\ttail_macro_f1\n",
        param.as_str()
    );
    for r in rows {
        let m = &r.report;
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{}\n",
            r.value,
            opt(m.p_at(1)),
            opt(m.p_at(3)),
            opt(m.p_at(5)),
            opt(m.ndcg_at(3)),
            opt(m.ndcg_at(5)),
            m.macro_f1,
            opt(m.head_macro_f1),
            opt(m.tail_macro_f1)
        ));
    }
    s
}

/// Generated instances as a feature file, ids `gen-<tail pos>-<head pos>-<z>`.
pub fn generated_features(generated: &GeneratedSet) -> Result<FeatureFile> {
    let ids = generated
        .entries
        .iter()
        .map(|e| format!("gen-{}-{}-{}", e.tail_pos, e.head_pos, e.z))
        .collect();
    FeatureFile::new(ids, generated.instances.clone())
}

#[derive(Serialize, Deserialize)]
struct TransferMeta {
    scope: TransferScope,
    count: usize,
}

fn ids_of(corpus: &Corpus, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| corpus.docs[i].id.clone()).collect()
}

fn indices_of(corpus: &Corpus, ids: &[String]) -> Result<Vec<usize>> {
    let lookup: std::collections::HashMap<&str, usize> =
        corpus.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    ids.iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint refers to unknown doc_id `{id}`")))
        })
        .collect()
}

/// Serializes `state`. Document references are stored as ids of `train`.
pub fn to_checkpoint(state: &State, train: &Corpus) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new();
    ck.set_json("settings", &state.settings)?;
    ck.set_json("label_space", &state.space)?;
    ck.set_json("stages", &state.stages)?;
    if let Some(ex) = &state.extractor {
        ck.set_json("extractor.vocab", &ex.vocab)?;
        ck.set_matrix("extractor.embeddings", ex.embeddings.clone())?;
        ck.set_matrix("extractor.W1", ex.w1.clone())?;
        ck.set_matrix("extractor.W2", ex.w2.clone())?;
        ck.set_matrix("extractor.P_agg", ex.p_agg.clone())?;
    }
    ck.set_matrix("W_a", state.stage1.weights.clone())?;
    ck.set_meta("W_a.n_head", state.stage1.n_head.to_string())?;
    ck.set_json("stage1.loss", &state.stage1_loss)?;
    if let Some(rel) = &state.relations {
        ck.set_meta("relations.p", rel.p.to_string())?;
        let labels: Vec<usize> = rel.per_label.iter().map(|r| r.label).collect();
        ck.set_json("relations.labels", &labels)?;
        let prov: Vec<Vec<(String, String)>> = rel
            .per_label
            .iter()
            .map(|r| {
                r.provenance
                    .iter()
                    .map(|&(a, b)| (train.docs[a].id.clone(), train.docs[b].id.clone()))
                    .collect()
            })
            .collect();
        ck.set_json("relations.provenance", &prov)?;
        for (b, r) in rel.per_label.iter().enumerate() {
            ck.set_matrix(&format!("relations.{b}"), r.vectors.clone())?;
        }
    }
    if let Some(basis) = &state.basis {
        ck.set_matrix("eigen.Q", basis.q.clone())?;
        ck.set_json("eigen.values", &basis.eigenvalues)?;
        ck.set_json("eigen.explained", &basis.explained_ratio)?;
    }
    if let Some(protos) = &state.prototypes {
        let d = protos.first().map_or(0, |p| p.o.len());
        let rows: Vec<Vec<f64>> = protos.iter().map(|p| p.o.clone()).collect();
        ck.set_matrix("prototypes", Matrix::from_rows(&rows, d)?)?;
        let labels: Vec<usize> = protos.iter().map(|p| p.label).collect();
        ck.set_json("prototypes.labels", &labels)?;
        let docs: Vec<Vec<String>> = protos.iter().map(|p| ids_of(train, &p.docs)).collect();
        ck.set_json("prototypes.docs", &docs)?;
    }
    if let Some(w) = &state.transfer {
        ck.set_json(
            "transfer",
            &TransferMeta {
                scope: w.scope,
                count: w.weights.len(),
            },
        )?;
        for (k, m) in w.weights.iter().enumerate() {
            ck.set_matrix(&format!("transfer.W.{k}"), m.clone())?;
        }
        ck.set_json("transfer.history", &state.transfer_history)?;
    }
    if let Some(g) = &state.generated {
        ck.set_matrix("generated", g.instances.clone())?;
        ck.set_json("generated.entries", &g.entries)?;
        ck.set_json("generated.labels", &g.labels)?;
        ck.set_json("generated.policy", &g.policy)?;
    }
    if let Some(a) = &state.adjusted {
        ck.set_matrix("W_a.adjusted", a.weights.clone())?;
        ck.set_json("adjust.history", &state.adjust_history)?;
    }
    if let Some(r) = &state.report {
        ck.set_json("report", r)?;
    }
    Ok(ck)
}

pub fn from_checkpoint(ck: &Checkpoint, train: &Corpus) -> Result<State> {
    let settings: Settings = ck.json("settings")?;
    let space: LabelSpace = ck.json("label_space")?;
    let stages: Vec<String> = ck.json("stages")?;
    let extractor = if ck.contains("extractor.W1") {
        Some(AttentionExtractor::from_parts(
            ck.json("extractor.vocab")?,
            ck.matrix("extractor.embeddings")?.clone(),
            ck.matrix("extractor.W1")?.clone(),
            ck.matrix("extractor.W2")?.clone(),
            ck.matrix("extractor.P_agg")?.clone(),
        )?)
    } else {
        None
    };
    let n_head: usize = ck
        .meta("W_a.n_head")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad `W_a.n_head`".into()))?;
    let stage1 = ClassifierWeights::new(ck.matrix("W_a")?.clone(), n_head)?;
    let relations = if ck.contains("relations.p") {
        let p: usize = ck
            .meta("relations.p")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad `relations.p`".into()))?;
        let labels: Vec<usize> = ck.json("relations.labels")?;
        let prov: Vec<Vec<(String, String)>> = ck.json("relations.provenance")?;
        if prov.len() != labels.len() {
            return Err(Error::Checkpoint("relation provenance does not match labels".into()));
        }
        let mut per_label = Vec::with_capacity(labels.len());
        for (b, (label, pairs)) in labels.into_iter().zip(prov).enumerate() {
            let (first, second): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
            let provenance = indices_of(train, &first)?.into_iter().zip(indices_of(train, &second)?).collect();
            per_label.push(LabelRelations {
                label,
                vectors: ck.matrix(&format!("relations.{b}"))?.clone(),
                provenance,
            });
        }
        Some(RelationSet { p, per_label })
    } else {
        None
    };
    let basis = if ck.contains("eigen.Q") {
        Some(EigenBasis {
            q: ck.matrix("eigen.Q")?.clone(),
            eigenvalues: ck.json("eigen.values")?,
            explained_ratio: ck.json("eigen.explained")?,
        })
    } else {
        None
    };
    let prototypes = if ck.contains("prototypes") {
        let m = ck.matrix("prototypes")?;
        let labels: Vec<usize> = ck.json("prototypes.labels")?;
        let docs: Vec<Vec<String>> = ck.json("prototypes.docs")?;
        if labels.len() != m.rows() || docs.len() != m.rows() {
            return Err(Error::Checkpoint("prototype entries disagree in length".into()));
        }
        let mut out = Vec::with_capacity(m.rows());
        for (i, (label, ids)) in labels.into_iter().zip(docs).enumerate() {
            out.push(Prototype {
                label,
                o: m.row(i).to_vec(),
                docs: indices_of(train, &ids)?,
            });
        }
        Some(out)
    } else {
        None
    };
    let (transfer, transfer_history) = if ck.contains("transfer") {
        let meta: TransferMeta = ck.json("transfer")?;
        let weights = (0..meta.count)
            .map(|k| ck.matrix(&format!("transfer.W.{k}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        (
            Some(TransferMatrix {
                scope: meta.scope,
                weights,
            }),
            ck.json("transfer.history")?,
        )
    } else {
        (None, Vec::new())
    };
    let generated = if ck.contains("generated") {
        let entries: Vec<GeneratedEntry> = ck.json("generated.entries")?;
        let labels: Vec<usize> = ck.json("generated.labels")?;
        let policy: SubsetPolicy = ck.json("generated.policy")?;
        let instances = ck.matrix("generated")?.clone();
        if entries.len() != instances.rows() || labels.len() != instances.rows() {
            return Err(Error::Checkpoint("generated entries disagree in length".into()));
        }
        Some(GeneratedSet {
            instances,
            entries,
            labels,
            policy,
        })
    } else {
        None
    };
    let (adjusted, adjust_history) = if ck.contains("W_a.adjusted") {
        (
            Some(ClassifierWeights::new(ck.matrix("W_a.adjusted")?.clone(), n_head)?),
            ck.json("adjust.history")?,
        )
    } else {
        (None, Vec::new())
    };
    let report = if ck.contains("report") { Some(ck.json("report")?) } else { None };
    Ok(State {
        settings,
        space,
        stages,
        extractor,
        stage1,
        stage1_loss: ck.json("stage1.loss")?,
        relations,
        basis,
        prototypes,
        transfer,
        transfer_history,
        generated,
        adjusted,
        adjust_history,
        report,
    })
}

pub fn save_state(state: &State, train: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    to_checkpoint(state, train)?.save(path)
}

pub fn load_state(path: impl AsRef<Path>, train: &Corpus) -> Result<State> {
    from_checkpoint(&Checkpoint::load(path)?, train)
}
