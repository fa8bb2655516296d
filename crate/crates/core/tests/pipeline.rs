mod common;

use tailaug::config::{Mode, PipelineConfig, Settings};
use tailaug::corpus::{write_corpus, FeatureFile};
use tailaug::pipeline::{
    from_checkpoint, load_state, run, run_stage, save_state, stages_for, sweep, sweep_tsv, to_checkpoint, train_base,
    Dataset, Inputs, Split, SweepParam,
};
use tailaug::synthgen::{generate, SynthSpec};
use tailaug::Matrix;

fn small() -> Dataset {
    let ds = generate(&SynthSpec {
        d: 6,
        n_head: 3,
        n_tail: 2,
        docs_per_head: 20,
        docs_per_tail: 2,
        test_per_label: 5,
        seed: 5,
        ..SynthSpec::default()
    })
    .unwrap();
    Dataset::from_synth(&ds)
}

fn settings(mode: Mode) -> Settings {
    let mut s = Settings {
        seed: 3,
        mode,
        tail_count: 2,
        pairs_p: 4,
        eigen_rank: Some(3),
        ..Settings::default()
    };
    s.stage1.epochs = 10;
    s.transfer.epochs = 20;
    s.adjust.epochs = 10;
    s
}

#[test]
fn no_aug_keeps_the_stage1_classifier() {
    let data = small();
    let (_, state) = run(&settings(Mode::NoAug), &data, None).unwrap();
    assert!(state.classifier().weights.bit_eq(&state.stage1.weights));
    assert!(state.relations.is_none() && state.transfer.is_none());
    let alone = train_base(&settings(Mode::NoAug), &data).unwrap();
    assert!(alone.stage1.weights.bit_eq(&state.stage1.weights));
}

#[test]
fn aug_no_c_uses_the_identity() {
    let (_, state) = run(&settings(Mode::AugNoC), &small(), None).unwrap();
    let w = state.transfer.unwrap();
    assert!(w.weights[0].bit_eq(&Matrix::identity(6)));
    assert_eq!(state.transfer_history.len(), 1);
}

#[test]
fn every_mode_leaves_head_rows_alone() {
    let data = small();
    for mode in Mode::ALL {
        let (report, state) = run(&settings(mode), &data, None).unwrap();
        assert!(state.classifier().head().bit_eq(&state.stage1.head()), "{mode}");
        assert!(report.tail_macro_f1.is_some());
    }
}

#[test]
fn chained_stages_equal_the_monolithic_run() {
    let data = small();
    let s = settings(Mode::Complete);
    let dir = tempfile::tempdir().unwrap();
    let mono = dir.path().join("mono.ckpt");
    run(&s, &data, Some(&mono)).unwrap();

    let chained = dir.path().join("chained.ckpt");
    save_state(&train_base(&s, &data).unwrap(), &data.train, &chained).unwrap();
    for stage in &stages_for(s.mode)[1..] {
        let mut state = load_state(&chained, &data.train).unwrap();
        run_stage(stage, &s, &data, &mut state).unwrap();
        save_state(&state, &data.train, &chained).unwrap();
    }
    assert_eq!(std::fs::read(&mono).unwrap(), std::fs::read(&chained).unwrap());
}

#[test]
fn state_round_trips_through_a_checkpoint() {
    let data = small();
    let (_, state) = run(&settings(Mode::Complete), &data, None).unwrap();
    let ck = to_checkpoint(&state, &data.train).unwrap();
    let text = ck.to_text();
    let back = from_checkpoint(&tailaug::checkpoint::Checkpoint::from_text(&text).unwrap(), &data.train).unwrap();
    assert_eq!(back, state);
    assert_eq!(to_checkpoint(&back, &data.train).unwrap().to_text(), text);
}

#[test]
fn stages_out_of_order_are_rejected() {
    let data = small();
    let s = settings(Mode::Complete);
    let mut state = train_base(&s, &data).unwrap();
    let err = run_stage("generate", &s, &data, &mut state).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("generate") && msg.contains("collect"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn single_value_sweep_equals_a_plain_run() {
    let data = small();
    let s = settings(Mode::Complete);
    let (plain, _) = run(&s, &data, None).unwrap();
    let rows = sweep(&s, &data, SweepParam::PairsP, &[s.pairs_p]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].report, plain);

    let rows = sweep(&s, &data, SweepParam::TailCount, &[1, 2, 3]).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].report, plain);
    let tsv = sweep_tsv(SweepParam::TailCount, &rows);
    assert_eq!(tsv.lines().count(), 4);
    assert!(tsv.starts_with("tail_count\tp@1"));
}

#[test]
fn text_inputs_run_end_to_end() {
    let (corpus, space, table) = common::toy_text(24, 4, 9);
    let space = space.split_head_tail(1).unwrap();
    let data = Dataset {
        space,
        train: corpus.clone(),
        test: Some(corpus),
        inputs: Inputs::Text(table),
    };
    let mut s = settings(Mode::Complete);
    s.tail_count = 1;
    s.extractor.da = 4;
    s.extractor.heads = 2;
    s.extractor.d = 5;
    s.eigen_rank = None;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("text.ckpt");
    let (report, state) = run(&s, &data, Some(&path)).unwrap();
    assert!(report.p_at(1).is_some());
    let back = load_state(&path, &data.train).unwrap();
    assert_eq!(back, state);
    assert!(back
        .representations(&data, Split::Train)
        .unwrap()
        .bit_eq(&state.representations(&data, Split::Train).unwrap()));
}

#[test]
fn datasets_load_from_files() {
    let ds = generate(&SynthSpec {
        d: 4,
        n_head: 2,
        n_tail: 2,
        docs_per_head: 10,
        docs_per_tail: 2,
        test_per_label: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_corpus(std::fs::File::create(p("train.tsv")).unwrap(), &ds.train, &ds.space).unwrap();
    write_corpus(std::fs::File::create(p("test.tsv")).unwrap(), &ds.test, &ds.space).unwrap();
    ds.train_features.save(p("train.feat")).unwrap();
    ds.test_features.save(p("test.feat")).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.apply_text(&format!(
        "train={}\ntest={}\ntrain_features={}\ntest_features={}\ntail_count=2\npairs_p=3\nstage1.epochs=5\ntransfer.epochs=5\nadjust.epochs=5\n",
        p("train.tsv").display(),
        p("test.tsv").display(),
        p("train.feat").display(),
        p("test.feat").display()
    ))
    .unwrap();
    let data = Dataset::load(&cfg).unwrap();
    assert_eq!(data.space.tail().len(), 2);
    assert_eq!(data.test.as_ref().unwrap().len(), ds.test.len());
    let (report, _) = run(&cfg.settings, &data, None).unwrap();
    assert_eq!(report.documents, ds.test.len());

    cfg.paths.train_features = None;
    assert!(Dataset::load(&cfg).is_err());
    let _ = FeatureFile::new(vec![], Matrix::zeros(0, 4)).unwrap();
}
