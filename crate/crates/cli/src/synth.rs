//! `synth`: writes a synthetic dataset plus a config that points at it.
//!
//! Files written into `--dir`: `train.tsv`, `test.tsv`, `train.feat`,
//! `test.feat`, `pipeline.conf`. Unless `--features-only` is given, every
//! document also gets a single token `w<doc_id>` and `embeddings.txt` maps that
//! token to the document's feature vector, so the text path can be exercised.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use tailaug::corpus::{write_corpus, Corpus, FeatureFile, LabelSpace};
use tailaug::synthgen::{generate, SynthSpec};
use tailaug::Result;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    n_head: usize,
    #[arg(long, default_value_t = 12)]
    n_tail: usize,
    #[arg(long, default_value_t = 200)]
    docs_per_head: usize,
    #[arg(long, default_value_t = 3)]
    docs_per_tail: usize,
    #[arg(long, default_value_t = 1.0)]
    head_std: f64,
    #[arg(long, default_value_t = 0.3)]
    tail_std: f64,
    #[arg(long, default_value_t = 0.0)]
    co_label_prob: f64,
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 20)]
    test_per_label: usize,
    /// Leave token fields empty and skip the embedding table.
    #[arg(long)]
    features_only: bool,
}

fn with_tokens(corpus: &Corpus) -> Corpus {
    let mut out = corpus.clone();
    for d in &mut out.docs {
        d.tokens = vec![format!("w{}", d.id)];
    }
    out
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_embeddings(w: &mut impl Write, features: &[&FeatureFile]) -> Result<()> {
    for ff in features {
        for (i, id) in ff.ids().iter().enumerate() {
            write!(w, "w{id}")?;
            for v in ff.rows().row(i) {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn run(args: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        d: args.d,
        n_head: args.n_head,
        n_tail: args.n_tail,
        docs_per_head: args.docs_per_head,
        docs_per_tail: args.docs_per_tail,
        intra_head_std: args.head_std,
        intra_tail_std: args.tail_std,
        co_label_prob: args.co_label_prob,
        center_scale: args.center_scale,
        test_per_label: args.test_per_label,
        seed,
    };
    let ds = generate(&spec)?;
    fs::create_dir_all(&args.dir)?;
    let dir = &args.dir;
    let space: &LabelSpace = &ds.space;
    let (train, test) = if args.features_only {
        (ds.train.clone(), ds.test.clone())
    } else {
        (with_tokens(&ds.train), with_tokens(&ds.test))
    };
    write_with(&dir.join("train.tsv"), |w| write_corpus(w, &train, space))?;
    write_with(&dir.join("test.tsv"), |w| write_corpus(w, &test, space))?;
    ds.train_features.save(dir.join("train.feat"))?;
    ds.test_features.save(dir.join("test.feat"))?;
    if !args.features_only {
        write_with(&dir.join("embeddings.txt"), |w| {
            write_embeddings(w, &[&ds.train_features, &ds.test_features])
        })?;
    }
    write_with(&dir.join("pipeline.conf"), |w| {
        writeln!(w, "seed={seed}")?;
        writeln!(w, "tail_count={}", spec.n_tail)?;
        writeln!(w, "train={}", dir.join("train.tsv").display())?;
        writeln!(w, "test={}", dir.join("test.tsv").display())?;
        writeln!(w, "train_features={}", dir.join("train.feat").display())?;
        writeln!(w, "test_features={}", dir.join("test.feat").display())?;
        if !args.features_only {
            writeln!(w, "# drop the two feature lines to train from tokens instead")?;
            writeln!(w, "# embeddings={}", dir.join("embeddings.txt").display())?;
        }
        Ok(())
    })?;
    println!(
        "synth: {} training and {} test documents over {} labels in {}",
        ds.train.len(),
        ds.test.len(),
        space.len(),
        dir.display()
    );
    Ok(())
}
