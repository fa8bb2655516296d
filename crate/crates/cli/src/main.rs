mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailaug::config::{Mode, PipelineConfig};
use tailaug::metrics::{load_values, pooled_ttest};
use tailaug::metrics::EvalReport;
use tailaug::par;
use tailaug::pipeline::{
    self, generated_features, load_state, save_state, sweep, sweep_tsv, Dataset, SweepParam, State,
};
use tailaug::{Error, Result};

/// Long-tailed multi-label classification with feature-space augmentation of tail labels.
#[derive(Parser, Debug)]
#[command(name = "tailaug", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file with `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override any config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, 0 = all cores. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Ablation mode: no-aug, aug-no-c, aug-gen, aug-gen-div or complete.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Checkpoint file read and written by the stage commands.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Also write the report here (JSON when the name ends in `.json`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic long-tailed dataset.
    Synth(synth::SynthArgs),
    /// Stage 1: train the representation and the full classifier.
    TrainBase,
    /// Collect pairwise relations of head labels.
    Collect,
    /// Top eigenvectors of the head scatter matrix.
    Eigen,
    /// Fit the transfer matrix and generate tail instances.
    Generate {
        /// Write the generated instances as a feature file.
        #[arg(long, value_name = "PATH")]
        dump_generated: Option<PathBuf>,
    },
    /// Retrain the tail rows of the classifier.
    Adjust,
    /// Evaluate the current classifier.
    Eval,
    /// Run every stage of the selected mode.
    Pipeline,
    /// One run per value of a parameter, as a TSV table.
    Sweep {
        /// `pairs_p` or `tail_count`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Pooled two-sample t-test on two files of run values.
    Ttest { a: PathBuf, b: PathBuf },
}

fn config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("`--set {kv}`: expected KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = g.seed {
        cfg.settings.seed = seed;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(m) = &g.mode {
        cfg.settings.mode = m.parse::<Mode>()?;
    }
    Ok(cfg)
}

fn checkpoint_path(g: &Global) -> Result<&Path> {
    g.checkpoint
        .as_deref()
        .ok_or_else(|| Error::Argument("this command needs `--checkpoint`".into()))
}

fn emit_report(g: &Global, report: &EvalReport) -> Result<()> {
    let tsv = report.to_tsv();
    print!("{tsv}");
    if let Some(out) = &g.out {
        let body = if out.extension().is_some_and(|e| e == "json") {
            report.to_json()
        } else {
            tsv
        };
        fs::write(out, body)?;
    }
    Ok(())
}

fn stage(g: &Global, name: &str) -> Result<State> {
    let cfg = config(g)?;
    let path = checkpoint_path(g)?;
    let data = Dataset::load(&cfg)?;
    let mut state = load_state(path, &data.train)?;
    par::with_workers(cfg.workers, || pipeline::run_stage(name, &cfg.settings, &data, &mut state))?;
    save_state(&state, &data.train, path)?;
    Ok(state)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth(args) => {
            let cfg = config(g)?;
            synth::run(&args, cfg.settings.seed)?;
        }
        Command::TrainBase => {
            let cfg = config(g)?;
            let path = checkpoint_path(g)?;
            let data = Dataset::load(&cfg)?;
            let state = par::with_workers(cfg.workers, || pipeline::train_base(&cfg.settings, &data))
                .map_err(|e| e.in_stage(pipeline::TRAIN_BASE))?;
            save_state(&state, &data.train, path)?;
            let last = state.stage1_loss.last().copied().unwrap_or(f64::NAN);
            println!("train-base: {} epochs, final loss {last:.6}", state.stage1_loss.len());
        }
        Command::Collect => {
            let state = stage(g, pipeline::COLLECT)?;
            let rel = state.relations.as_ref().expect("collect sets relations");
            println!("collect: {} relations, p = {}", rel.len(), rel.p);
        }
        Command::Eigen => {
            let state = stage(g, pipeline::EIGEN)?;
            let basis = state.basis.as_ref().expect("eigen sets the basis");
            println!(
                "eigen: rank {}, explained variance {:.4}",
                basis.rank(),
                basis.explained_ratio
            );
        }
        Command::Generate { dump_generated } => {
            let state = stage(g, pipeline::GENERATE)?;
            let generated = state.generated.as_ref().expect("generate sets instances");
            if let Some(path) = dump_generated {
                generated_features(generated)?.save(path)?;
            }
            match (state.transfer_history.first(), state.transfer_history.last()) {
                (Some(a), Some(b)) => println!(
                    "generate: {} instances; L_gen {:.4} -> {:.4}, L_var {:.4} -> {:.4}, L_div {:.4} -> {:.4}",
                    generated.len(),
                    a.gen,
                    b.gen,
                    a.var,
                    b.var,
                    a.div,
                    b.div
                ),
                _ => println!("generate: {} instances", generated.len()),
            }
        }
        Command::Adjust => {
            let state = stage(g, pipeline::ADJUST)?;
            println!("adjust: {} tail rows retrained", state.adjust_history.len());
        }
        Command::Eval => {
            let state = stage(g, pipeline::EVAL)?;
            emit_report(g, state.report.as_ref().expect("eval sets the report"))?;
        }
        Command::Pipeline => {
            let cfg = config(g)?;
            let data = Dataset::load(&cfg)?;
            let (report, _) = par::with_workers(cfg.workers, || {
                pipeline::run(&cfg.settings, &data, g.checkpoint.as_deref())
            })?;
            emit_report(g, &report)?;
        }
        Command::Sweep { param, values } => {
            let cfg = config(g)?;
            let param: SweepParam = param.parse()?;
            let data = Dataset::load(&cfg)?;
            let rows = par::with_workers(cfg.workers, || sweep(&cfg.settings, &data, param, &values))?;
            let table = sweep_tsv(param, &rows);
            print!("{table}");
            if let Some(out) = &g.out {
                fs::write(out, table)?;
            }
        }
        Command::Ttest { a, b } => {
            let (xa, xb) = (load_values(&a)?, load_values(&b)?);
            let t = pooled_ttest(&xa, &xb)?;
            let table = format!("t\t{:?}\ndf\t{:?}\np\t{:?}\n", t.t, t.df, t.p);
            print!("{table}");
            if let Some(out) = &g.out {
                fs::write(out, table)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
