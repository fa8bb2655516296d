//! Pipeline configuration.
//!
//! Config files hold `key=value` lines; `#` starts a comment. Command-line
//! flags are applied afterwards through the same [`PipelineConfig::set`].
//! Recognized keys:
//!
//! | key | meaning |
//! |---|---|
//! | `seed`, `workers`, `mode` | global seed, thread count, ablation mode |
//! | `tail_count`, `pairs_p`, `eigen_rank`, `max_words`, `q` | pipeline sizes |
//! | `da`, `heads`, `d` | extractor shape |
//! | `lr` | learning rate of every stage |
//! | `stage1.lr`, `stage1.epochs`, `stage1.batch_size`, `stage1.train_embeddings`, `stage1.early_stop_tol` | stage 1 |
//! | `alpha`, `beta`, `gamma`, `transfer.lr`, `transfer.epochs`, `transfer.scope` | transfer matrix fit |
//! | `adjust.lr`, `adjust.epochs`, `negative_policy`, `include_real_shots`, `threshold` | tail retraining |
//! | `gen_per_group` | cap on generations per (tail, head) group |
//! | `train`, `test`, `embeddings`, `train_features`, `test_features` | input paths |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_MAX_WORDS;
use crate::error::{Error, Result};
use crate::extractor::{ExtractorShape, TrainConfig};
use crate::generator::{LossWeights, SubsetPolicy, TransferConfig, TransferScope};
use crate::rng::derive_seed;
use crate::tailadjust::{AdjustConfig, NegativePolicy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Stage 1 only.
    NoAug,
    /// Generate with `W = I`, no transfer fit.
    AugNoC,
    /// Fit `W` with the generation-consistency term only.
    AugGen,
    /// Generation consistency plus diversity.
    AugGenDiv,
    /// All three terms.
    #[default]
    Complete,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::NoAug, Mode::AugNoC, Mode::AugGen, Mode::AugGenDiv, Mode::Complete];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoAug => "no-aug",
            Mode::AugNoC => "aug-no-c",
            Mode::AugGen => "aug-gen",
            Mode::AugGenDiv => "aug-gen-div",
            Mode::Complete => "complete",
        }
    }

    /// Loss weights used to fit `W`, or `None` when `W` is not fitted.
    pub fn loss_weights(self, full: LossWeights) -> Option<LossWeights> {
        match self {
            Mode::NoAug | Mode::AugNoC => None,
            Mode::AugGen => Some(LossWeights { beta: 0.0, gamma: 0.0, ..full }),
            Mode::AugGenDiv => Some(LossWeights { beta: 0.0, ..full }),
            Mode::Complete => Some(full),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown mode `{s}` (expected one of no-aug, aug-no-c, aug-gen, aug-gen-div, complete)")))
    }
}

/// Everything that influences numerical results. Stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub mode: Mode,
    pub tail_count: usize,
    pub pairs_p: usize,
    /// `None` means `min(100, d)`.
    pub eigen_rank: Option<usize>,
    pub max_words: usize,
    pub gen_per_group: Option<usize>,
    pub extractor: ExtractorShape,
    pub stage1: TrainConfig,
    pub transfer: TransferConfig,
    pub adjust: AdjustConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0,
            mode: Mode::Complete,
            tail_count: 24,
            pairs_p: 64,
            eigen_rank: None,
            max_words: DEFAULT_MAX_WORDS,
            gen_per_group: None,
            extractor: ExtractorShape::default(),
            stage1: TrainConfig::default(),
            transfer: TransferConfig::default(),
            adjust: AdjustConfig::default(),
        }
    }
}

impl Settings {
    pub fn stage1_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, "stage1"),
            ..self.stage1.clone()
        }
    }

    pub fn collect_seed(&self) -> u64 {
        derive_seed(self.seed, "collect")
    }

    pub fn transfer_config(&self) -> TransferConfig {
        TransferConfig {
            seed: derive_seed(self.seed, "prototype"),
            ..self.transfer.clone()
        }
    }

    pub fn adjust_config(&self) -> AdjustConfig {
        AdjustConfig {
            seed: derive_seed(self.seed, "adjust"),
            ..self.adjust.clone()
        }
    }

    pub fn subset_policy(&self) -> SubsetPolicy {
        match self.gen_per_group {
            None => SubsetPolicy::All,
            Some(per_group) => SubsetPolicy::Sample {
                per_group,
                seed: derive_seed(self.seed, "subset"),
            },
        }
    }

    pub fn rank_for(&self, d: usize) -> usize {
        self.eigen_rank.unwrap_or(crate::eigen::DEFAULT_RANK).min(d)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub train_features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub settings: Settings,
    pub paths: Paths,
    /// Worker threads; 0 = all cores. Never changes results.
    pub workers: usize,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Validation(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Validation(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if matches!(value, "none" | "auto" | "") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.settings;
        let v = value.trim();
        match key.trim() {
            "seed" => s.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "mode" => s.mode = v.parse()?,
            "tail_count" => s.tail_count = parse(key, v)?,
            "pairs_p" | "p" => s.pairs_p = parse(key, v)?,
            "eigen_rank" | "m" => s.eigen_rank = parse_opt(key, v)?,
            "max_words" => s.max_words = parse(key, v)?,
            "gen_per_group" => s.gen_per_group = parse_opt(key, v)?,
            "q" => s.transfer.q = parse(key, v)?,
            "da" => s.extractor.da = parse(key, v)?,
            "heads" => s.extractor.heads = parse(key, v)?,
            "d" => s.extractor.d = parse(key, v)?,
            "lr" => {
                let lr = parse(key, v)?;
                s.stage1.adam.lr = lr;
                s.transfer.adam.lr = lr;
                s.adjust.adam.lr = lr;
            }
            "stage1.lr" => s.stage1.adam.lr = parse(key, v)?,
            "stage1.epochs" => s.stage1.epochs = parse(key, v)?,
            "stage1.batch_size" => s.stage1.batch_size = parse(key, v)?,
            "stage1.train_embeddings" => s.stage1.train_embeddings = parse_bool(key, v)?,
            "stage1.early_stop_tol" => s.stage1.early_stop_tol = parse_opt(key, v)?,
            "alpha" => s.transfer.weights.alpha = parse(key, v)?,
            "beta" => s.transfer.weights.beta = parse(key, v)?,
            "gamma" => s.transfer.weights.gamma = parse(key, v)?,
            "transfer.lr" => s.transfer.adam.lr = parse(key, v)?,
            "transfer.epochs" => s.transfer.epochs = parse(key, v)?,
            "transfer.scope" => {
                s.transfer.scope = match v {
                    "shared" => TransferScope::Shared,
                    "per-label" => TransferScope::PerLabel,
                    _ => return Err(Error::Validation(format!("bad transfer.scope `{v}`"))),
                }
            }
            "adjust.lr" => s.adjust.adam.lr = parse(key, v)?,
            "adjust.epochs" => s.adjust.epochs = parse(key, v)?,
            "negative_policy" => {
                s.adjust.negative_policy = match v {
                    "balanced" => NegativePolicy::Balanced,
                    "head-only" => NegativePolicy::HeadOnly,
                    _ => return Err(Error::Validation(format!("bad negative_policy `{v}`"))),
                }
            }
            "include_real_shots" => s.adjust.include_real_shots = parse_bool(key, v)?,
            "threshold" => s.adjust.threshold = parse(key, v)?,
            "train" => self.paths.train = Some(v.into()),
            "test" => self.paths.test = Some(v.into()),
            "embeddings" => self.paths.embeddings = Some(v.into()),
            "train_features" => self.paths.train_features = Some(v.into()),
            "test_features" => self.paths.test_features = Some(v.into()),
            other => return Err(Error::Validation(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Validation(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }
}
