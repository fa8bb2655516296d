//! Synthetic long-tailed multi-label datasets generated directly in feature space.
//!
//! Every label gets a Gaussian cluster center. A document's feature is the mean
//! of its labels' centers plus isotropic Gaussian noise at the primary label's
//! spread. Head labels get many documents with a wide spread, tail labels get a
//! handful with a narrow one. All draws come from one ChaCha8 stream, in a fixed
//! order (centers, training documents, test documents).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, FeatureFile, LabelSpace};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub d: usize,
    pub n_head: usize,
    pub n_tail: usize,
    pub docs_per_head: usize,
    pub docs_per_tail: usize,
    pub intra_head_std: f64,
    pub intra_tail_std: f64,
    /// Probability that a tail document also carries one (uniformly chosen) head label.
    pub co_label_prob: f64,
    /// Standard deviation of each center coordinate.
    pub center_scale: f64,
    /// Single-label held-out documents per label.
    pub test_per_label: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            d: 32,
            n_head: 4,
            n_tail: 12,
            docs_per_head: 200,
            docs_per_tail: 3,
            intra_head_std: 1.0,
            intra_tail_std: 0.3,
            co_label_prob: 0.0,
            center_scale: 1.0,
            test_per_label: 20,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Argument(format!("d = {} but at least 2 is required", self.d)));
        }
        if self.n_head == 0 || self.n_tail == 0 || self.docs_per_head == 0 || self.docs_per_tail == 0 {
            return Err(Error::Argument("label and document counts must be at least 1".into()));
        }
        let stds = [self.intra_head_std, self.intra_tail_std, self.center_scale];
        if stds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Argument("spreads must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.co_label_prob) {
            return Err(Error::Argument(format!(
                "co_label_prob {} outside [0, 1]",
                self.co_label_prob
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub space: LabelSpace,
    pub centers: Matrix,
    pub train: Corpus,
    pub train_features: FeatureFile,
    pub test: Corpus,
    pub test_features: FeatureFile,
}

fn noisy_point(rng: &mut StreamRng, mean: &[f64], std: f64) -> Vec<f64> {
    mean.iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            m + std * z
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = rng::rng(spec.seed);
    let n_labels = spec.n_head + spec.n_tail;
    let centers = Matrix::from_fn(n_labels, spec.d, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        spec.center_scale * z
    });
    let names: Vec<String> = (0..spec.n_head)
        .map(|i| format!("H{i}"))
        .chain((0..spec.n_tail).map(|i| format!("T{i}")))
        .collect();
    let std_of = |label: usize| {
        if label < spec.n_head {
            spec.intra_head_std
        } else {
            spec.intra_tail_std
        }
    };

    let mut train_docs = Vec::new();
    let mut train_rows = Vec::new();
    for label in 0..spec.n_head {
        for _ in 0..spec.docs_per_head {
            train_rows.push(noisy_point(&mut rng, centers.row(label), spec.intra_head_std));
            train_docs.push(vec![label]);
        }
    }
    for t in 0..spec.n_tail {
        let label = spec.n_head + t;
        for _ in 0..spec.docs_per_tail {
            let co = spec.co_label_prob > 0.0 && rng.random_bool(spec.co_label_prob);
            let (labels, mean) = if co {
                let b = rng.random_range(0..spec.n_head);
                let mean: Vec<f64> = centers
                    .row(label)
                    .iter()
                    .zip(centers.row(b))
                    .map(|(x, y)| 0.5 * (x + y))
                    .collect();
                (vec![b, label], mean)
            } else {
                (vec![label], centers.row(label).to_vec())
            };
            train_rows.push(noisy_point(&mut rng, &mean, spec.intra_tail_std));
            train_docs.push(labels);
        }
    }

    let mut test_docs = Vec::new();
    let mut test_rows = Vec::new();
    for label in 0..n_labels {
        for _ in 0..spec.test_per_label {
            test_rows.push(noisy_point(&mut rng, centers.row(label), std_of(label)));
            test_docs.push(vec![label]);
        }
    }

    let mut freq = vec![0usize; n_labels];
    for labels in &train_docs {
        for &l in labels {
            freq[l] += 1;
        }
    }
    let space = LabelSpace::new(names, freq)?.split_head_tail(spec.n_tail)?;

    let build = |prefix: &str, labels: Vec<Vec<usize>>, rows: Vec<Vec<f64>>| -> Result<(Corpus, FeatureFile)> {
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("{prefix}{i}")).collect();
        let docs = ids
            .iter()
            .zip(labels)
            .map(|(id, labels)| Document {
                id: id.clone(),
                tokens: Vec::new(),
                labels,
            })
            .collect();
        let features = FeatureFile::new(ids, Matrix::from_rows(&rows, spec.d)?)?;
        Ok((Corpus { docs }, features))
    };
    let (train, train_features) = build("train", train_docs, train_rows)?;
    let (test, test_features) = build("test", test_docs, test_rows)?;
    Ok(SynthDataset {
        space,
        centers,
        train,
        train_features,
        test,
        test_features,
    })
}
