//! Episodic few-shot classification: class partitioning, episode sampling,
//! the average-similarity decision rule, and the MSE objective.

mod model;
mod train;

pub use model::{episode_forward, init_model_params, model_param_shapes, ModelConfig};
pub use train::{evaluate, train, EvalOutcome, PredictionRow, TrainOutcome};

use crate::repr::Dataset;
use crate::tensor::TensorError;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Benign traffic always occupies way 0 of every episode, so the binary
/// false-positive rate is well defined.
pub const BENIGN_LABEL: u16 = 0;

#[derive(Debug, Error)]
pub enum FewshotError {
    #[error("not enough malicious classes: have {available}, need {needed}")]
    NotEnoughClasses { available: usize, needed: usize },
    #[error("class {class_id} has {available} samples, episode needs {needed}")]
    InsufficientSamples {
        class_id: u16,
        available: usize,
        needed: usize,
    },
    #[error("test episode uses class {class_id}, which appears in the training manifest")]
    DisjointClassViolation { class_id: u16 },
    #[error("loss became non-finite ({loss}) at episode {episode}")]
    NumericFailure { episode: usize, loss: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Disjoint partition of malicious classes plus a 50/50 split of benign
/// sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train_malicious: Vec<u16>,
    pub test_malicious: Vec<u16>,
    pub benign_train: Vec<usize>,
    pub benign_test: Vec<usize>,
    pub seed: u64,
}

/// Uniformly partition the malicious classes of a dataset into disjoint
/// train and test sets, and split benign samples half and half.
pub fn split_classes(
    dataset: &Dataset,
    n_train_malicious: usize,
    seed: u64,
) -> Result<ClassSplit, FewshotError> {
    let mut malicious: Vec<u16> = dataset
        .labels()
        .into_iter()
        .filter(|&l| l != BENIGN_LABEL)
        .collect();
    if n_train_malicious < 1 || n_train_malicious >= malicious.len() {
        return Err(FewshotError::NotEnoughClasses {
            available: malicious.len(),
            needed: n_train_malicious + 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut malicious, &mut rng);
    let mut train_malicious: Vec<u16> = malicious[..n_train_malicious].to_vec();
    let mut test_malicious: Vec<u16> = malicious[n_train_malicious..].to_vec();
    train_malicious.sort_unstable();
    test_malicious.sort_unstable();

    let mut benign: Vec<usize> = dataset
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == BENIGN_LABEL)
        .map(|(i, _)| i)
        .collect();
    shuffle(&mut benign, &mut rng);
    let half = benign.len() / 2;
    let mut benign_train = benign[..half].to_vec();
    let mut benign_test = benign[half..].to_vec();
    benign_train.sort_unstable();
    benign_test.sort_unstable();

    Ok(ClassSplit {
        train_malicious,
        test_malicious,
        benign_train,
        benign_test,
        seed,
    })
}

fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

impl ClassSplit {
    /// Materialize the train and test datasets this split describes.
    pub fn apply(&self, dataset: &Dataset) -> (Dataset, Dataset) {
        let pick = |classes: &[u16], benign: &[usize]| -> Dataset {
            let mut out = Dataset::new(dataset.n);
            for &i in benign {
                out.records.push(dataset.records[i].clone());
            }
            for (i, r) in dataset.records.iter().enumerate() {
                if classes.contains(&r.label) && r.label != BENIGN_LABEL {
                    debug_assert!(!benign.contains(&i));
                    out.records.push(r.clone());
                }
            }
            out.manifest = dataset
                .manifest
                .iter()
                .filter(|(id, _)| **id == BENIGN_LABEL || classes.contains(id))
                .map(|(id, name)| (*id, name.clone()))
                .collect();
            out
        };
        (
            pick(&self.train_malicious, &self.benign_train),
            pick(&self.test_malicious, &self.benign_test),
        )
    }
}

/// Sample indices grouped by class, the sampling view over one dataset.
#[derive(Debug, Clone)]
pub struct Pool {
    by_class: BTreeMap<u16, Vec<usize>>,
}

impl Pool {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
        for (i, r) in dataset.records.iter().enumerate() {
            by_class.entry(r.label).or_default().push(i);
        }
        Self { by_class }
    }

    pub fn malicious_classes(&self) -> Vec<u16> {
        self.by_class
            .keys()
            .copied()
            .filter(|&c| c != BENIGN_LABEL)
            .collect()
    }

    pub fn class_size(&self, class: u16) -> usize {
        self.by_class.get(&class).map_or(0, Vec::len)
    }
}

/// One few-shot task: a support set of `way` classes with `shot` samples
/// each, plus `n_query` disjoint query samples per class. Entries are
/// record indices into the source dataset; way 0 is always benign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub n_query: usize,
    /// Original class ids per way; `class_ids[0] == BENIGN_LABEL`.
    pub class_ids: Vec<u16>,
    /// `way x shot` support record indices.
    pub support: Vec<Vec<usize>>,
    /// `way x n_query` query record indices.
    pub query: Vec<Vec<usize>>,
}

/// Draw one episode: benign plus `way - 1` malicious classes sampled
/// without replacement, then `shot + n_query` distinct samples per class,
/// the first `shot` of which form the support set.
pub fn sample_episode<R: Rng>(
    pool: &Pool,
    way: usize,
    shot: usize,
    n_query: usize,
    rng: &mut R,
) -> Result<Episode, FewshotError> {
    let malicious = pool.malicious_classes();
    if malicious.len() < way - 1 {
        return Err(FewshotError::NotEnoughClasses {
            available: malicious.len(),
            needed: way - 1,
        });
    }
    let mut class_ids = vec![BENIGN_LABEL];
    let choice = index_sample(rng, malicious.len(), way - 1);
    class_ids.extend(choice.iter().map(|i| malicious[i]));

    let needed = shot + n_query;
    let mut support = Vec::with_capacity(way);
    let mut query = Vec::with_capacity(way);
    for &class in &class_ids {
        let indices = pool.by_class.get(&class).map_or(&[][..], Vec::as_slice);
        if indices.len() < needed {
            return Err(FewshotError::InsufficientSamples {
                class_id: class,
                available: indices.len(),
                needed,
            });
        }
        let picked: Vec<usize> = index_sample(rng, indices.len(), needed)
            .iter()
            .map(|i| indices[i])
            .collect();
        support.push(picked[..shot].to_vec());
        query.push(picked[shot..].to_vec());
    }
    Ok(Episode {
        way,
        shot,
        n_query,
        class_ids,
        support,
        query,
    })
}

/// Class-average similarity logits: entry `c` is the mean similarity of
/// the query to class `c`'s support samples.
pub fn average_logits(sims_per_class: &[Vec<f64>]) -> Vec<f64> {
    sims_per_class
        .iter()
        .map(|sims| sims.iter().sum::<f64>() / sims.len() as f64)
        .collect()
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_lowest_tie(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Mean over queries of the squared distance between the one-hot label and
/// the class-average similarity vector.
pub fn episode_loss(logits: &[Vec<f64>], true_ways: &[usize]) -> f64 {
    assert_eq!(logits.len(), true_ways.len());
    assert!(!logits.is_empty());
    let total: f64 = logits
        .iter()
        .zip(true_ways)
        .map(|(yhat, &truth)| {
            yhat.iter()
                .enumerate()
                .map(|(c, &v)| {
                    let y = if c == truth { 1.0 } else { 0.0 };
                    (y - v) * (y - v)
                })
                .sum::<f64>()
        })
        .sum();
    total / logits.len() as f64
}
