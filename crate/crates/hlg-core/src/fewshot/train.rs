//! Episodic training loop and evaluation.

use super::{
    argmax_lowest_tie, episode_forward, init_model_params, sample_episode, Episode, FewshotError,
    ModelConfig, Pool,
};
use crate::config::RunConfig;
use crate::metrics::{BinaryCounts, ConfusionMatrix};
use crate::repr::Dataset;
use crate::tensor::{AdamConfig, AdamState, Bound, Graph, Params, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Stream ids for the per-purpose RNGs derived from one master seed.
/// Parameter initialization uses the default stream 0.
const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;

fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub struct TrainOutcome<T> {
    pub params: Params<T>,
    /// Loss value per episode, in order.
    pub losses: Vec<f64>,
}

/// Run the episodic loop: sample an episode, build its graph, take the MSE
/// loss on class-average similarities, backpropagate, and apply one Adam
/// step. Fully deterministic given the seed.
pub fn train<T: Real>(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainOutcome<T>, FewshotError> {
    let model: ModelConfig = cfg.into();
    let mut params: Params<T> = init_model_params(&model, cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &params);
    let pool = Pool::from_dataset(dataset);
    let mut rng = seeded_rng(cfg.seed, STREAM_TRAIN);

    let mut losses = Vec::with_capacity(cfg.episodes);
    for episode_idx in 0..cfg.episodes {
        let episode = sample_episode(&pool, cfg.way, cfg.shot, cfg.n_query, &mut rng)?;
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &params);
        let fwd = episode_forward(&mut g, &bound, &model, dataset, &episode)?;
        let loss = g.scalar_value(fwd.loss).to_f64();
        if !loss.is_finite() {
            return Err(FewshotError::NumericFailure {
                episode: episode_idx,
                loss,
            });
        }
        g.backward(fwd.loss)?;
        let grads = bound.grads(&g);
        adam.step(&mut params, &grads)?;
        losses.push(loss);
    }
    Ok(TrainOutcome { params, losses })
}

/// One query's outcome in the prediction dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub episode: usize,
    pub query_idx: usize,
    pub true_way: usize,
    pub pred_way: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub binary: BinaryCounts,
    pub confusion: ConfusionMatrix,
    pub rows: Vec<PredictionRow>,
    pub n_episodes: usize,
}

/// Evaluate a trained model over freshly sampled test episodes. No
/// parameter updates happen here. When `forbidden_classes` is given (the
/// malicious classes seen in training), any episode touching one of them
/// is refused.
///
/// Episodes are sampled up front with the evaluation RNG stream, then
/// scored in parallel; results merge in episode order, so the outcome does
/// not depend on worker count.
pub fn evaluate<T: Real>(
    params: &Params<T>,
    cfg: &RunConfig,
    dataset: &Dataset,
    n_episodes: usize,
    forbidden_classes: Option<&BTreeSet<u16>>,
) -> Result<EvalOutcome, FewshotError> {
    let model: ModelConfig = cfg.into();
    let pool = Pool::from_dataset(dataset);
    let mut rng = seeded_rng(cfg.seed, STREAM_EVAL);

    let mut episodes: Vec<Episode> = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let episode = sample_episode(&pool, cfg.way, cfg.shot, cfg.n_query, &mut rng)?;
        if let Some(forbidden) = forbidden_classes {
            for &class in &episode.class_ids[1..] {
                if forbidden.contains(&class) {
                    return Err(FewshotError::DisjointClassViolation { class_id: class });
                }
            }
        }
        episodes.push(episode);
    }

    let per_episode: Vec<Result<Vec<PredictionRow>, FewshotError>> = episodes
        .par_iter()
        .enumerate()
        .map(|(episode_idx, episode)| {
            let mut g = Graph::new();
            let bound = Bound::bind(&mut g, params);
            let fwd = episode_forward(&mut g, &bound, &model, dataset, episode)?;
            Ok(fwd
                .logits
                .into_iter()
                .zip(fwd.true_ways)
                .enumerate()
                .map(|(query_idx, (logits, true_way))| PredictionRow {
                    episode: episode_idx,
                    query_idx,
                    true_way,
                    pred_way: argmax_lowest_tie(&logits),
                    logits,
                })
                .collect())
        })
        .collect();

    let mut binary = BinaryCounts::default();
    let mut confusion = ConfusionMatrix::new(cfg.way);
    let mut rows = Vec::new();
    for episode_rows in per_episode {
        for row in episode_rows? {
            binary.record(row.true_way != 0, row.pred_way != 0);
            confusion.record(row.true_way, row.pred_way);
            rows.push(row);
        }
    }
    Ok(EvalOutcome {
        binary,
        confusion,
        rows,
        n_episodes,
    })
}
