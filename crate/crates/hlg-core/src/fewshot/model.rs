//! The full model: hierarchical encoder plus similarity network, assembled
//! per episode into one differentiable graph.

use super::{Episode, FewshotError};
use crate::config::RunConfig;
use crate::encoder::{self, EncoderConfig};
use crate::repr::Dataset;
use crate::simnet::{self, SessionEncoding, SimConfig};
use crate::tensor::{Bound, Graph, Params, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub sim: SimConfig,
    /// Squash the class-average scores once more before the loss.
    pub double_sigmoid: bool,
}

impl From<&RunConfig> for ModelConfig {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            encoder: cfg.encoder_config(),
            sim: cfg.sim_config(),
            double_sigmoid: cfg.double_sigmoid,
        }
    }
}

/// Draw all model parameters from one seeded stream: encoder first, then
/// the similarity network.
pub fn init_model_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = encoder::init_encoder_params(&cfg.encoder, &mut rng);
    params.extend(simnet::init_sim_params(&cfg.encoder, &cfg.sim, &mut rng));
    params
}

/// Expected checkpoint name/shape set for this configuration.
pub fn model_param_shapes(cfg: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
    let mut shapes = encoder::encoder_param_shapes(&cfg.encoder);
    shapes.extend(simnet::sim_param_shapes(&cfg.encoder, &cfg.sim));
    shapes
}

/// Everything the caller needs from one episode's forward pass.
pub struct EpisodeForward {
    /// Scalar loss node, ready for `backward`.
    pub loss: Var,
    /// Class-average similarity logits per query, in sampling order
    /// (way-major).
    pub logits: Vec<Vec<f64>>,
    /// True way index per query, aligned with `logits`.
    pub true_ways: Vec<usize>,
}

/// Build the whole episode as one graph: encode every support and query
/// session once, score all query/support pairs, average per class into
/// logits, and take the MSE against the one-hot way labels.
pub fn episode_forward<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    cfg: &ModelConfig,
    dataset: &Dataset,
    episode: &Episode,
) -> Result<EpisodeForward, FewshotError> {
    let encode = |g: &mut Graph<T>, bound: &Bound, record: usize| -> Result<SessionEncoding, FewshotError> {
        let input: Tensor<T> = dataset.records[record].to_tensor();
        let session = g.constant(&input);
        let (z_local, z_global) = encoder::encode_session(g, bound, &cfg.encoder, session)?;
        let san = simnet::self_attention(g, bound, &cfg.encoder, &cfg.sim, z_global)?;
        Ok(SessionEncoding { z_local, san })
    };

    let support: Vec<Vec<SessionEncoding>> = episode
        .support
        .iter()
        .map(|class| {
            class
                .iter()
                .map(|&idx| encode(g, bound, idx))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut per_query_losses = Vec::with_capacity(episode.way * episode.n_query);
    let mut logits_out = Vec::with_capacity(episode.way * episode.n_query);
    let mut true_ways = Vec::with_capacity(episode.way * episode.n_query);

    for (true_way, class_queries) in episode.query.iter().enumerate() {
        for &query_idx in class_queries {
            let query_enc = encode(g, bound, query_idx)?;
            let mut class_means = Vec::with_capacity(episode.way);
            for class_support in &support {
                let sims: Vec<Var> = class_support
                    .iter()
                    .map(|s| simnet::pair_similarity(g, bound, &cfg.sim, &query_enc, s))
                    .collect::<Result<_, _>>()?;
                let stacked = g.concat(&sims)?;
                class_means.push(g.mean(stacked));
            }
            let mut yhat = g.concat(&class_means)?;
            if cfg.double_sigmoid {
                yhat = g.sigmoid(yhat);
            }
            logits_out.push(g.value(yhat).iter().map(|&v| v.to_f64()).collect());
            true_ways.push(true_way);

            let mut one_hot = vec![T::zero(); episode.way];
            one_hot[true_way] = T::one();
            let target = g.constant(&Tensor::vector(one_hot));
            let diff = g.sub(target, yhat)?;
            per_query_losses.push(g.sum_sq(diff));
        }
    }

    let stacked = g.concat(&per_query_losses)?;
    let loss = g.mean(stacked);
    Ok(EpisodeForward {
        loss,
        logits: logits_out,
        true_ways,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::CellKind;
    use crate::fewshot::{self, Pool};
    use crate::repr::{SessionTensor, PACKET_VECTOR_LEN};
    use crate::simnet::{AttentionMode, LocalSimKind};

    fn toy_model() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                n: 4,
                q: 2,
                d: 2,
                layers: 1,
                cell: CellKind::Gru,
            },
            sim: SimConfig {
                d_k: 2,
                attention_mode: AttentionMode::Token,
                symmetrize: true,
                local_sim: LocalSimKind::Cosine,
            },
            double_sigmoid: false,
        }
    }

    fn toy_dataset() -> Dataset {
        let mut ds = Dataset::new(4);
        let mut push = |label: u16, fill: f32, k: usize| {
            ds.records.push(SessionTensor {
                rows: 4,
                n_real: 4,
                label,
                source_id: format!("{label}/{k}"),
                data: (0..4 * PACKET_VECTOR_LEN)
                    .map(|i| ((i % 13) as f32 / 13.0 + fill) % 1.0)
                    .collect(),
            });
        };
        for k in 0..8 {
            push(0, 0.03 * k as f32, k);
            push(1, 0.5 + 0.029 * k as f32, k);
        }
        ds
    }

    #[test]
    fn episode_graph_produces_bounded_logits_and_finite_loss() {
        let cfg = toy_model();
        let params: Params<f64> = init_model_params(&cfg, 3);
        let ds = toy_dataset();
        let pool = Pool::from_dataset(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let episode = fewshot::sample_episode(&pool, 2, 3, 2, &mut rng).unwrap();

        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &params);
        let fwd = episode_forward(&mut g, &bound, &cfg, &ds, &episode).unwrap();
        assert_eq!(fwd.logits.len(), 4);
        assert_eq!(fwd.true_ways, vec![0, 0, 1, 1]);
        for logits in &fwd.logits {
            assert_eq!(logits.len(), 2);
            for &v in logits {
                assert!(v > 0.0 && v < 1.0, "logit {v} out of (0,1)");
            }
        }
        let loss = g.scalar_value(fwd.loss);
        assert!(loss.is_finite() && loss > 0.0);

        // The in-graph loss agrees with the plain-value formula.
        let plain = fewshot::episode_loss(&fwd.logits, &fwd.true_ways);
        assert!((loss - plain).abs() < 1e-12);
    }

    #[test]
    fn scaling_all_logits_preserves_argmax() {
        // Monotone transformation of similarity values cannot change the
        // predicted class.
        let logits = [0.21, 0.47, 0.35];
        let scaled: Vec<f64> = logits.iter().map(|v| v * 0.62).collect();
        assert_eq!(
            fewshot::argmax_lowest_tie(&logits),
            fewshot::argmax_lowest_tie(&scaled)
        );
    }

    #[test]
    fn checkpoint_shapes_cover_all_params() {
        let cfg = toy_model();
        let params: Params<f64> = init_model_params(&cfg, 0);
        let shapes = model_param_shapes(&cfg);
        assert_eq!(shapes.len(), params.len());
        for (name, tensor) in params.iter() {
            assert_eq!(shapes[name], tensor.shape().to_vec(), "shape of {name}");
        }
    }
}
