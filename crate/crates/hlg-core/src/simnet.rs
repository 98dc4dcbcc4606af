//! Pairwise session similarity scoring.
//!
//! Two encoded sessions are compared by fusing a cross-phase local
//! similarity matrix with self-attention-enhanced global features. The
//! local matrix holds softmax-normalized (jointly over all entries) and
//! then element-wise squared cosine similarities between the two sessions'
//! phase features. One session's view concatenates its enhanced global
//! feature with the flattened matrix, the other with the flattened
//! transpose; a shared two-layer MLP compresses each view and a scoring
//! MLP with a sigmoid turns the pair into a score in (0, 1). Scores are
//! symmetrized by averaging both concatenation orders, so
//! `sim(a, b) == sim(b, a)` holds exactly.

use crate::encoder::EncoderConfig;
use crate::tensor::{Bound, Graph, Params, Real, Tensor, TensorError, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Reshape the global feature into `2 * layers` tokens of width `d`
    /// and attend across them.
    #[default]
    Token,
    /// Treat the whole global feature as a single token; the attention
    /// weight degenerates to 1 and the output is the value projection.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalSimKind {
    #[default]
    Cosine,
    /// Accepted in configuration for comparison studies but not implemented.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Attention projection width.
    pub d_k: usize,
    pub attention_mode: AttentionMode,
    /// Average both concatenation orders in the final score.
    pub symmetrize: bool,
    pub local_sim: LocalSimKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            d_k: 32,
            attention_mode: AttentionMode::Token,
            symmetrize: true,
            local_sim: LocalSimKind::Cosine,
        }
    }
}

const FUSE_HIDDEN: usize = 256;
const FUSE_OUT: usize = 128;
const SCORE_HIDDEN: usize = 64;

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_k < 1 {
            return Err("attention projection width d_k must be at least 1".into());
        }
        if self.local_sim == LocalSimKind::Euclidean {
            return Err(
                "euclidean local similarity is a reserved configuration value; \
                 only cosine is implemented"
                    .into(),
            );
        }
        Ok(())
    }

    fn token_width(&self, enc: &EncoderConfig) -> usize {
        match self.attention_mode {
            AttentionMode::Token => enc.d,
            AttentionMode::Literal => enc.feature_width(),
        }
    }

    /// Width of the self-attention output.
    pub fn san_width(&self, enc: &EncoderConfig) -> usize {
        match self.attention_mode {
            AttentionMode::Token => 2 * enc.layers * self.d_k,
            AttentionMode::Literal => self.d_k,
        }
    }
}

fn layout(enc: &EncoderConfig, sim: &SimConfig) -> Vec<(String, Vec<usize>)> {
    let token_width = sim.token_width(enc);
    let fuse_in = sim.san_width(enc) + enc.phases() * enc.phases();
    vec![
        ("sim.attn.Wq".into(), vec![token_width, sim.d_k]),
        ("sim.attn.Wk".into(), vec![token_width, sim.d_k]),
        ("sim.attn.Wv".into(), vec![token_width, sim.d_k]),
        ("sim.fuse.W1".into(), vec![FUSE_HIDDEN, fuse_in]),
        ("sim.fuse.b1".into(), vec![FUSE_HIDDEN]),
        ("sim.fuse.W2".into(), vec![FUSE_OUT, FUSE_HIDDEN]),
        ("sim.fuse.b2".into(), vec![FUSE_OUT]),
        ("sim.score.W1".into(), vec![SCORE_HIDDEN, 2 * FUSE_OUT]),
        ("sim.score.b1".into(), vec![SCORE_HIDDEN]),
        ("sim.score.W2".into(), vec![1, SCORE_HIDDEN]),
        ("sim.score.b2".into(), vec![1]),
    ]
}

/// Initialize similarity-network parameters: weights uniform in
/// (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
pub fn init_sim_params<T: Real, R: Rng>(
    enc: &EncoderConfig,
    sim: &SimConfig,
    rng: &mut R,
) -> Params<T> {
    let mut params = Params::new();
    for (name, shape) in layout(enc, sim) {
        let tensor = if name.rsplit('.').next().unwrap_or("").starts_with('b') {
            Tensor::zeros(shape)
        } else {
            let fan_in = if name.starts_with("sim.attn") {
                shape[0]
            } else {
                shape[1]
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::uniform(shape, -bound, bound, rng)
        };
        params.insert(name, tensor);
    }
    params
}

/// Expected name/shape set, for checkpoint validation.
pub fn sim_param_shapes(
    enc: &EncoderConfig,
    sim: &SimConfig,
) -> std::collections::BTreeMap<String, Vec<usize>> {
    layout(enc, sim).into_iter().collect()
}

/// Cross-phase local similarity matrix: guarded cosine of every phase pair,
/// softmax over all `L^2` entries jointly, then element-wise squaring.
pub fn local_similarity<T: Real>(
    g: &mut Graph<T>,
    z_local_a: Var,
    z_local_b: Var,
) -> Result<Var, TensorError> {
    let cos = g.pairwise_cosine(z_local_a, z_local_b)?;
    let norm = g.softmax_all(cos);
    Ok(g.square(norm))
}

/// Self-attention enhancement of one global feature vector.
pub fn self_attention<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    enc: &EncoderConfig,
    sim: &SimConfig,
    z_global: Var,
) -> Result<Var, TensorError> {
    let wv = bound.var("sim.attn.Wv");
    match sim.attention_mode {
        AttentionMode::Literal => {
            // One token: the softmax over a 1x1 score matrix is exactly 1,
            // so attention reduces to the value projection.
            let width = g.shape(z_global)[0];
            let token = g.reshape(z_global, vec![1, width])?;
            let v = g.matmul(token, wv)?;
            Ok(g.flatten(v))
        }
        AttentionMode::Token => {
            let wq = bound.var("sim.attn.Wq");
            let wk = bound.var("sim.attn.Wk");
            let tokens = 2 * enc.layers;
            let reshaped = g.reshape(z_global, vec![tokens, enc.d])?;
            let q = g.matmul(reshaped, wq)?;
            let k = g.matmul(reshaped, wk)?;
            let v = g.matmul(reshaped, wv)?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scale = T::from_f64(1.0 / (sim.d_k as f64).sqrt());
            let scaled = g.affine(scores, scale, T::zero());
            let attn = g.softmax_rows(scaled)?;
            let out = g.matmul(attn, v)?;
            Ok(g.flatten(out))
        }
    }
}

fn mlp2<T: Real>(
    g: &mut Graph<T>,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    x: Var,
) -> Result<Var, TensorError> {
    let h = g.matvec(w1, x)?;
    let h = g.add(h, b1)?;
    let h = g.tanh(h);
    let out = g.matvec(w2, h)?;
    g.add(out, b2)
}

/// Fuse each session's enhanced global feature with the local similarity
/// matrix (transposed for the second session) through one shared MLP.
pub fn fuse<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    san_a: Var,
    san_b: Var,
    local_sim: Var,
) -> Result<(Var, Var), TensorError> {
    let w1 = bound.var("sim.fuse.W1");
    let b1 = bound.var("sim.fuse.b1");
    let w2 = bound.var("sim.fuse.W2");
    let b2 = bound.var("sim.fuse.b2");
    let flat = g.flatten(local_sim);
    let transposed = g.transpose(local_sim)?;
    let flat_t = g.flatten(transposed);
    let xa = g.concat(&[san_a, flat])?;
    let xb = g.concat(&[san_b, flat_t])?;
    let za = mlp2(g, w1, b1, w2, b2, xa)?;
    let zb = mlp2(g, w1, b1, w2, b2, xb)?;
    Ok((za, zb))
}

fn raw_score<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    first: Var,
    second: Var,
) -> Result<Var, TensorError> {
    let w1 = bound.var("sim.score.W1");
    let b1 = bound.var("sim.score.b1");
    let w2 = bound.var("sim.score.W2");
    let b2 = bound.var("sim.score.b2");
    let x = g.concat(&[first, second])?;
    let out = mlp2(g, w1, b1, w2, b2, x)?;
    Ok(g.sigmoid(out))
}

/// Score two fused session representations. With symmetrization the two
/// concatenation orders are averaged, making the score exactly symmetric.
pub fn similarity_score<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    fused_a: Var,
    fused_b: Var,
    symmetrize: bool,
) -> Result<Var, TensorError> {
    let ab = raw_score(g, bound, fused_a, fused_b)?;
    if !symmetrize {
        return Ok(ab);
    }
    let ba = raw_score(g, bound, fused_b, fused_a)?;
    let total = g.add(ab, ba)?;
    Ok(g.affine(total, T::from_f64(0.5), T::zero()))
}

/// A session's graph-resident encodings, computed once and reused across
/// all pairs it participates in.
#[derive(Clone, Copy)]
pub struct SessionEncoding {
    pub z_local: Var,
    pub san: Var,
}

/// Full pair pipeline: local similarity, fusion, symmetrized score.
pub fn pair_similarity<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    sim: &SimConfig,
    a: &SessionEncoding,
    b: &SessionEncoding,
) -> Result<Var, TensorError> {
    let lmat = local_similarity(g, a.z_local, b.z_local)?;
    let (fused_a, fused_b) = fuse(g, bound, a.san, b.san, lmat)?;
    similarity_score(g, bound, fused_a, fused_b, sim.symmetrize)
}
