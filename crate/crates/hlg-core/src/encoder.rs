//! Hierarchical session encoding.
//!
//! A session tensor is segmented into contiguous phases of `Q` packets.
//! Each phase runs through a stacked bidirectional recurrent encoder (the
//! local encoder) whose summary vector concatenates the final forward and
//! final backward state of every layer. The sequence of phase summaries
//! then runs through a second encoder of identical architecture but
//! separate parameters (the global encoder), producing one vector per
//! session. Feature width is `2 * layers * d` for both.

use crate::repr::PACKET_VECTOR_LEN;
use crate::tensor::{Bound, Graph, Params, Real, Tensor, TensorError, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Gru,
    Lstm,
    Rnn,
}

impl CellKind {
    fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "g", "o"],
            CellKind::Rnn => &[""],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Session length in packets.
    pub n: usize,
    /// Phase window length.
    pub q: usize,
    /// Hidden units per direction.
    pub d: usize,
    /// Stacked recurrent layers.
    pub layers: usize,
    pub cell: CellKind,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n: 16,
            q: 2,
            d: 64,
            layers: 2,
            cell: CellKind::Gru,
        }
    }
}

impl EncoderConfig {
    /// Number of phases `L = ceil(N / Q)`.
    pub fn phases(&self) -> usize {
        self.n.div_ceil(self.q)
    }

    /// Width of phase summaries and of the global feature: `2 * layers * d`.
    pub fn feature_width(&self) -> usize {
        2 * self.layers * self.d
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.q < 1 {
            return Err("window length Q must be at least 1".into());
        }
        if self.n < self.q {
            return Err(format!(
                "session length N = {} must be at least Q = {}",
                self.n, self.q
            ));
        }
        if self.d < 1 || self.layers < 1 {
            return Err("hidden width d and layer count must be at least 1".into());
        }
        Ok(())
    }
}

/// Split a session matrix into `ceil(rows / q)` contiguous phases of `q`
/// rows, zero-padding the last one when `rows` is not a multiple of `q`.
pub fn segment_phases<T: Real>(session: &Tensor<T>, q: usize) -> Vec<Tensor<T>> {
    let rows = session.shape()[0];
    let cols = session.shape()[1];
    let phases = rows.div_ceil(q);
    (0..phases)
        .map(|i| {
            let mut data = vec![T::zero(); q * cols];
            let take = q.min(rows - i * q);
            data[..take * cols]
                .copy_from_slice(&session.data()[i * q * cols..(i * q + take) * cols]);
            Tensor::new(vec![q, cols], data).expect("phase shape consistent")
        })
        .collect()
}

// ---- parameters ----

fn layer_param_layout(
    cfg: &EncoderConfig,
    scope: &str,
    input_width: usize,
) -> Vec<(String, Vec<usize>)> {
    let mut layout = Vec::new();
    for layer in 1..=cfg.layers {
        let in_width = if layer == 1 { input_width } else { 2 * cfg.d };
        for dir in ["fwd", "bwd"] {
            for gate in cfg.cell.gates() {
                let prefix = format!("{scope}.layer{layer}.{dir}");
                layout.push((format!("{prefix}.W{gate}"), vec![cfg.d, in_width]));
                layout.push((format!("{prefix}.U{gate}"), vec![cfg.d, cfg.d]));
                layout.push((format!("{prefix}.b{gate}"), vec![cfg.d]));
            }
        }
    }
    layout
}

fn full_layout(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let mut layout = layer_param_layout(cfg, "local", PACKET_VECTOR_LEN);
    layout.extend(layer_param_layout(cfg, "global", cfg.feature_width()));
    layout
}

/// Initialize local and global encoder parameters. Weight matrices draw
/// from uniform(-1/sqrt(d), 1/sqrt(d)); biases start at zero.
pub fn init_encoder_params<T: Real, R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Params<T> {
    let bound = 1.0 / (cfg.d as f64).sqrt();
    let mut params = Params::new();
    for (name, shape) in full_layout(cfg) {
        let tensor = if name.rsplit('.').next().unwrap_or("").starts_with('b') {
            Tensor::zeros(shape)
        } else {
            Tensor::uniform(shape, -bound, bound, rng)
        };
        params.insert(name, tensor);
    }
    params
}

/// Expected name/shape set, for checkpoint validation.
pub fn encoder_param_shapes(
    cfg: &EncoderConfig,
) -> std::collections::BTreeMap<String, Vec<usize>> {
    full_layout(cfg).into_iter().collect()
}

// ---- cells ----

/// Graph handles for one direction of one recurrent layer.
struct CellVars {
    kind: CellKind,
    /// Per gate: (input weights, recurrent weights, bias).
    gates: Vec<(Var, Var, Var)>,
}

impl CellVars {
    fn lookup(bound: &Bound, prefix: &str, kind: CellKind) -> Self {
        let gates = kind
            .gates()
            .iter()
            .map(|gate| {
                (
                    bound.var(&format!("{prefix}.W{gate}")),
                    bound.var(&format!("{prefix}.U{gate}")),
                    bound.var(&format!("{prefix}.b{gate}")),
                )
            })
            .collect();
        Self { kind, gates }
    }
}

/// Hidden state of one direction; LSTM carries a cell state besides `h`.
#[derive(Clone, Copy)]
struct CellState {
    h: Var,
    c: Option<Var>,
}

fn gate_preact<T: Real>(
    g: &mut Graph<T>,
    (w, u, b): (Var, Var, Var),
    x: Var,
    h: Var,
) -> Result<Var, TensorError> {
    let wx = g.matvec(w, x)?;
    let uh = g.matvec(u, h)?;
    let s = g.add(wx, uh)?;
    g.add(s, b)
}

/// One GRU step: update and reset gates, candidate state, and the convex
/// blend `h' = (1 - z) * n + z * h`.
pub fn gru_cell_step<T: Real>(
    g: &mut Graph<T>,
    update: (Var, Var, Var),
    reset: (Var, Var, Var),
    candidate: (Var, Var, Var),
    x: Var,
    h_prev: Var,
) -> Result<Var, TensorError> {
    let z = gate_preact(g, update, x, h_prev)?;
    let z = g.sigmoid(z);
    let r = gate_preact(g, reset, x, h_prev)?;
    let r = g.sigmoid(r);
    let (cand_w, cand_u, cand_b) = candidate;
    let wx = g.matvec(cand_w, x)?;
    let uh = g.matvec(cand_u, h_prev)?;
    let r_uh = g.mul(r, uh)?;
    let pre = g.add(wx, r_uh)?;
    let pre = g.add(pre, cand_b)?;
    let n = g.tanh(pre);
    let one_minus_z = g.affine(z, -T::one(), T::one());
    let blend_new = g.mul(one_minus_z, n)?;
    let blend_old = g.mul(z, h_prev)?;
    g.add(blend_new, blend_old)
}

fn cell_step<T: Real>(
    g: &mut Graph<T>,
    vars: &CellVars,
    x: Var,
    state: CellState,
) -> Result<CellState, TensorError> {
    match vars.kind {
        CellKind::Gru => {
            let h = gru_cell_step(g, vars.gates[0], vars.gates[1], vars.gates[2], x, state.h)?;
            Ok(CellState { h, c: None })
        }
        CellKind::Lstm => {
            let c_prev = state.c.expect("LSTM state carries a cell vector");
            let i = gate_preact(g, vars.gates[0], x, state.h)?;
            let i = g.sigmoid(i);
            let f = gate_preact(g, vars.gates[1], x, state.h)?;
            let f = g.sigmoid(f);
            let cand = gate_preact(g, vars.gates[2], x, state.h)?;
            let cand = g.tanh(cand);
            let o = gate_preact(g, vars.gates[3], x, state.h)?;
            let o = g.sigmoid(o);
            let keep = g.mul(f, c_prev)?;
            let write = g.mul(i, cand)?;
            let c = g.add(keep, write)?;
            let c_act = g.tanh(c);
            let h = g.mul(o, c_act)?;
            Ok(CellState { h, c: Some(c) })
        }
        CellKind::Rnn => {
            let pre = gate_preact(g, vars.gates[0], x, state.h)?;
            let h = g.tanh(pre);
            Ok(CellState { h, c: None })
        }
    }
}

// ---- encoders ----

/// Run the stacked bidirectional encoder under `scope` over a `T x D_in`
/// sequence. Returns the per-step outputs of the top layer (each `2d` wide)
/// and the summary vector: the final forward and final backward state of
/// every layer, concatenated in layer order (`2 * layers * d` wide).
pub fn bigru_encode<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    scope: &str,
    cfg: &EncoderConfig,
    input: Var,
) -> Result<(Vec<Var>, Var), TensorError> {
    let steps = g.shape(input)[0];
    debug_assert!(steps >= 1);
    let mut layer_inputs: Vec<Var> =
        (0..steps).map(|t| g.row(input, t)).collect::<Result<_, _>>()?;

    let initial = |g: &mut Graph<T>| CellState {
        h: g.zeros(vec![cfg.d]),
        c: matches!(cfg.cell, CellKind::Lstm).then(|| g.zeros(vec![cfg.d])),
    };

    let mut summary_parts = Vec::with_capacity(2 * cfg.layers);
    for layer in 1..=cfg.layers {
        let fwd_vars = CellVars::lookup(bound, &format!("{scope}.layer{layer}.fwd"), cfg.cell);
        let bwd_vars = CellVars::lookup(bound, &format!("{scope}.layer{layer}.bwd"), cfg.cell);

        let mut fwd_states = Vec::with_capacity(steps);
        let mut state = initial(g);
        for &x in &layer_inputs {
            state = cell_step(g, &fwd_vars, x, state)?;
            fwd_states.push(state.h);
        }

        let mut bwd_states = vec![None; steps];
        let mut state = initial(g);
        for t in (0..steps).rev() {
            state = cell_step(g, &bwd_vars, layer_inputs[t], state)?;
            bwd_states[t] = Some(state.h);
        }
        let bwd_states: Vec<Var> = bwd_states.into_iter().map(|s| s.expect("filled")).collect();

        summary_parts.push(fwd_states[steps - 1]);
        summary_parts.push(bwd_states[0]);

        layer_inputs = (0..steps)
            .map(|t| g.concat(&[fwd_states[t], bwd_states[t]]))
            .collect::<Result<_, _>>()?;
    }

    let summary = g.concat(&summary_parts)?;
    Ok((layer_inputs, summary))
}

/// Encode every phase of a session independently and stack the summaries
/// into the `L x feature_width` local feature matrix.
pub fn encode_local<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    cfg: &EncoderConfig,
    session: Var,
) -> Result<Var, TensorError> {
    let rows = g.shape(session)[0];
    let phases = rows.div_ceil(cfg.q);
    let padded = if phases * cfg.q == rows {
        session
    } else {
        let cols = g.shape(session)[1];
        let pad = g.zeros(vec![phases * cfg.q - rows, cols]);
        g.concat_rows(&[session, pad])?
    };
    let mut summaries = Vec::with_capacity(phases);
    for i in 0..phases {
        let phase = g.slice_rows(padded, i * cfg.q, cfg.q)?;
        let (_, summary) = bigru_encode(g, bound, "local", cfg, phase)?;
        summaries.push(summary);
    }
    g.stack_rows(&summaries)
}

/// Encode the phase-summary sequence with the independently parameterized
/// global encoder.
pub fn encode_global<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    cfg: &EncoderConfig,
    z_local: Var,
) -> Result<Var, TensorError> {
    let (_, summary) = bigru_encode(g, bound, "global", cfg, z_local)?;
    Ok(summary)
}

/// Full hierarchical encoding of one session: local features per phase plus
/// the global session feature.
pub fn encode_session<T: Real>(
    g: &mut Graph<T>,
    bound: &Bound,
    cfg: &EncoderConfig,
    session: Var,
) -> Result<(Var, Var), TensorError> {
    let z_local = encode_local(g, bound, cfg, session)?;
    let z_global = encode_global(g, bound, cfg, z_local)?;
    Ok((z_local, z_global))
}
