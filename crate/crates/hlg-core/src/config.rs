//! Resolved run configuration shared by training, evaluation, and the CLI.

use crate::encoder::{CellKind, EncoderConfig};
use crate::simnet::{AttentionMode, LocalSimKind, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Every tunable with its default. Deserializes from a flat TOML table;
/// unknown keys are rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Session length in packets.
    pub n: usize,
    /// Phase window length.
    pub q: usize,
    /// Hidden units per direction.
    pub d: usize,
    /// Stacked recurrent layers.
    #[serde(alias = "l")]
    pub layers: usize,
    /// Attention projection width.
    pub d_k: usize,
    pub cell: CellKind,
    /// Classes per episode (benign plus way - 1 malicious).
    pub way: usize,
    /// Support samples per class.
    pub shot: usize,
    /// Query samples per class.
    pub n_query: usize,
    /// Training episodes.
    pub episodes: usize,
    pub lr: f64,
    pub seed: u64,
    pub precision: Precision,
    pub attention_mode: AttentionMode,
    pub symmetrize: bool,
    /// Apply a second sigmoid to the class-average scores before the loss.
    pub double_sigmoid: bool,
    pub local_sim: LocalSimKind,
    /// Rewrite addresses only in the first packet of each session.
    pub anonymize_first_only: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 16,
            q: 2,
            d: 64,
            layers: 2,
            d_k: 32,
            cell: CellKind::Gru,
            way: 2,
            shot: 5,
            n_query: 15,
            episodes: 1000,
            lr: 0.001,
            seed: 0,
            precision: Precision::F32,
            attention_mode: AttentionMode::Token,
            symmetrize: true,
            double_sigmoid: false,
            local_sim: LocalSimKind::Cosine,
            anonymize_first_only: false,
        }
    }
}

impl RunConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            n: self.n,
            q: self.q,
            d: self.d,
            layers: self.layers,
            cell: self.cell,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            d_k: self.d_k,
            attention_mode: self.attention_mode,
            symmetrize: self.symmetrize,
            local_sim: self.local_sim,
        }
    }

    /// Check every field against the preconditions of the modules that
    /// consume it, before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        self.encoder_config().validate()?;
        self.sim_config().validate()?;
        if self.way < 2 {
            return Err("way must be at least 2 (benign plus one malicious class)".into());
        }
        if self.shot < 1 {
            return Err("shot must be at least 1".into());
        }
        if self.n_query < 1 {
            return Err("n_query must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("learning rate {} is not usable", self.lr));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
