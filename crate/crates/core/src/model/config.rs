use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spatial {
    /// Multi-relational graph convolution.
    Mrgcn,
    /// Per-node transform that ignores edges (ablation baseline).
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    None,
    /// Scores from a plain projection of node embeddings.
    Topk,
    /// Scores from a graph convolution over the union of all edges.
    Sag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Add,
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    None,
    Lstm,
}

/// How many past frames influence a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum History {
    Full,
    /// Only the last `k` frames (including the current one).
    Window(usize),
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Full => f.write_str("full"),
            History::Window(k) => write!(f, "window{k}"),
        }
    }
}

impl FromStr for History {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "full" {
            return Ok(History::Full);
        }
        let k = s
            .strip_prefix("window")
            .map(|k| k.trim_start_matches(['(', ':', '=']).trim_end_matches(')'))
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(|| format!("history must be `full` or `window<k>`, got {s:?}"))?;
        if k == 0 {
            return Err("history window must be at least 1".into());
        }
        Ok(History::Window(k))
    }
}

impl From<History> for String {
    fn from(h: History) -> Self {
        h.to_string()
    }
}

impl TryFrom<String> for History {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mrgcn_layers: usize,
    pub mrgcn_dim: usize,
    pub pooling: Pooling,
    pub pooling_ratio: f64,
    pub readout: Readout,
    pub temporal: Temporal,
    pub lstm_hidden: usize,
    pub mlp_out: usize,
    pub dropout: f64,
    pub history: History,
    pub spatial: Spatial,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mrgcn_layers: 2,
            mrgcn_dim: 64,
            pooling: Pooling::Sag,
            pooling_ratio: 0.25,
            readout: Readout::Add,
            temporal: Temporal::Lstm,
            lstm_hidden: 20,
            mlp_out: 2,
            dropout: 0.1,
            history: History::Full,
            spatial: Spatial::Mrgcn,
        }
    }
}

impl ModelConfig {
    /// Single graph layer, larger LSTM, no pooling: the variant tuned for
    /// dashcam footage with varied camera geometry.
    pub fn preset_620dash() -> Self {
        Self {
            mrgcn_layers: 1,
            lstm_hidden: 100,
            pooling: Pooling::None,
            ..Self::default()
        }
    }

    /// One row of the spatial × pooling × temporal ablation grid.
    pub fn ablation(spatial: Spatial, pooling: Pooling, temporal: Temporal) -> Self {
        Self {
            spatial,
            pooling,
            temporal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pooling_ratio > 0.0 && self.pooling_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "pooling_ratio must lie in (0, 1], got {}",
                self.pooling_ratio
            )));
        }
        if self.mlp_out != 2 {
            return Err(Error::Config(format!("mlp_out must be 2, got {}", self.mlp_out)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.mrgcn_dim == 0 || (self.temporal == Temporal::Lstm && self.lstm_hidden == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if let History::Window(0) = self.history {
            return Err(Error::Config("history window must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of the concatenated node embedding for a vocabulary of
    /// `vocab_size` classes.
    pub fn concat_width(&self, vocab_size: usize) -> usize {
        vocab_size + self.mrgcn_layers * self.mrgcn_dim
    }
}
