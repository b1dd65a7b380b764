use serde::{Deserialize, Serialize};

use crate::compress::SparseMessage;
use crate::vector::ModelVector;

/// How much per-round state a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceDetail {
    /// Everything needed to replay the error and noise bookkeeping offline.
    #[default]
    Full,
    /// Model, mean error and byte counts only.
    Light,
}

/// State observed at the start of round `t` plus what the round produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// `x_t`.
    pub x: ModelVector,
    /// `e_t = (1/n) Σ e_t^{(i)}` before the round runs.
    pub e_mean: ModelVector,
    /// Aggregate direction `g_t` the server stepped along. Empty under `Light`.
    pub g: ModelVector,
    /// `(1/n) Σ g_t^{(i)}` recomputed from client states. Empty under `Light`.
    pub g_client_mean: ModelVector,
    /// `ξ_t`. Empty under `Light`.
    pub xi: ModelVector,
    /// Raw mini-batch gradients `∇̃_p f_i(x_t)`, by client. Empty under `Light`.
    pub client_grads: Vec<ModelVector>,
    pub uplink_bytes: usize,
    pub downlink_bytes: usize,
    pub uplink_messages: usize,
}

/// Full history of a run: `x_0 … x_T` and the per-round records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub algorithm: String,
    pub eta: f64,
    pub records: Vec<RoundRecord>,
    /// `x_T`.
    pub final_x: ModelVector,
    /// `e_T`.
    pub final_e: ModelVector,
}

impl RoundTrace {
    pub fn rounds(&self) -> usize {
        self.records.len()
    }

    /// `x_0, …, x_T`.
    pub fn iterates(&self) -> impl Iterator<Item = &ModelVector> + '_ {
        self.records
            .iter()
            .map(|r| &r.x)
            .chain(std::iter::once(&self.final_x))
    }

    /// `e_0, …, e_T`.
    pub fn mean_errors(&self) -> impl Iterator<Item = &ModelVector> + '_ {
        self.records
            .iter()
            .map(|r| &r.e_mean)
            .chain(std::iter::once(&self.final_e))
    }

    /// Corrected iterates `y_t = x_t − η e_t` for `t = 0..=T`.
    pub fn corrected_iterates(&self) -> Vec<ModelVector> {
        self.iterates()
            .zip(self.mean_errors())
            .map(|(x, e)| {
                let mut y = x.clone();
                y.axpy(-self.eta, e);
                y
            })
            .collect()
    }

    pub fn total_uplink_bytes(&self) -> usize {
        self.records.iter().map(|r| r.uplink_bytes).sum()
    }

    pub fn total_downlink_bytes(&self) -> usize {
        self.records.iter().map(|r| r.downlink_bytes).sum()
    }
}

/// Observer invoked for every uplink message a run constructs.
pub trait MessageTap: Sync {
    fn on_uplink(&self, round: usize, client: usize, message: &SparseMessage);
    /// Uncompressed uplink of `values` dense coordinates.
    fn on_dense_uplink(&self, round: usize, client: usize, values: usize);
}
