use serde::{Deserialize, Serialize};

use super::config::{Interleaving, Mode};
use crate::adapt::{LatteParams, Policy};
use crate::theory::ErrorReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client: usize,
    pub domain: u32,
    pub processed: usize,
    pub correct: usize,
    pub zero_shot_correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub domain: u32,
    pub clients: usize,
    pub processed: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Communication totals. `upload_bytes`/`download_bytes` count prototype
/// scalars at the configured width; the `wire_` fields count every encoded
/// byte including record framing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommMetrics {
    pub rounds: usize,
    pub upload_bytes: usize,
    pub download_bytes: usize,
    pub bytes_per_round: f64,
    pub max_round_upload_bytes: usize,
    pub max_round_download_bytes: usize,
    pub upload_wire_bytes: usize,
    pub download_wire_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryMetrics {
    /// Pre-classifier error on the held-out draws, pooled over ID clients.
    pub eps_pre: ErrorReport,
    /// Adapted error on the same draws with memories frozen.
    pub eps_post: ErrorReport,
    pub per_client_eps_post: Vec<f64>,
    /// Largest distance from an ID client's memory entry to the asymptotic
    /// target of its queue; `None` if every queue is empty.
    pub memory_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub policy: Policy,
    pub interleaving: Interleaving,
    pub seed: u64,
    pub repeats: usize,
    pub clients: usize,
    pub params: LatteParams,
    pub per_client: Vec<ClientMetrics>,
    pub per_domain: Vec<DomainMetrics>,
    pub processed: usize,
    pub correct: usize,
    pub total_accuracy: f64,
    pub zero_shot_accuracy: f64,
    /// `total_accuracy − zero_shot_accuracy`.
    pub gain: f64,
    pub repeat_accuracies: Vec<f64>,
    pub comm: CommMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One row of the per-sample trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub client: usize,
    pub step: usize,
    pub pseudo_initial: usize,
    pub label_final: usize,
    pub true_label: usize,
    pub entropy_initial: f64,
    pub comm_round_flag: u8,
}

/// Byte counts of one client's exchange with the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub repeat: usize,
    pub client: usize,
    pub step: usize,
    pub uploaded_classes: usize,
    pub upload_bytes: usize,
    pub download_bytes: usize,
    pub upload_wire_bytes: usize,
    pub download_wire_bytes: usize,
    /// Every (class, client) slot of the global memory was filled when the
    /// exchange completed.
    pub global_full: bool,
}
