//! Federated extremely randomized trees.
//!
//! Several clients holding disjoint rows of the same feature space jointly
//! grow an Extra-Trees classifier under the coordination of a master. Clients
//! never send rows: they propose random split thresholds from inside their
//! local feature ranges and release label statistics through one of three
//! mechanisms — exact counts, Laplace-perturbed counts, or Bloom-encoded
//! labels passed through two layers of randomized response.
//!
//! * [`dataset`] — CSV ingestion, train/test splits and client shards.
//! * [`ldp`] — the label privacy pipeline, its decoder, and the accountant.
//! * [`forest`] — split scoring, the tree model, and the model file.
//! * [`protocol`] — the master/client engines, wire format, and transports.
//! * [`metrics`] — accuracy, F1, and repeated-experiment reports.

pub mod dataset;
pub mod forest;
pub mod ldp;
pub mod metrics;
pub mod protocol;
pub mod rng;

pub use dataset::{DataShard, DatasetError, FeatureKind, FeatureMeta, LabelSpace, Schema};
pub use forest::{Forest, ForestError, TreeNode};
pub use ldp::{BitCountVector, BloomParams, LdpError, PrivacyMode, RrParams};
pub use metrics::{EvalReport, MetricsError};
pub use protocol::{NodeId, ProtocolError, ProtocolMessage, SessionConfig};

use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
