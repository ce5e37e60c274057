//! Lockstep master/client tree construction over a message transport.
//!
//! The master drives a depth-first recursion over every tree and only ever
//! initiates rounds; each client mirrors the recursion from the broadcasts it
//! receives and only ever responds. Every node-scoped message carries a
//! [`NodeId`], so the two sides detect any divergence immediately.
//!
//! A node is processed in up to four rounds:
//!
//! 1. `StopQuery` → `LeafCounts` (only at the root, or once a node is known to
//!    be a leaf): perturbed label aggregates over the node's rows.
//! 2. `FeatureCandidates` → `RangeProposal`: each client proposes a value
//!    strictly inside its local range of every candidate feature.
//! 3. `ThresholdBroadcast` → `SplitCounts`: the master draws one threshold per
//!    feature between the extreme proposals; clients answer with perturbed
//!    label aggregates of both sides.
//! 4. `BestSplit` (or `LeafLabel`): the master announces the decision and both
//!    sides recurse left, then right.

mod client;
mod codec;
mod master;
mod message;
mod simulate;
mod transport;

pub use client::{client_run, client_run_with_stats, ClientStats};
pub use codec::{frame_decode, frame_encode, read_frame, write_frame, CodecError, MAX_FRAME_BYTES};
pub use master::master_run;
pub use message::{ErrorCode, Frame, LabelAggregate, Proposal, ProtocolMessage, SplitAggregate};
pub use simulate::{simulate, simulate_shards, simulate_with, SimOptions, Simulation};
pub use transport::{channel_pair, ChannelLink, Direction, Link, RecordingLink, TcpLink, TranscriptEntry};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::forest::ForestError;
use crate::ldp::{BloomParams, LdpError, PrivacyBudget, PrivacyMode, RrParams, DEFAULT_LAMBDA_PER_SAMPLE};

/// Per-round receive timeout used when none is configured.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Recommended upper bound on the number of clients.
pub const SOFT_MAX_CLIENTS: usize = 10;

/// A node whose dominant class reaches this share is not split further.
pub const PURITY_THRESHOLD: f64 = 0.999;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("timed out waiting for {peer}")]
    Timeout { peer: String },
    #[error("{peer} disconnected")]
    Disconnected { peer: String },
    #[error("protocol violation: expected {expected}, received {found}")]
    Unexpected { expected: String, found: String },
    #[error("unknown node {found}, expected {expected}")]
    UnknownNode { expected: NodeId, found: NodeId },
    #[error("message belongs to session {found:016x}, expected {expected:016x}")]
    SessionMismatch { expected: u64, found: u64 },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("peer aborted the session ({code}): {detail}")]
    Remote { code: ErrorCode, detail: String },
    #[error("participants built different forests: {0}")]
    Diverged(String),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ProtocolError {
    /// Code reported to the other side when this error aborts a session.
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::Schema(_) => ErrorCode::Schema,
            ProtocolError::SessionMismatch { .. } | ProtocolError::Config(_) => ErrorCode::Session,
            ProtocolError::Unexpected { .. } | ProtocolError::UnknownNode { .. } | ProtocolError::Codec(_) => {
                ErrorCode::Protocol
            }
            ProtocolError::Remote { code, .. } => *code,
            _ => ErrorCode::Internal,
        }
    }

    pub(crate) fn unexpected(expected: impl Into<String>, found: &ProtocolMessage) -> Self {
        ProtocolError::Unexpected {
            expected: expected.into(),
            found: found.kind().to_owned(),
        }
    }
}

/// Settings every participant of a session must share. The digest of the
/// serialized config doubles as the session id, so a client started with a
/// different config is rejected during the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub clients: usize,
    pub trees: usize,
    pub max_depth: usize,
    /// A node stops when its estimated size drops below this times `clients`.
    pub min_samples_leaf: usize,
    /// Features drawn per node; `None` means `ceil(sqrt(feature count))`.
    pub candidate_count: Option<usize>,
    pub privacy: PrivacyMode,
    pub bloom: BloomParams,
    pub rr: RrParams,
    pub epsilon_node: f64,
    /// Lasso penalty of the count decoder, per contributing sample.
    pub reg_lambda_per_sample: f64,
    /// Share of each client's rows drawn (without replacement) per tree.
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            clients: 2,
            trees: 20,
            max_depth: 20,
            min_samples_leaf: 1,
            candidate_count: None,
            privacy: PrivacyMode::None,
            bloom: BloomParams::default(),
            rr: RrParams::default(),
            epsilon_node: 1.0,
            reg_lambda_per_sample: DEFAULT_LAMBDA_PER_SAMPLE,
            subsample_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        if self.clients > SOFT_MAX_CLIENTS {
            log::warn!(
                "{} clients configured; the protocol is designed for at most {SOFT_MAX_CLIENTS}",
                self.clients
            );
        }
        if self.trees == 0 {
            return bad("trees must be at least 1".into());
        }
        if !(1..=100).contains(&self.max_depth) {
            return bad(format!("max_depth must lie in 1..=100, got {}", self.max_depth));
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if self.candidate_count == Some(0) {
            return bad("candidate_count must be at least 1".into());
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!("subsample_fraction must lie in (0, 1], got {}", self.subsample_fraction));
        }
        if !(self.reg_lambda_per_sample >= 0.0 && self.reg_lambda_per_sample.is_finite()) {
            return bad(format!(
                "reg_lambda_per_sample must be finite and non-negative, got {}",
                self.reg_lambda_per_sample
            ));
        }
        match self.privacy {
            PrivacyMode::None => {}
            PrivacyMode::Ldp => {
                self.bloom.validate()?;
                self.rr.validate()?;
            }
            PrivacyMode::Gdp => {
                if !(self.epsilon_node > 0.0 && self.epsilon_node.is_finite()) {
                    return Err(LdpError::Epsilon(self.epsilon_node).into());
                }
            }
        }
        if self.privacy == PrivacyMode::Ldp && !(self.epsilon_node > 0.0 && self.epsilon_node.is_finite()) {
            return Err(LdpError::Epsilon(self.epsilon_node).into());
        }
        Ok(())
    }

    /// Candidate features per node for a schema with `feature_count` features.
    pub fn candidates_for(&self, feature_count: usize) -> Result<usize, ProtocolError> {
        let k = self
            .candidate_count
            .unwrap_or_else(|| (feature_count as f64).sqrt().ceil() as usize);
        if k == 0 || k > feature_count {
            return Err(ProtocolError::Config(format!(
                "candidate_count {k} must lie in 1..={feature_count}"
            )));
        }
        Ok(k)
    }

    /// Stable identifier derived from the serialized config.
    pub fn session_id(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(&bytes);
        u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget {
            epsilon_node: self.epsilon_node,
            max_depth: self.max_depth,
            trees: self.trees,
            clients: self.clients,
            mode: self.privacy,
        }
    }

    /// Realized epsilon for trees of the given depths; `None` without a
    /// privacy mechanism.
    pub fn realized_epsilon(&self, tree_depths: &[usize]) -> Option<f64> {
        (self.privacy != PrivacyMode::None).then(|| self.budget().realized_total(tree_depths))
    }
}

/// Position of a node: its tree and the left/right turns from the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub tree: u32,
    pub path: String,
}

impl NodeId {
    pub fn root(tree: u32) -> Self {
        NodeId {
            tree,
            path: String::new(),
        }
    }

    pub fn left(&self) -> Self {
        self.child('L')
    }

    pub fn right(&self) -> Self {
        self.child('R')
    }

    fn child(&self, turn: char) -> Self {
        let mut path = String::with_capacity(self.path.len() + 1);
        path.push_str(&self.path);
        path.push(turn);
        NodeId { tree: self.tree, path }
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.tree, self.path)
    }
}

/// Stopping rule evaluated by the master on estimated class counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub clients: usize,
}

impl From<&SessionConfig> for StopRule {
    fn from(c: &SessionConfig) -> Self {
        StopRule {
            max_depth: c.max_depth,
            min_samples_leaf: c.min_samples_leaf,
            clients: c.clients,
        }
    }
}

/// True when a node at `depth` with estimated `counts` becomes a leaf. The
/// remaining condition, every candidate feature being degenerate, is only
/// known after the range round and is checked by the master there.
pub fn stopping_condition(rule: &StopRule, depth: usize, counts: &[f64]) -> bool {
    if depth >= rule.max_depth {
        return true;
    }
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) || total < (rule.min_samples_leaf * rule.clients) as f64 {
        return true;
    }
    let top = counts.iter().copied().fold(0.0, f64::max);
    top / total >= PURITY_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> StopRule {
        StopRule {
            max_depth: 5,
            min_samples_leaf: 2,
            clients: 2,
        }
    }

    #[test]
    fn stopping_examples() {
        assert!(stopping_condition(&rule(), 5, &[50.0, 50.0]));
        assert!(stopping_condition(&rule(), 1, &[100.0, 0.0]));
        assert!(!stopping_condition(&rule(), 1, &[50.0, 50.0]));
        assert!(stopping_condition(&rule(), 1, &[2.0, 1.0]));
        assert!(!stopping_condition(&rule(), 1, &[2.0, 2.0]));
        assert!(stopping_condition(&rule(), 0, &[0.0, 0.0]));
        assert!(stopping_condition(&rule(), 0, &[999.5, 0.5]));
    }

    #[test]
    fn node_ids() {
        let root = NodeId::root(3);
        assert_eq!(root.depth(), 0);
        let n = root.left().right();
        assert_eq!(n.path, "LR");
        assert_eq!(n.depth(), 2);
        assert_eq!(n.to_string(), "3/LR");
    }

    #[test]
    fn config_validation() {
        assert!(SessionConfig::default().validate().is_ok());
        let bad = [
            SessionConfig { clients: 0, ..Default::default() },
            SessionConfig { trees: 0, ..Default::default() },
            SessionConfig { max_depth: 0, ..Default::default() },
            SessionConfig { max_depth: 101, ..Default::default() },
            SessionConfig { candidate_count: Some(0), ..Default::default() },
            SessionConfig { subsample_fraction: 0.0, ..Default::default() },
            SessionConfig { privacy: PrivacyMode::Gdp, epsilon_node: 0.0, ..Default::default() },
            SessionConfig {
                privacy: PrivacyMode::Ldp,
                rr: RrParams { xi: 0.2, zeta: 0.4, pr: 0.5 },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        // Above the soft limit only warns.
        assert!(SessionConfig { clients: 11, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn candidate_default_is_ceil_sqrt() {
        let c = SessionConfig::default();
        assert_eq!(c.candidates_for(57).unwrap(), 8);
        assert_eq!(c.candidates_for(16).unwrap(), 4);
        assert_eq!(c.candidates_for(1).unwrap(), 1);
        let fixed = SessionConfig { candidate_count: Some(9), ..Default::default() };
        assert!(fixed.candidates_for(8).is_err());
    }

    #[test]
    fn session_id_tracks_config() {
        let a = SessionConfig::default();
        assert_eq!(a.session_id(), a.clone().session_id());
        assert_ne!(a.session_id(), SessionConfig { seed: 1, ..a }.session_id());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<SessionConfig>(r#"{"treez": 3}"#).unwrap_err();
        assert!(err.to_string().contains("treez"));
        let partial: SessionConfig = serde_json::from_str(r#"{"trees": 3}"#).unwrap();
        assert_eq!(partial.trees, 3);
        assert_eq!(partial.max_depth, 20);
    }
}
