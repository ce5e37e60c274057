//! The wire catalog. Messages are internally tagged by `type`; every frame
//! also carries the session id.

use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::dataset::FeatureMeta;
use crate::ldp::BitCountVector;

/// A client's proposal for one candidate feature at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// A value strictly inside the client's local range.
    Interior(f64),
    /// The client's rows at this node hold at most one distinct value.
    Degenerate,
}

/// Label statistics a client releases for a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelAggregate {
    /// Exact class histogram (no privacy mechanism).
    Exact(Vec<u64>),
    /// Laplace-perturbed class histogram.
    Noisy(Vec<f64>),
    /// Per-bit sums of instant randomized-response strings.
    Bits(BitCountVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAggregate {
    pub left: LabelAggregate,
    pub right: LabelAggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Protocol,
    Schema,
    Session,
    Internal,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCode::Protocol => "protocol",
            ErrorCode::Schema => "schema",
            ErrorCode::Session => "session",
            ErrorCode::Internal => "internal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ProtocolMessage {
    ClientHello {
        client_id: u32,
        n: u64,
        features: Vec<FeatureMeta>,
        classes: Vec<String>,
    },
    TreeBegin {
        tree: u32,
    },
    StopQuery {
        node: NodeId,
    },
    LeafCounts {
        node: NodeId,
        counts: LabelAggregate,
    },
    FeatureCandidates {
        node: NodeId,
        features: Vec<usize>,
    },
    RangeProposal {
        node: NodeId,
        proposals: Vec<Proposal>,
    },
    /// One threshold per candidate feature; `None` marks an unsplittable
    /// feature.
    ThresholdBroadcast {
        node: NodeId,
        thresholds: Vec<Option<f64>>,
    },
    /// One entry per candidate feature, `None` where no threshold was sent.
    SplitCounts {
        node: NodeId,
        splits: Vec<Option<SplitAggregate>>,
    },
    BestSplit {
        node: NodeId,
        feature: usize,
        threshold: f64,
    },
    LeafLabel {
        node: NodeId,
        class_counts: Vec<f64>,
        majority: usize,
    },
    TreeEnd {
        tree: u32,
    },
    SessionEnd,
    Error {
        code: ErrorCode,
        detail: String,
    },
}

impl ProtocolMessage {
    /// Every `type` tag of the catalog.
    pub const KINDS: [&'static str; 13] = [
        "ClientHello",
        "TreeBegin",
        "StopQuery",
        "LeafCounts",
        "FeatureCandidates",
        "RangeProposal",
        "ThresholdBroadcast",
        "SplitCounts",
        "BestSplit",
        "LeafLabel",
        "TreeEnd",
        "SessionEnd",
        "Error",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::ClientHello { .. } => "ClientHello",
            ProtocolMessage::TreeBegin { .. } => "TreeBegin",
            ProtocolMessage::StopQuery { .. } => "StopQuery",
            ProtocolMessage::LeafCounts { .. } => "LeafCounts",
            ProtocolMessage::FeatureCandidates { .. } => "FeatureCandidates",
            ProtocolMessage::RangeProposal { .. } => "RangeProposal",
            ProtocolMessage::ThresholdBroadcast { .. } => "ThresholdBroadcast",
            ProtocolMessage::SplitCounts { .. } => "SplitCounts",
            ProtocolMessage::BestSplit { .. } => "BestSplit",
            ProtocolMessage::LeafLabel { .. } => "LeafLabel",
            ProtocolMessage::TreeEnd { .. } => "TreeEnd",
            ProtocolMessage::SessionEnd => "SessionEnd",
            ProtocolMessage::Error { .. } => "Error",
        }
    }

    /// The node a node-scoped message refers to.
    pub fn node(&self) -> Option<&NodeId> {
        match self {
            ProtocolMessage::StopQuery { node }
            | ProtocolMessage::LeafCounts { node, .. }
            | ProtocolMessage::FeatureCandidates { node, .. }
            | ProtocolMessage::RangeProposal { node, .. }
            | ProtocolMessage::ThresholdBroadcast { node, .. }
            | ProtocolMessage::SplitCounts { node, .. }
            | ProtocolMessage::BestSplit { node, .. }
            | ProtocolMessage::LeafLabel { node, .. } => Some(node),
            _ => None,
        }
    }
}

/// A message stamped with its session id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub session: u64,
    #[serde(flatten)]
    pub message: ProtocolMessage,
}

impl Frame {
    pub fn new(session: u64, message: ProtocolMessage) -> Self {
        Frame { session, message }
    }
}
