//! The data-holding side: answers every master round from local rows and
//! mirrors the master's recursion, so it ends holding the same forest.

use super::{
    Frame, LabelAggregate, Link, NodeId, Proposal, ProtocolError, ProtocolMessage, SessionConfig, SplitAggregate,
};
use crate::dataset::{subsample_indices, DataShard};
use crate::forest::{Forest, TrainingSnapshot, TreeNode};
use crate::ldp::{bloom_encode, laplace_perturb, permanent_rr, BitCountVector, PermanentEncoding, PrivacyMode};
use crate::rng::{self, client_seed, draw_open, Stream};

/// Work counters of one client session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    /// Permanent randomized-response strings built (once per row in LDP mode).
    pub permanent_encodings: usize,
    /// Label aggregates released (leaf and split sides).
    pub aggregates: usize,
}

pub fn client_run<L: Link>(config: &SessionConfig, shard: &DataShard, link: &mut L) -> Result<Forest, ProtocolError> {
    client_run_with_stats(config, shard, link).map(|(forest, _)| forest)
}

/// Like [`client_run`], also returning work counters.
pub fn client_run_with_stats<L: Link>(
    config: &SessionConfig,
    shard: &DataShard,
    link: &mut L,
) -> Result<(Forest, ClientStats), ProtocolError> {
    config.validate()?;
    let mut client = Client {
        config,
        session: config.session_id(),
        shard,
        link,
        seed: client_seed(config.seed, shard.client_id),
        permanent: Vec::new(),
        stats: ClientStats::default(),
    };
    let result = client.run();
    if let Err(e) = &result {
        log::error!("client {} aborting session: {e}", shard.client_id);
        if !matches!(
            e,
            ProtocolError::Remote { .. } | ProtocolError::Disconnected { .. } | ProtocolError::Timeout { .. }
        ) {
            let _ = client.send(ProtocolMessage::Error {
                code: e.code(),
                detail: e.to_string(),
            });
        }
    }
    result.map(|forest| (forest, client.stats))
}

struct Client<'a, L> {
    config: &'a SessionConfig,
    session: u64,
    shard: &'a DataShard,
    link: &'a mut L,
    seed: u64,
    permanent: Vec<PermanentEncoding>,
    stats: ClientStats,
}

/// Per-tree random streams of one client.
struct TreeStreams {
    proposal: Stream,
    noise: Stream,
}

impl<L: Link> Client<'_, L> {
    fn run(&mut self) -> Result<Forest, ProtocolError> {
        if self.config.privacy == PrivacyMode::Ldp {
            self.encode_permanent();
        }
        let schema = self.shard.schema();
        self.send(ProtocolMessage::ClientHello {
            client_id: self.shard.client_id,
            n: self.shard.len() as u64,
            features: schema.features.clone(),
            classes: schema.labels.classes().to_vec(),
        })?;

        let mut trees = Vec::new();
        loop {
            match self.recv()? {
                ProtocolMessage::TreeBegin { tree } if tree as usize == trees.len() => {
                    let p = u64::from(tree);
                    let rows = subsample_indices(
                        self.shard.len(),
                        self.config.subsample_fraction,
                        &mut rng::stream(self.seed, &[rng::TAG_SUBSAMPLE, p]),
                    );
                    let noise_tag = match self.config.privacy {
                        PrivacyMode::Gdp => rng::TAG_LAPLACE,
                        _ => rng::TAG_INSTANT,
                    };
                    let mut streams = TreeStreams {
                        proposal: rng::stream(self.seed, &[rng::TAG_PROPOSAL, p]),
                        noise: rng::stream(self.seed, &[noise_tag, p]),
                    };
                    let root = self.grow(&mut streams, NodeId::root(tree), rows)?;
                    match self.recv()? {
                        ProtocolMessage::TreeEnd { tree: t } if t == tree => trees.push(root),
                        other => return Err(ProtocolError::unexpected(format!("TreeEnd {{ tree: {tree} }}"), &other)),
                    }
                }
                ProtocolMessage::SessionEnd => break,
                other => return Err(ProtocolError::unexpected("TreeBegin or SessionEnd", &other)),
            }
        }
        if trees.len() != self.config.trees {
            return Err(ProtocolError::Unexpected {
                expected: format!("{} trees", self.config.trees),
                found: format!("SessionEnd after {}", trees.len()),
            });
        }
        let depths: Vec<usize> = trees.iter().map(TreeNode::depth).collect();
        Ok(Forest {
            trees,
            schema: (**self.shard.schema()).clone(),
            training: Some(TrainingSnapshot {
                session: self.config.clone(),
                epsilon_total: self.config.realized_epsilon(&depths),
            }),
        })
    }

    /// Builds the memoized permanent responses, once per row for the whole
    /// forest.
    fn encode_permanent(&mut self) {
        let mut rng = rng::stream(self.seed, &[rng::TAG_PERMANENT]);
        let bloom = &self.config.bloom;
        let pr = self.config.rr.pr;
        self.permanent = self
            .shard
            .labels()
            .iter()
            .map(|&y| permanent_rr(&bloom_encode(y, bloom), pr, &mut rng))
            .collect();
        self.stats.permanent_encodings += self.permanent.len();
    }

    fn grow(&mut self, streams: &mut TreeStreams, node: NodeId, rows: Vec<usize>) -> Result<TreeNode, ProtocolError> {
        let features = match self.next(streams, &node, &rows)? {
            ProtocolMessage::LeafLabel {
                class_counts,
                majority,
                ..
            } => return self.leaf(class_counts, majority),
            ProtocolMessage::FeatureCandidates { features, .. } => features,
            other => return Err(ProtocolError::unexpected("FeatureCandidates or LeafLabel", &other)),
        };
        if let Some(&bad) = features.iter().find(|&&f| f >= self.shard.feature_count()) {
            return Err(ProtocolError::Schema(format!(
                "candidate feature {bad} out of range for {} features",
                self.shard.feature_count()
            )));
        }

        let proposals = features
            .iter()
            .map(|&f| self.propose(f, &rows, &mut streams.proposal))
            .collect();
        self.send(ProtocolMessage::RangeProposal {
            node: node.clone(),
            proposals,
        })?;

        let thresholds = match self.next(streams, &node, &rows)? {
            ProtocolMessage::LeafLabel {
                class_counts,
                majority,
                ..
            } => return self.leaf(class_counts, majority),
            ProtocolMessage::ThresholdBroadcast { thresholds, .. } if thresholds.len() == features.len() => thresholds,
            other => return Err(ProtocolError::unexpected("ThresholdBroadcast or LeafLabel", &other)),
        };

        // Partition once per candidate; the chosen one is reused below.
        let partitions: Vec<Option<(Vec<usize>, Vec<usize>)>> = features
            .iter()
            .zip(&thresholds)
            .map(|(&f, thr)| thr.map(|t| rows.iter().copied().partition(|&r| self.shard.value(r, f) < t)))
            .collect();
        let splits = partitions
            .iter()
            .map(|p| {
                p.as_ref().map(|(l, r)| SplitAggregate {
                    left: self.aggregate(l, &mut streams.noise),
                    right: self.aggregate(r, &mut streams.noise),
                })
            })
            .collect();
        self.send(ProtocolMessage::SplitCounts {
            node: node.clone(),
            splits,
        })?;

        let (feature, threshold) = match self.next(streams, &node, &rows)? {
            ProtocolMessage::BestSplit { feature, threshold, .. } => (feature, threshold),
            other => return Err(ProtocolError::unexpected("BestSplit", &other)),
        };
        let chosen = features
            .iter()
            .zip(&thresholds)
            .position(|(&f, &t)| f == feature && t == Some(threshold))
            .ok_or_else(|| ProtocolError::Unexpected {
                expected: "a best split among the broadcast candidates".into(),
                found: format!("feature {feature} at {threshold}"),
            })?;
        let (left_rows, right_rows) = partitions
            .into_iter()
            .nth(chosen)
            .flatten()
            .expect("chosen candidate has a threshold");
        drop(rows);
        let left = self.grow(streams, node.left(), left_rows)?;
        let right = self.grow(streams, node.right(), right_rows)?;
        Ok(TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    fn leaf(&self, class_counts: Vec<f64>, majority: usize) -> Result<TreeNode, ProtocolError> {
        let classes = self.shard.schema().class_count();
        if class_counts.len() != classes || majority >= classes {
            return Err(ProtocolError::Schema(format!(
                "leaf label for {} classes, local schema has {classes}",
                class_counts.len()
            )));
        }
        Ok(TreeNode::Leaf {
            class_counts,
            majority,
        })
    }

    /// Next message for `node`, answering any leaf-count queries on the way.
    fn next(&mut self, streams: &mut TreeStreams, node: &NodeId, rows: &[usize]) -> Result<ProtocolMessage, ProtocolError> {
        loop {
            let msg = self.recv()?;
            match msg.node() {
                Some(n) if n != node => {
                    return Err(ProtocolError::UnknownNode {
                        expected: node.clone(),
                        found: n.clone(),
                    })
                }
                Some(_) => {}
                None => return Err(ProtocolError::unexpected(format!("a message for node {node}"), &msg)),
            }
            if let ProtocolMessage::StopQuery { .. } = msg {
                let counts = self.aggregate(rows, &mut streams.noise);
                self.send(ProtocolMessage::LeafCounts {
                    node: node.clone(),
                    counts,
                })?;
                continue;
            }
            return Ok(msg);
        }
    }

    /// A value strictly inside the local range of `feature` over `rows`, or
    /// the degenerate marker when that range is a single point or empty.
    fn propose(&self, feature: usize, rows: &[usize], rng: &mut Stream) -> Proposal {
        let mut values = rows.iter().map(|&r| self.shard.value(r, feature));
        let Some(first) = values.next() else {
            return Proposal::Degenerate;
        };
        let (lo, hi) = values.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        draw_open(rng, lo, hi).map_or(Proposal::Degenerate, Proposal::Interior)
    }

    /// The released label statistic of `rows` under the session's mechanism.
    fn aggregate(&mut self, rows: &[usize], rng: &mut Stream) -> LabelAggregate {
        self.stats.aggregates += 1;
        let classes = self.shard.schema().class_count();
        let histogram = || {
            let mut h = vec![0u64; classes];
            for &r in rows {
                h[self.shard.label(r)] += 1;
            }
            h
        };
        match self.config.privacy {
            PrivacyMode::None => LabelAggregate::Exact(histogram()),
            PrivacyMode::Gdp => LabelAggregate::Noisy(laplace_perturb(&histogram(), self.config.epsilon_node, rng)),
            PrivacyMode::Ldp => {
                let mut acc = BitCountVector::zero(self.config.bloom.bits);
                for &r in rows {
                    acc.add_instant(&self.permanent[r], &self.config.rr, rng);
                }
                LabelAggregate::Bits(acc)
            }
        }
    }

    fn send(&mut self, message: ProtocolMessage) -> Result<(), ProtocolError> {
        self.link.send(&Frame::new(self.session, message))
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        let frame = self.link.recv()?;
        if let ProtocolMessage::Error { code, detail } = frame.message {
            return Err(ProtocolError::Remote { code, detail });
        }
        if frame.session != self.session {
            return Err(ProtocolError::SessionMismatch {
                expected: self.session,
                found: frame.session,
            });
        }
        Ok(frame.message)
    }
}
