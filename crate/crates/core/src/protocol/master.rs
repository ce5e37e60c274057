//! The coordinating side: drives every round, decodes the clients' label
//! aggregates, scores candidate splits, and assembles the forest.

use rand::seq::index;

use super::{
    stopping_condition, Frame, LabelAggregate, Link, NodeId, Proposal, ProtocolError, ProtocolMessage,
    SessionConfig, StopRule,
};
use crate::dataset::{LabelSpace, Schema};
use crate::forest::{best_split, gini_gain, Forest, TrainingSnapshot, TreeNode};
use crate::ldp::{decode_counts, merge_counts, PrivacyMode};
use crate::rng::{self, draw_open, Stream};

/// Runs a full training session against `links`, one per client, in any
/// order; clients are identified by the id in their hello. On failure every
/// client is sent an `Error` before the error is returned.
pub fn master_run<L: Link>(config: &SessionConfig, links: Vec<L>) -> Result<Forest, ProtocolError> {
    config.validate()?;
    let mut master = Master {
        config,
        session: config.session_id(),
        links,
        schema: None,
        candidates: 0,
    };
    let result = master.run();
    if let Err(e) = &result {
        log::error!("master aborting session: {e}");
        master.abort(e);
    }
    result
}

struct Master<'a, L> {
    config: &'a SessionConfig,
    session: u64,
    links: Vec<L>,
    schema: Option<Schema>,
    candidates: usize,
}

impl<L: Link> Master<'_, L> {
    fn run(&mut self) -> Result<Forest, ProtocolError> {
        self.handshake()?;
        let mut trees = Vec::with_capacity(self.config.trees);
        for p in 0..self.config.trees {
            let tree = p as u32;
            self.broadcast(ProtocolMessage::TreeBegin { tree })?;
            let mut rng = rng::stream(self.config.seed, &[rng::TAG_TREE, p as u64]);
            let root = self.grow(&mut rng, NodeId::root(tree), None)?;
            self.broadcast(ProtocolMessage::TreeEnd { tree })?;
            log::debug!("tree {p}: depth {}, {} nodes", root.depth(), root.node_count());
            trees.push(root);
        }
        self.broadcast(ProtocolMessage::SessionEnd)?;
        let depths: Vec<usize> = trees.iter().map(TreeNode::depth).collect();
        Ok(Forest {
            trees,
            schema: self.schema.take().expect("schema set by handshake"),
            training: Some(TrainingSnapshot {
                session: self.config.clone(),
                epsilon_total: self.config.realized_epsilon(&depths),
            }),
        })
    }

    fn handshake(&mut self) -> Result<(), ProtocolError> {
        if self.links.len() != self.config.clients {
            return Err(ProtocolError::Config(format!(
                "session expects {} clients, {} connected",
                self.config.clients,
                self.links.len()
            )));
        }
        let mut hellos = Vec::with_capacity(self.links.len());
        for link in &mut self.links {
            let frame = link.recv()?;
            match check_session(self.session, frame)? {
                ProtocolMessage::ClientHello {
                    client_id,
                    n,
                    features,
                    classes,
                } => hellos.push((client_id, n, features, classes)),
                other => return Err(ProtocolError::unexpected("ClientHello", &other)),
            }
        }
        // Order links by client id so the session does not depend on the
        // order in which clients connected.
        let mut order: Vec<usize> = (0..hellos.len()).collect();
        order.sort_by_key(|&i| hellos[i].0);
        for (rank, &i) in order.iter().enumerate() {
            if hellos[i].0 as usize != rank {
                return Err(ProtocolError::Schema(format!(
                    "client ids must be 0..{} without repeats, got {:?}",
                    self.config.clients,
                    order.iter().map(|&j| hellos[j].0).collect::<Vec<_>>()
                )));
            }
        }
        let mut slots: Vec<Option<L>> = self.links.drain(..).map(Some).collect();
        self.links = order.iter().map(|&i| slots[i].take().expect("each slot used once")).collect();
        hellos.sort_by_key(|h| h.0);

        let (_, _, features, classes) = &hellos[0];
        for (id, _, f, c) in &hellos[1..] {
            if f.len() != features.len() {
                return Err(ProtocolError::Schema(format!(
                    "client {id} has {} features, client 0 has {}",
                    f.len(),
                    features.len()
                )));
            }
            if f != features {
                return Err(ProtocolError::Schema(format!("client {id} feature metadata differs from client 0")));
            }
            if c != classes {
                return Err(ProtocolError::Schema(format!(
                    "client {id} classes {c:?} differ from client 0 classes {classes:?}"
                )));
            }
        }
        let labels = LabelSpace::new(classes.clone()).map_err(|e| ProtocolError::Schema(e.to_string()))?;
        let schema = Schema {
            features: features.clone(),
            labels,
        };
        self.candidates = self.config.candidates_for(schema.feature_count())?;
        let total: u64 = hellos.iter().map(|h| h.1).sum();
        log::info!(
            "session {:016x}: {} clients, {} rows, {} features, {} classes",
            self.session,
            hellos.len(),
            total,
            schema.feature_count(),
            schema.class_count()
        );
        self.schema = Some(schema);
        Ok(())
    }

    fn class_count(&self) -> usize {
        self.schema.as_ref().expect("schema set by handshake").class_count()
    }

    fn feature_count(&self) -> usize {
        self.schema.as_ref().expect("schema set by handshake").feature_count()
    }

    /// Builds the subtree at `node`. `known` holds the node's estimated
    /// counts when its parent's split round already produced them.
    fn grow(&mut self, rng: &mut Stream, node: NodeId, known: Option<Vec<f64>>) -> Result<TreeNode, ProtocolError> {
        let (counts, fresh) = match known {
            Some(c) => (c, false),
            None => (self.leaf_round(&node)?, true),
        };
        if stopping_condition(&StopRule::from(self.config), node.depth(), &counts) {
            return self.finish_leaf(node, fresh.then_some(counts));
        }

        let features = index::sample(rng, self.feature_count(), self.candidates).into_vec();
        self.broadcast(ProtocolMessage::FeatureCandidates {
            node: node.clone(),
            features: features.clone(),
        })?;
        let mut interior: Vec<Vec<f64>> = vec![Vec::new(); features.len()];
        for reply in self.gather()? {
            match reply {
                ProtocolMessage::RangeProposal { node: n, proposals } => {
                    check_node(&node, &n)?;
                    check_len("range proposals", features.len(), proposals.len())?;
                    for (slot, p) in interior.iter_mut().zip(proposals) {
                        if let Proposal::Interior(v) = p {
                            if !v.is_finite() {
                                return Err(ProtocolError::Unexpected {
                                    expected: "a finite proposal".into(),
                                    found: v.to_string(),
                                });
                            }
                            slot.push(v);
                        }
                    }
                }
                other => return Err(ProtocolError::unexpected("RangeProposal", &other)),
            }
        }
        let thresholds: Vec<Option<f64>> = interior.iter().map(|vals| pick_threshold(vals, rng)).collect();
        if thresholds.iter().all(Option::is_none) {
            return self.finish_leaf(node, fresh.then_some(counts));
        }

        self.broadcast(ProtocolMessage::ThresholdBroadcast {
            node: node.clone(),
            thresholds: thresholds.clone(),
        })?;
        let mut sides: Vec<(Vec<LabelAggregate>, Vec<LabelAggregate>)> = vec![(Vec::new(), Vec::new()); features.len()];
        for reply in self.gather()? {
            match reply {
                ProtocolMessage::SplitCounts { node: n, splits } => {
                    check_node(&node, &n)?;
                    check_len("split aggregates", features.len(), splits.len())?;
                    for ((slot, split), thr) in sides.iter_mut().zip(splits).zip(&thresholds) {
                        match (split, thr) {
                            (Some(s), Some(_)) => {
                                slot.0.push(s.left);
                                slot.1.push(s.right);
                            }
                            (None, None) => {}
                            _ => {
                                return Err(ProtocolError::Unexpected {
                                    expected: "split aggregates exactly for the broadcast thresholds".into(),
                                    found: "a mismatched entry".into(),
                                })
                            }
                        }
                    }
                }
                other => return Err(ProtocolError::unexpected("SplitCounts", &other)),
            }
        }

        let mut scored = Vec::new();
        let mut estimates = Vec::new();
        for ((&f, thr), (left, right)) in features.iter().zip(&thresholds).zip(sides) {
            let Some(t) = *thr else { continue };
            let l = self.decode(left)?;
            let r = self.decode(right)?;
            let parent: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a + b).collect();
            scored.push((f, t, gini_gain(&parent, &l, &r)?));
            estimates.push((f, l, r));
        }
        let (feature, threshold) = best_split(&scored)?;
        let (_, left_counts, right_counts) = estimates
            .into_iter()
            .find(|e| e.0 == feature)
            .expect("best split is one of the scored candidates");
        self.broadcast(ProtocolMessage::BestSplit {
            node: node.clone(),
            feature,
            threshold,
        })?;
        let left = self.grow(rng, node.left(), Some(left_counts))?;
        let right = self.grow(rng, node.right(), Some(right_counts))?;
        Ok(TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    /// Gathers fresh label aggregates for `node` and decodes them.
    fn leaf_round(&mut self, node: &NodeId) -> Result<Vec<f64>, ProtocolError> {
        self.broadcast(ProtocolMessage::StopQuery { node: node.clone() })?;
        let mut aggregates = Vec::with_capacity(self.links.len());
        for reply in self.gather()? {
            match reply {
                ProtocolMessage::LeafCounts { node: n, counts } => {
                    check_node(node, &n)?;
                    aggregates.push(counts);
                }
                other => return Err(ProtocolError::unexpected("LeafCounts", &other)),
            }
        }
        self.decode(aggregates)
    }

    fn finish_leaf(&mut self, node: NodeId, cached: Option<Vec<f64>>) -> Result<TreeNode, ProtocolError> {
        let counts = match cached {
            Some(c) => c,
            None => self.leaf_round(&node)?,
        };
        let leaf = TreeNode::leaf(counts);
        let TreeNode::Leaf {
            class_counts,
            majority,
        } = &leaf
        else {
            unreachable!("TreeNode::leaf builds a leaf")
        };
        self.broadcast(ProtocolMessage::LeafLabel {
            node,
            class_counts: class_counts.clone(),
            majority: *majority,
        })?;
        Ok(leaf)
    }

    /// Global class-count estimate from one aggregate per client.
    fn decode(&self, aggregates: Vec<LabelAggregate>) -> Result<Vec<f64>, ProtocolError> {
        let classes = self.class_count();
        let wrong = |a: &LabelAggregate| ProtocolError::Unexpected {
            expected: format!("{} label aggregates with {classes} classes", self.config.privacy),
            found: format!("{a:?}").chars().take(80).collect(),
        };
        match self.config.privacy {
            PrivacyMode::None => {
                let mut total = vec![0.0; classes];
                for a in &aggregates {
                    match a {
                        LabelAggregate::Exact(c) if c.len() == classes => {
                            total.iter_mut().zip(c).for_each(|(t, &v)| *t += v as f64)
                        }
                        other => return Err(wrong(other)),
                    }
                }
                Ok(total)
            }
            PrivacyMode::Gdp => {
                let mut total = vec![0.0; classes];
                for a in &aggregates {
                    match a {
                        LabelAggregate::Noisy(c) if c.len() == classes && c.iter().all(|v| v.is_finite()) => {
                            total.iter_mut().zip(c).for_each(|(t, &v)| *t += v)
                        }
                        other => return Err(wrong(other)),
                    }
                }
                Ok(total.into_iter().map(|t| t.max(0.0)).collect())
            }
            PrivacyMode::Ldp => {
                let mut vectors = Vec::with_capacity(aggregates.len());
                for a in aggregates {
                    match a {
                        LabelAggregate::Bits(b) if b.bits() == self.config.bloom.bits && b.is_consistent() => {
                            vectors.push(b)
                        }
                        other => return Err(wrong(&other)),
                    }
                }
                let merged = merge_counts(&vectors)?;
                if merged.n == 0 {
                    return Ok(vec![0.0; classes]);
                }
                let lambda = self.config.reg_lambda_per_sample * merged.n as f64;
                Ok(decode_counts(&merged, &self.config.bloom, &self.config.rr, classes, lambda)?.counts)
            }
        }
    }

    fn broadcast(&mut self, message: ProtocolMessage) -> Result<(), ProtocolError> {
        let frame = Frame::new(self.session, message);
        for link in &mut self.links {
            link.send(&frame)?;
        }
        Ok(())
    }

    /// One reply from every client, in client order.
    fn gather(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let mut out = Vec::with_capacity(self.links.len());
        for link in &mut self.links {
            out.push(check_session(self.session, link.recv()?)?);
        }
        Ok(out)
    }

    fn abort(&mut self, error: &ProtocolError) {
        let frame = Frame::new(
            self.session,
            ProtocolMessage::Error {
                code: error.code(),
                detail: error.to_string(),
            },
        );
        for link in &mut self.links {
            let _ = link.send(&frame);
        }
    }
}

/// Threshold for one feature from the clients' interior proposals: a uniform
/// draw strictly between the smallest and largest proposal, or the common
/// value when all proposals coincide. `None` when every client reported a
/// degenerate range.
pub(crate) fn pick_threshold(proposals: &[f64], rng: &mut Stream) -> Option<f64> {
    let lo = proposals.iter().copied().reduce(f64::min)?;
    let hi = proposals.iter().copied().reduce(f64::max)?;
    if lo == hi {
        return Some(lo);
    }
    Some(draw_open(rng, lo, hi).unwrap_or(lo))
}

fn check_session(session: u64, frame: Frame) -> Result<ProtocolMessage, ProtocolError> {
    if let ProtocolMessage::Error { code, detail } = frame.message {
        return Err(ProtocolError::Remote { code, detail });
    }
    if frame.session != session {
        return Err(ProtocolError::SessionMismatch {
            expected: session,
            found: frame.session,
        });
    }
    Ok(frame.message)
}

fn check_node(expected: &NodeId, found: &NodeId) -> Result<(), ProtocolError> {
    if expected != found {
        return Err(ProtocolError::UnknownNode {
            expected: expected.clone(),
            found: found.clone(),
        });
    }
    Ok(())
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), ProtocolError> {
    if expected != found {
        return Err(ProtocolError::Unexpected {
            expected: format!("{expected} {what}"),
            found: found.to_string(),
        });
    }
    Ok(())
}
