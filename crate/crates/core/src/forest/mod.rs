//! Tree and forest model, split scoring, inference, and the JSON model file.

mod model_file;
mod split;

pub use model_file::{from_model_bytes, load_model, save_model, to_model_bytes, MODEL_VERSION};
pub use split::{best_split, gini, gini_gain, majority};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Schema;
use crate::protocol::SessionConfig;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("negative class count {0}")]
    NegativeCount(f64),
    #[error("no split candidates")]
    NoCandidates,
    #[error("row has {found} features, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Routing sends a row left iff `value < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "leaf")]
        class_counts: Vec<f64>,
        #[serde(rename = "y")]
        majority: usize,
    },
}

impl TreeNode {
    pub fn leaf(class_counts: Vec<f64>) -> Self {
        let majority = majority(&class_counts);
        TreeNode::Leaf {
            class_counts,
            majority,
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if row[*feature] < *threshold { left } else { right };
        }
        node
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        match self.leaf_for(row) {
            TreeNode::Leaf { majority, .. } => *majority,
            TreeNode::Internal { .. } => unreachable!("leaf_for always ends on a leaf"),
        }
    }
}

/// Session settings and realized privacy cost recorded with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSnapshot {
    pub session: SessionConfig,
    /// Realized epsilon over all trees; absent without a privacy mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub schema: Schema,
    pub training: Option<TrainingSnapshot>,
}

impl Forest {
    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn tree_depths(&self) -> Vec<usize> {
        self.trees.iter().map(TreeNode::depth).collect()
    }

    /// Majority vote of the trees' leaf labels; ties go to the lowest class
    /// index.
    pub fn predict(&self, row: &[f64]) -> Result<usize, ForestError> {
        if row.len() != self.feature_count() {
            return Err(ForestError::Dimension {
                expected: self.feature_count(),
                found: row.len(),
            });
        }
        let mut votes = vec![0.0; self.schema.class_count()];
        for tree in &self.trees {
            votes[tree.predict(row)] += 1.0;
        }
        Ok(majority(&votes))
    }

    pub fn predict_all<'a>(&self, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<usize>, ForestError> {
        rows.into_iter().map(|r| self.predict(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelSpace;

    fn forest(trees: Vec<TreeNode>) -> Forest {
        Forest {
            trees,
            schema: Schema::numeric(2, LabelSpace::indexed(2).unwrap()),
            training: None,
        }
    }

    fn stump(feature: usize, threshold: f64, left: usize, right: usize) -> TreeNode {
        let leaf = |y: usize| TreeNode::leaf(if y == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] });
        TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(leaf(left)),
            right: Box::new(leaf(right)),
        }
    }

    #[test]
    fn constant_tree() {
        let f = forest(vec![TreeNode::leaf(vec![2.0, 5.0])]);
        assert_eq!(f.predict(&[0.0, 0.0]).unwrap(), 1);
        assert_eq!(f.predict(&[-9.0, 1e9]).unwrap(), 1);
    }

    #[test]
    fn majority_vote_and_tie_break() {
        let zero = TreeNode::leaf(vec![1.0, 0.0]);
        let one = TreeNode::leaf(vec![0.0, 1.0]);
        let f = forest(vec![zero.clone(), one.clone(), one.clone()]);
        assert_eq!(f.predict(&[0.0, 0.0]).unwrap(), 1);
        let tie = forest(vec![zero, one]);
        assert_eq!(tie.predict(&[0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn routing_is_strictly_less_left() {
        let f = forest(vec![stump(1, 0.5, 0, 1)]);
        assert_eq!(f.predict(&[0.0, 0.49]).unwrap(), 0);
        assert_eq!(f.predict(&[0.0, 0.5]).unwrap(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        let f = forest(vec![stump(0, 1.0, 0, 1)]);
        assert!(matches!(f.predict(&[1.0]), Err(ForestError::Dimension { expected: 2, found: 1 })));
    }

    #[test]
    fn depth_and_size() {
        let t = TreeNode::Internal {
            feature: 0,
            threshold: 0.0,
            left: Box::new(stump(1, 1.0, 0, 1)),
            right: Box::new(TreeNode::leaf(vec![1.0, 0.0])),
        };
        assert_eq!(t.depth(), 2);
        assert_eq!(t.node_count(), 5);
        assert_eq!(TreeNode::leaf(vec![0.0, 0.0]).depth(), 0);
    }
}
