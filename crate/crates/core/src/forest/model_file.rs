//! Versioned JSON model file:
//! `{"version":1,"label_space":[...],"features":[...],"trees":[...],"training":{...}}`
//! with internal nodes `{"f":idx,"t":thr,"l":...,"r":...}` and leaves
//! `{"leaf":[counts],"y":idx}`. Serialization is canonical: saving a loaded
//! model reproduces the same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ForestError, TrainingSnapshot, TreeNode};
use crate::dataset::{FeatureMeta, LabelSpace, Schema};

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    label_space: LabelSpace,
    features: Vec<FeatureMeta>,
    trees: Vec<TreeNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingSnapshot>,
}

pub fn to_model_bytes(forest: &Forest) -> Vec<u8> {
    let file = ModelFile {
        version: MODEL_VERSION,
        label_space: forest.schema.labels.clone(),
        features: forest.schema.features.clone(),
        trees: forest.trees.clone(),
        training: forest.training.clone(),
    };
    let mut bytes = serde_json::to_vec(&file).expect("model serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

pub fn save_model(forest: &Forest, path: impl AsRef<Path>) -> Result<(), ForestError> {
    std::fs::write(path, to_model_bytes(forest))?;
    Ok(())
}

pub fn from_model_bytes(bytes: &[u8]) -> Result<Forest, ForestError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ForestError::Corrupt(e.to_string()))?;
    match value.get("version") {
        Some(v) if v.as_u64() == Some(u64::from(MODEL_VERSION)) => {}
        Some(v) => {
            return Err(ForestError::Version {
                found: v.to_string(),
                expected: MODEL_VERSION,
            })
        }
        None => return Err(ForestError::Corrupt("missing `version`".into())),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| ForestError::Corrupt(e.to_string()))?;
    let schema = Schema {
        features: file.features,
        labels: file.label_space,
    };
    for (t, tree) in file.trees.iter().enumerate() {
        check_tree(tree, &schema).map_err(|m| ForestError::Corrupt(format!("tree {t}: {m}")))?;
    }
    Ok(Forest {
        trees: file.trees,
        schema,
        training: file.training,
    })
}

fn check_tree(node: &TreeNode, schema: &Schema) -> Result<(), String> {
    match node {
        TreeNode::Internal {
            feature, left, right, ..
        } => {
            if *feature >= schema.feature_count() {
                return Err(format!("feature index {feature} out of range"));
            }
            check_tree(left, schema)?;
            check_tree(right, schema)
        }
        TreeNode::Leaf {
            class_counts,
            majority,
        } => {
            if class_counts.len() != schema.class_count() || *majority >= schema.class_count() {
                return Err("leaf does not match the label space".into());
            }
            Ok(())
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Forest, ForestError> {
    from_model_bytes(&std::fs::read(path)?)
}
