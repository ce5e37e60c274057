use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyMode {
    #[default]
    None,
    Ldp,
    Gdp,
}

impl std::str::FromStr for PrivacyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PrivacyMode::None),
            "ldp" => Ok(PrivacyMode::Ldp),
            "gdp" => Ok(PrivacyMode::Gdp),
            other => Err(format!("unknown privacy mode `{other}` (expected none, ldp or gdp)")),
        }
    }
}

impl std::fmt::Display for PrivacyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrivacyMode::None => "none",
            PrivacyMode::Ldp => "ldp",
            PrivacyMode::Gdp => "gdp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon_node: f64,
    pub max_depth: usize,
    pub trees: usize,
    pub clients: usize,
    pub mode: PrivacyMode,
}

/// Budget of one tree of the given depth on one client: one `epsilon_node`
/// per split layer (same-layer nodes hold disjoint rows) plus one for the
/// leaf-label layer.
pub fn epsilon_for_depth(epsilon_node: f64, depth: usize) -> f64 {
    epsilon_node * (depth as f64 + 1.0)
}

/// Worst-case per-tree budget at the configured maximum depth.
pub fn epsilon_per_tree(budget: &PrivacyBudget) -> f64 {
    match budget.mode {
        PrivacyMode::None => f64::INFINITY,
        _ => epsilon_for_depth(budget.epsilon_node, budget.max_depth),
    }
}

/// Sequential composition over trees, parallel composition over clients:
/// `sum_p max_i eps[p][i]`.
pub fn epsilon_total(per_tree_per_client: &[Vec<f64>]) -> f64 {
    per_tree_per_client
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum()
}

impl PrivacyBudget {
    /// `P x O` matrix of realized per-tree budgets, given each tree's depth.
    /// Every client answers every query of every tree, so rows are constant.
    pub fn ledger(&self, tree_depths: &[usize]) -> Vec<Vec<f64>> {
        tree_depths
            .iter()
            .map(|&d| {
                let e = match self.mode {
                    PrivacyMode::None => f64::INFINITY,
                    _ => epsilon_for_depth(self.epsilon_node, d),
                };
                vec![e; self.clients]
            })
            .collect()
    }

    pub fn realized_total(&self, tree_depths: &[usize]) -> f64 {
        epsilon_total(&self.ledger(tree_depths))
    }
}
