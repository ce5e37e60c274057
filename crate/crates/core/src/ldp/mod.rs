//! Label-count privacy layers.
//!
//! Each sample's label is mapped once to a Bloom bit string and passed through
//! a permanent randomized response that is memoized for the whole forest. Every
//! count query then applies a fresh instant randomized response on top of the
//! memoized string, and clients release only per-bit sums. The master inverts
//! both response layers per bit and recovers class counts by non-negative
//! L1-penalized least squares against the Bloom design matrix.
//!
//! The accountant implements the two composition rules used for reporting:
//! one `epsilon_node` per tree layer plus one for the leaf-label layer, summed
//! over trees and maximized over clients.

mod accountant;
mod bits;
mod bloom;
mod decode;
mod laplace;
mod rr;

pub use accountant::{epsilon_for_depth, epsilon_per_tree, epsilon_total, PrivacyBudget, PrivacyMode};
pub use bits::BitString;
pub use bloom::{bloom_encode, design_matrix, BloomParams};
pub use decode::{bias_correct, decode_counts, nonneg_lasso, LabelCountEstimate, LassoFit, DEFAULT_LAMBDA_PER_SAMPLE};
pub use laplace::{laplace_noise, laplace_perturb};
pub use rr::{aggregate_counts, instant_rr, merge_counts, permanent_rr, BitCountVector, PermanentEncoding, RrParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error("invalid bloom parameters: {0}")]
    Bloom(String),
    #[error("invalid randomized-response parameters: {0}")]
    Rr(String),
    #[error("bit-count vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("xi ({xi}) must exceed zeta ({zeta}) for counts to be identifiable")]
    NonIdentifiable { xi: f64, zeta: f64 },
    #[error("permanent keep probability pr = 0 erases all label information")]
    NoSignal,
    #[error("bloom design matrix has rank {rank} < {classes} classes; set reg_lambda > 0")]
    RankDeficient { rank: usize, classes: usize },
    #[error("cannot decode an aggregate over zero samples")]
    NoSamples,
    #[error("epsilon_node must be positive, got {0}")]
    Epsilon(f64),
}
