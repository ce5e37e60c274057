use serde::{Deserialize, Serialize};

use super::{BitString, LdpError};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomParams {
    /// Bit-string length `h`.
    pub bits: usize,
    /// Number of hash functions `m`.
    pub hashes: usize,
    pub hash_seed: u64,
}

impl Default for BloomParams {
    fn default() -> Self {
        // Seed 5 gives pairwise-distinct, full-rank encodings for up to 26
        // classes at h = 32, m = 2.
        BloomParams {
            bits: 32,
            hashes: 2,
            hash_seed: 5,
        }
    }
}

impl BloomParams {
    pub fn validate(&self) -> Result<(), LdpError> {
        if self.bits == 0 {
            return Err(LdpError::Bloom("h must be at least 1".into()));
        }
        if self.hashes == 0 || self.hashes > self.bits {
            return Err(LdpError::Bloom(format!(
                "m = {} must lie in [1, h = {}]",
                self.hashes, self.bits
            )));
        }
        Ok(())
    }

    /// Bit selected by hash function `hash_index` for `label`.
    pub fn position(&self, label: usize, hash_index: usize) -> usize {
        (derive_seed(self.hash_seed, &[hash_index as u64, label as u64]) % self.bits as u64) as usize
    }
}

pub fn bloom_encode(label: usize, params: &BloomParams) -> BitString {
    let mut bits = BitString::zeros(params.bits);
    for j in 0..params.hashes {
        bits.set(params.position(label, j), true);
    }
    bits
}

/// Column-major `h x L` design matrix: column `l` is the encoding of label `l`.
pub fn design_matrix(params: &BloomParams, classes: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|l| {
            bloom_encode(l, params)
                .iter()
                .map(|b| if b { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}
