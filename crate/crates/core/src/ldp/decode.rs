//! Master-side recovery of class counts from merged bit sums.
//!
//! Composing the two response layers, a sample whose Bloom bit `t` is set
//! reports 1 with probability
//!
//! ```text
//! q_eff = xi * (1 + pr) / 2 + zeta * (1 - pr) / 2
//! ```
//!
//! since the permanent bit is 1 with probability `pr + (1 - pr) / 2`; a sample
//! whose Bloom bit is clear reports 1 with probability
//!
//! ```text
//! p_eff = xi * (1 - pr) / 2 + zeta * (1 + pr) / 2.
//! ```
//!
//! With `c_t` samples having bit `t` set out of `n`, `E[Sum_t] = c_t q_eff +
//! (n - c_t) p_eff`, so `y_t = (Sum_t - n p_eff) / (q_eff - p_eff)` is an
//! unbiased estimate of `c_t`. Note `q_eff - p_eff = pr (xi - zeta)`.
//!
//! Class counts `c` then satisfy `y ~ M c` where column `l` of `M` is the
//! Bloom encoding of class `l`; they are fitted by non-negative lasso.

use serde::{Deserialize, Serialize};

use super::{design_matrix, BitCountVector, BloomParams, LdpError, RrParams};

/// Default L1 weight is this multiple of the merged sample count.
pub const DEFAULT_LAMBDA_PER_SAMPLE: f64 = 0.01;

const TOLERANCE: f64 = 1e-6;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCountEstimate {
    pub counts: Vec<f64>,
    pub n: u64,
}

impl LabelCountEstimate {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn proportions(&self) -> Vec<f64> {
        let t = self.total();
        self.counts
            .iter()
            .map(|&c| if t > 0.0 { c / t } else { 0.0 })
            .collect()
    }
}

/// Unbiased per-bit estimates of how many samples have each Bloom bit set.
pub fn bias_correct(merged: &BitCountVector, rr: &RrParams) -> Result<Vec<f64>, LdpError> {
    if rr.xi <= rr.zeta {
        return Err(LdpError::NonIdentifiable { xi: rr.xi, zeta: rr.zeta });
    }
    let q_eff = rr.xi * (1.0 + rr.pr) / 2.0 + rr.zeta * (1.0 - rr.pr) / 2.0;
    let p_eff = rr.xi * (1.0 - rr.pr) / 2.0 + rr.zeta * (1.0 + rr.pr) / 2.0;
    let gap = q_eff - p_eff;
    if gap <= 0.0 {
        return Err(LdpError::NoSignal);
    }
    let n = merged.n as f64;
    Ok(merged.sums.iter().map(|&s| (s as f64 - n * p_eff) / gap).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent for
/// `min ||target - sum_l coef[l] * columns[l]||^2 + lambda * ||coef||_1`
/// subject to `coef >= 0`.
pub fn nonneg_lasso(columns: &[Vec<f64>], target: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> LassoFit {
    let sq_norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut coef = vec![0.0; columns.len()];
    let mut residual = target.to_vec();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for (l, col) in columns.iter().enumerate() {
            if sq_norms[l] == 0.0 {
                continue;
            }
            let rho: f64 = col.iter().zip(&residual).map(|(a, r)| a * r).sum::<f64>() + sq_norms[l] * coef[l];
            let next = ((rho - lambda / 2.0) / sq_norms[l]).max(0.0);
            let delta = next - coef[l];
            if delta != 0.0 {
                for (r, a) in residual.iter_mut().zip(col) {
                    *r -= delta * a;
                }
                coef[l] = next;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            return LassoFit {
                coef,
                sweeps,
                converged: true,
            };
        }
    }
    LassoFit {
        coef,
        sweeps,
        converged: false,
    }
}

/// Numerical rank of the column set, by elimination on the Gram matrix.
pub(crate) fn column_rank(columns: &[Vec<f64>]) -> usize {
    let k = columns.len();
    let mut gram: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let scale = gram.iter().enumerate().map(|(i, r)| r[i]).fold(0.0, f64::max).max(1.0);
    let mut rank = 0;
    for col in 0..k {
        let pivot = (rank..k).max_by(|&a, &b| gram[a][col].abs().total_cmp(&gram[b][col].abs()));
        let Some(p) = pivot else { break };
        if gram[p][col].abs() <= 1e-9 * scale {
            continue;
        }
        gram.swap(rank, p);
        for r in 0..k {
            if r != rank {
                let f = gram[r][col] / gram[rank][col];
                for c in col..k {
                    gram[r][c] -= f * gram[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn decode_counts(
    merged: &BitCountVector,
    bloom: &BloomParams,
    rr: &RrParams,
    classes: usize,
    reg_lambda: f64,
) -> Result<LabelCountEstimate, LdpError> {
    if merged.n == 0 {
        return Err(LdpError::NoSamples);
    }
    if merged.bits() != bloom.bits {
        return Err(LdpError::LengthMismatch(bloom.bits, merged.bits()));
    }
    let y = bias_correct(merged, rr)?;
    let design = design_matrix(bloom, classes);
    if reg_lambda <= 0.0 {
        let rank = column_rank(&design);
        if rank < classes {
            return Err(LdpError::RankDeficient { rank, classes });
        }
    }
    let fit = nonneg_lasso(&design, &y, reg_lambda.max(0.0), TOLERANCE, MAX_SWEEPS);
    if !fit.converged {
        log::debug!("count decoding stopped after {} sweeps without converging", fit.sweeps);
    }
    let n = merged.n as f64;
    Ok(LabelCountEstimate {
        counts: fit.coef.into_iter().map(|c| c.clamp(0.0, n)).collect(),
        n: merged.n,
    })
}
