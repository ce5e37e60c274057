use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BitString, LdpError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrParams {
    /// Probability that a permanent-layer bit keeps its Bloom value.
    pub pr: f64,
    /// P(instant bit = 1 | permanent bit = 1).
    pub xi: f64,
    /// P(instant bit = 1 | permanent bit = 0).
    pub zeta: f64,
}

impl Default for RrParams {
    fn default() -> Self {
        RrParams {
            pr: 0.5,
            xi: 0.75,
            zeta: 0.25,
        }
    }
}

impl RrParams {
    pub fn validate(&self) -> Result<(), LdpError> {
        for (name, v) in [("pr", self.pr), ("xi", self.xi), ("zeta", self.zeta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LdpError::Rr(format!("{name} = {v} is not a probability")));
            }
        }
        if self.xi <= self.zeta {
            return Err(LdpError::NonIdentifiable {
                xi: self.xi,
                zeta: self.zeta,
            });
        }
        if self.pr == 0.0 {
            return Err(LdpError::NoSignal);
        }
        Ok(())
    }
}

/// A sample's memoized permanent-response string. Built once per sample per
/// forest and reused by every count query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermanentEncoding(BitString);

impl Deref for PermanentEncoding {
    type Target = BitString;

    fn deref(&self) -> &BitString {
        &self.0
    }
}

impl PermanentEncoding {
    pub fn into_inner(self) -> BitString {
        self.0
    }
}

/// Keeps each bit with probability `pr`, otherwise replaces it with a fair
/// coin flip.
pub fn permanent_rr<R: Rng + ?Sized>(bits: &BitString, pr: f64, rng: &mut R) -> PermanentEncoding {
    let mut out = BitString::zeros(bits.len());
    for (i, b) in bits.iter().enumerate() {
        let v = if rng.gen::<f64>() < pr { b } else { rng.gen::<bool>() };
        out.set(i, v);
    }
    PermanentEncoding(out)
}

/// Fresh per-query response: bit `t` is 1 with probability `xi` if the
/// permanent bit is set, `zeta` otherwise.
pub fn instant_rr<R: Rng + ?Sized>(permanent: &BitString, xi: f64, zeta: f64, rng: &mut R) -> BitString {
    let mut out = BitString::zeros(permanent.len());
    for (i, b) in permanent.iter().enumerate() {
        out.set(i, rng.gen::<f64>() < if b { xi } else { zeta });
    }
    out
}

/// Per-bit sums over a set of instant-response strings, with the number of
/// contributing samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitCountVector {
    pub sums: Vec<u64>,
    pub n: u64,
}

impl BitCountVector {
    pub fn zero(bits: usize) -> Self {
        BitCountVector {
            sums: vec![0; bits],
            n: 0,
        }
    }

    pub fn bits(&self) -> usize {
        self.sums.len()
    }

    pub fn add(&mut self, instant: &BitString) {
        for t in instant.ones() {
            self.sums[t] += 1;
        }
        self.n += 1;
    }

    /// Draws an instant response for `permanent` and adds it, without
    /// materializing the string. Consumes the stream exactly like
    /// [`instant_rr`].
    pub fn add_instant<R: Rng + ?Sized>(&mut self, permanent: &BitString, rr: &RrParams, rng: &mut R) {
        for (t, b) in permanent.iter().enumerate() {
            if rng.gen::<f64>() < if b { rr.xi } else { rr.zeta } {
                self.sums[t] += 1;
            }
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &BitCountVector) -> Result<(), LdpError> {
        if other.bits() != self.bits() {
            return Err(LdpError::LengthMismatch(self.bits(), other.bits()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn is_consistent(&self) -> bool {
        self.sums.iter().all(|&s| s <= self.n)
    }
}

pub fn aggregate_counts(bits: usize, strings: &[BitString]) -> Result<BitCountVector, LdpError> {
    let mut acc = BitCountVector::zero(bits);
    for s in strings {
        if s.len() != bits {
            return Err(LdpError::LengthMismatch(bits, s.len()));
        }
        acc.add(s);
    }
    Ok(acc)
}

pub fn merge_counts(vectors: &[BitCountVector]) -> Result<BitCountVector, LdpError> {
    let first = vectors.first().ok_or(LdpError::NoSamples)?;
    let mut acc = BitCountVector::zero(first.bits());
    for v in vectors {
        acc.merge(v)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn ones(h: usize) -> BitString {
        BitString::from_bools(&vec![true; h])
    }

    #[test]
    fn degenerate_probabilities_are_identity() {
        let mut rng = stream(1, &[]);
        let b: BitString = "10110010".parse().unwrap();
        assert_eq!(*permanent_rr(&b, 1.0, &mut rng), b);
        assert_eq!(instant_rr(&b, 1.0, 0.0, &mut rng), b);
    }

    #[test]
    fn permanent_rr_pr0_is_fair_coin() {
        let mut rng = stream(2, &[]);
        let zero = BitString::zeros(1);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| permanent_rr(&zero, 0.0, &mut rng).get(0)).count();
        let mean = hits as f64 / trials as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn permanent_rr_half_keeps_one_with_prob_three_quarters() {
        let mut rng = stream(3, &[]);
        let one = ones(1);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| permanent_rr(&one, 0.5, &mut rng).get(0)).count();
        let p = hits as f64 / trials as f64;
        assert!((p - 0.75).abs() < 0.01, "p {p}");
    }

    #[test]
    fn instant_rr_zero_bit_rate() {
        let mut rng = stream(4, &[]);
        let zero = BitString::zeros(1);
        let trials = 100_000;
        let hits = (0..trials).filter(|_| instant_rr(&zero, 0.75, 0.25, &mut rng).get(0)).count();
        let p = hits as f64 / trials as f64;
        assert!((p - 0.25).abs() < 0.01, "p {p}");
    }

    #[test]
    fn instant_rr_half_half_carries_no_information() {
        // Empirical mutual information between input and output bit.
        let mut rng = stream(5, &[]);
        let mut joint = [[0f64; 2]; 2];
        let trials = 100_000;
        for k in 0..trials {
            let input = k % 2 == 0;
            let out = instant_rr(&BitString::from_bools(&[input]), 0.5, 0.5, &mut rng).get(0);
            joint[usize::from(input)][usize::from(out)] += 1.0 / trials as f64;
        }
        let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        let mi: f64 = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| joint[x][y] * (joint[x][y] / (px[x] * py[y])).ln())
            .sum();
        assert!(mi.abs() < 1e-3, "mi {mi}");
    }

    #[test]
    fn fused_add_matches_materialized() {
        let rr = RrParams::default();
        let perm: BitString = "0110100111".parse().unwrap();
        let mut a = stream(6, &[]);
        let mut b = stream(6, &[]);
        let strings: Vec<_> = (0..50).map(|_| instant_rr(&perm, rr.xi, rr.zeta, &mut a)).collect();
        let mut fused = BitCountVector::zero(10);
        for _ in 0..50 {
            fused.add_instant(&perm, &rr, &mut b);
        }
        assert_eq!(aggregate_counts(10, &strings).unwrap(), fused);
    }

    #[test]
    fn aggregation_examples() {
        let empty = aggregate_counts(4, &[]).unwrap();
        assert_eq!(empty, BitCountVector { sums: vec![0; 4], n: 0 });
        let v = aggregate_counts(4, &["1010".parse().unwrap(), "1100".parse().unwrap()]).unwrap();
        assert_eq!(v, BitCountVector { sums: vec![2, 1, 1, 0], n: 2 });
        let sat = aggregate_counts(3, &vec![ones(3); 7]).unwrap();
        assert_eq!(sat.sums, vec![7, 7, 7]);
        assert!(aggregate_counts(3, &[ones(4)]).is_err());
    }

    #[test]
    fn merge_examples() {
        let a = BitCountVector { sums: vec![1, 2, 3], n: 3 };
        let b = BitCountVector { sums: vec![5, 0, 4], n: 5 };
        assert_eq!(merge_counts(std::slice::from_ref(&a)).unwrap(), a);
        let ab = merge_counts(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.n, 8);
        assert_eq!(ab, merge_counts(&[b, a]).unwrap());
        let c = BitCountVector::zero(2);
        assert_eq!(merge_counts(&[ab, c]), Err(LdpError::LengthMismatch(3, 2)));
    }

    #[test]
    fn rr_validation() {
        assert!(RrParams::default().validate().is_ok());
        let bad = RrParams { pr: 0.5, xi: 0.25, zeta: 0.25 };
        assert!(matches!(bad.validate(), Err(LdpError::NonIdentifiable { .. })));
        let flat = RrParams { pr: 0.0, ..Default::default() };
        assert_eq!(flat.validate(), Err(LdpError::NoSignal));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vector(h: usize) -> impl Strategy<Value = BitCountVector> {
            (0u64..50).prop_flat_map(move |n| {
                proptest::collection::vec(0..=n, h).prop_map(move |sums| BitCountVector { sums, n })
            })
        }

        proptest! {
            #[test]
            fn merge_is_a_commutative_monoid(a in vector(6), b in vector(6), c in vector(6)) {
                let zero = BitCountVector::zero(6);
                prop_assert_eq!(merge_counts(&[a.clone(), zero]).unwrap(), a.clone());
                prop_assert_eq!(merge_counts(&[a.clone(), b.clone()]).unwrap(), merge_counts(&[b.clone(), a.clone()]).unwrap());
                let left = merge_counts(&[merge_counts(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
                let right = merge_counts(&[a.clone(), merge_counts(&[b.clone(), c.clone()]).unwrap()]).unwrap();
                prop_assert_eq!(&left, &right);
                prop_assert!(left.is_consistent());
            }
        }
    }
}
