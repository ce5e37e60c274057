use super::ForestError;

/// Gini impurity `1 - sum (c_k / n)^2`; zero for an empty node.
pub fn gini(counts: &[f64]) -> Result<f64, ForestError> {
    if let Some(&c) = counts.iter().find(|&&c| c < 0.0 || c.is_nan()) {
        return Err(ForestError::NegativeCount(c));
    }
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - counts.iter().map(|&c| (c / n) * (c / n)).sum::<f64>())
}

/// Impurity decrease of splitting `parent` into `left` and `right`. Zero when
/// either side is empty.
pub fn gini_gain(parent: &[f64], left: &[f64], right: &[f64]) -> Result<f64, ForestError> {
    let n: f64 = parent.iter().sum();
    let n_left: f64 = left.iter().sum();
    let n_right: f64 = right.iter().sum();
    if n <= 0.0 || n_left <= 0.0 || n_right <= 0.0 {
        gini(parent)?;
        gini(left)?;
        gini(right)?;
        return Ok(0.0);
    }
    Ok(gini(parent)? - (n_left / n) * gini(left)? - (n_right / n) * gini(right)?)
}

/// Picks the candidate with the largest gain. Negative or NaN gains count as
/// zero; ties go to the lowest feature index.
pub fn best_split(scored: &[(usize, f64, f64)]) -> Result<(usize, f64), ForestError> {
    let clip = |g: f64| if g > 0.0 { g } else { 0.0 };
    scored
        .iter()
        .copied()
        .reduce(|best, cand| {
            let (bg, cg) = (clip(best.2), clip(cand.2));
            if cg > bg || (cg == bg && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .map(|(f, t, _)| (f, t))
        .ok_or(ForestError::NoCandidates)
}

/// Index of the largest count, lowest index on ties.
pub fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[10.0, 0.0]).unwrap(), 0.0);
        assert!(close(gini(&[5.0, 5.0]).unwrap(), 0.5));
        assert!(close(gini(&[2.0, 3.0, 5.0]).unwrap(), 0.62));
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(gini(&[1.0, -1.0]), Err(ForestError::NegativeCount(_))));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(gini_gain(&[5.0, 5.0], &[5.0, 5.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(close(gini_gain(&[5.0, 5.0], &[5.0, 0.0], &[0.0, 5.0]).unwrap(), 0.5));
        assert!(close(gini_gain(&[6.0, 4.0], &[4.0, 1.0], &[2.0, 3.0]).unwrap(), 0.08));
    }

    #[test]
    fn best_split_examples() {
        assert_eq!(best_split(&[(3, 1.0, 0.1), (7, 2.0, 0.4)]).unwrap(), (7, 2.0));
        assert_eq!(best_split(&[(5, 1.0, 0.3), (2, 2.0, 0.3)]).unwrap(), (2, 2.0));
        assert_eq!(best_split(&[(4, 0.5, -0.2)]).unwrap(), (4, 0.5));
        assert_eq!(best_split(&[(4, 0.5, -0.2), (9, 1.5, 0.0)]).unwrap(), (4, 0.5));
        assert!(matches!(best_split(&[]), Err(ForestError::NoCandidates)));
    }

    #[test]
    fn majority_breaks_ties_low() {
        assert_eq!(majority(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(majority(&[0.0, 0.0]), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn counts(l: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0u32..100, l).prop_map(|v| v.into_iter().map(f64::from).collect())
        }

        proptest! {
            #[test]
            fn gini_bounds(c in (2usize..8).prop_flat_map(counts)) {
                let g = gini(&c).unwrap();
                let l = c.len() as f64;
                prop_assert!(g >= -1e-12 && g <= 1.0 - 1.0 / l + 1e-12);
            }

            #[test]
            fn exact_gain_is_nonnegative(left in counts(3), right in counts(3)) {
                let parent: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
                prop_assert!(gini_gain(&parent, &left, &right).unwrap() >= -1e-12);
            }

            #[test]
            fn argmax_invariant_under_rescaling(
                gains in proptest::collection::vec(-1.0f64..1.0, 1..10),
                scale in 0.01f64..100.0,
            ) {
                let scored: Vec<_> = gains.iter().enumerate().map(|(i, &g)| (i, i as f64, g)).collect();
                let scaled: Vec<_> = scored.iter().map(|&(f, t, g)| (f, t, g * scale)).collect();
                prop_assert_eq!(best_split(&scored).unwrap(), best_split(&scaled).unwrap());
            }
        }
    }
}
