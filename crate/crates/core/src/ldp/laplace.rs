use rand::distributions::{Distribution, Open01};
use rand::Rng;

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let u = u - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds Laplace(1 / epsilon_node) noise to every count (sensitivity 1).
/// Negative outputs are left for the consumer to clip.
pub fn laplace_perturb<R: Rng + ?Sized>(counts: &[u64], epsilon_node: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / epsilon_node;
    counts.iter().map(|&c| c as f64 + laplace_noise(scale, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn vanishing_noise() {
        let mut rng = stream(1, &[]);
        let out = laplace_perturb(&[3, 0, 17], 1e12, &mut rng);
        for (o, t) in out.iter().zip([3.0, 0.0, 17.0]) {
            assert!((o - t).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mean_and_variance() {
        let eps = 0.7;
        let mut rng = stream(2, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace_perturb(&[10], eps, &mut rng)[0] - 10.0).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expect_var = 2.0 / (eps * eps);
        let sigma = expect_var.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((var / expect_var - 1.0).abs() < 0.05, "var {var} vs {expect_var}");
    }
}
