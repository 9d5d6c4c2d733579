//! Small statistics helpers: streaming moments, binomial intervals and a
//! normality test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Streaming mean and covariance of fixed-length vectors (Welford), with
/// pairwise merging so partial results can be combined in any grouping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningCovariance {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major sum of centred cross products.
    m2: Vec<f64>,
}

impl RunningCovariance {
    pub fn new(dim: usize) -> Self {
        RunningCovariance {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n, "sample dimension mismatch");
        self.count += 1;
        let k = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for i in 0..n {
            self.mean[i] += before[i] / k;
        }
        for i in 0..n {
            if before[i] == 0.0 {
                continue;
            }
            let row = &mut self.m2[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += before[i] * (x[j] - self.mean[j]);
            }
        }
    }

    pub fn merge(&mut self, other: &RunningCovariance) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let tot = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..n {
            for j in 0..n {
                self.m2[i * n + j] += other.m2[i * n + j] + delta[i] * delta[j] * na * nb / tot;
            }
        }
        for i in 0..n {
            self.mean[i] += delta[i] * nb / tot;
        }
        self.count += other.count;
    }

    /// Unbiased sample covariance (divisor `count - 1`).
    pub fn covariance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.m2.len()];
        }
        let d = (self.count - 1) as f64;
        self.m2.iter().map(|v| v / d).collect()
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2[i * self.dim() + i] / (self.count - 1) as f64
    }
}

/// Sample mean and unbiased variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Wilson score interval for `k` successes out of `n` at confidence `1 - alpha`.
pub fn wilson_interval(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// 95% upper bound `3 / n` on a rate with zero observed events.
pub fn rule_of_three(n: u64) -> f64 {
    if n == 0 {
        1.0
    } else {
        (3.0 / n as f64).min(1.0)
    }
}

/// Jarque-Bera normality test; returns `(statistic, p-value)`.
pub fn jarque_bera(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 3 {
        return (0.0, 1.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    let jb = n / 6.0 * (skew * skew + kurt * kurt / 4.0);
    let p = 1.0 - ChiSquared::new(2.0).expect("two degrees of freedom").cdf(jb);
    (jb, p)
}

/// Deterministic seed for the `index`-th unit of a stream (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40), cut in 0usize..40) {
            let cut = cut.min(xs.len());
            let mut all = RunningCovariance::new(2);
            let mut a = RunningCovariance::new(2);
            let mut b = RunningCovariance::new(2);
            for (i, &(x, y)) in xs.iter().enumerate() {
                all.push(&[x, y]);
                if i < cut { a.push(&[x, y]) } else { b.push(&[x, y]) }
            }
            a.merge(&b);
            for (u, v) in a.covariance().iter().zip(all.covariance()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_samples_use_unbiased_divisor() {
        let mut rc = RunningCovariance::new(1);
        rc.push(&[1.0]);
        rc.push(&[3.0]);
        assert!((rc.variance(0) - 2.0).abs() < 1e-15);
        let mut eq = RunningCovariance::new(2);
        eq.push(&[1.0, 2.0]);
        eq.push(&[1.0, 2.0]);
        assert!(eq.covariance().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn wilson_known_value() {
        // 10 of 100 at 95%: (0.0552, 0.1744)
        let (lo, hi) = wilson_interval(10, 100, 0.05);
        assert!((lo - 0.05523).abs() < 1e-4 && (hi - 0.17437).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 50, 0.05);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn jarque_bera_flags_skew() {
        let normalish: Vec<f64> = (1..2000)
            .map(|i| Normal::standard().inverse_cdf(i as f64 / 2000.0))
            .collect();
        assert!(jarque_bera(&normalish).1 > 0.5);
        let skewed: Vec<f64> = (1..2000).map(|i| (i as f64 / 200.0).exp()).collect();
        assert!(jarque_bera(&skewed).1 < 1e-6);
    }
}
