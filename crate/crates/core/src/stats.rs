//! Single-pass cross-replica accumulators.

use serde::{Deserialize, Serialize};

/// Welford accumulator; `merge` uses the Chan et al. pairwise update so that
/// partial results from parallel workers combine associatively (up to
/// floating-point reassociation).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl ReplicaStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = Self::new();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &ReplicaStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Standard error of the sample variance, from the fourth-moment-free
    /// normal approximation `var * sqrt(2 / (n - 1))`.
    pub fn variance_se_normal(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.variance() * (2.0 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Sample variance together with a distribution-free standard error
/// (uses the empirical fourth central moment).
pub fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.len() < 4 {
        return (ReplicaStats::from_slice(values).variance(), f64::INFINITY);
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Sample covariance of paired values with the delta-method standard error.
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let s = ReplicaStats::from_slice(&prods);
    (s.mean() * n / (n - 1.0), s.se())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_sample() {
        let s = ReplicaStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.count(), 4);
        assert!((s.mean() - 2.5).abs() < 1e-15);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.se() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_and_singleton() {
        let s = ReplicaStats::new();
        assert_eq!(s.variance(), 0.0);
        assert_eq!(s.se(), 0.0);
        let s = ReplicaStats::from_slice(&[3.0]);
        assert_eq!(s.variance(), 0.0);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(v in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(v.len());
            let whole = ReplicaStats::from_slice(&v);
            let mut left = ReplicaStats::from_slice(&v[..cut]);
            left.merge(&ReplicaStats::from_slice(&v[cut..]));
            prop_assert_eq!(left.count(), whole.count());
            prop_assert!((left.mean() - whole.mean()).abs() < 1e-9);
            prop_assert!((left.variance() - whole.variance()).abs() < 1e-6 * (1.0 + whole.variance()));
            prop_assert!(left.variance() >= 0.0);
        }
    }
}
