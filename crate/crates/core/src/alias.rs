//! Walker/Vose alias table for O(1) sampling from a finite distribution.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Builds a table from nonnegative weights (not necessarily normalized).
    ///
    /// Panics if `weights` is empty or sums to zero.
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0, "alias table needs at least one outcome");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "alias table weights sum to zero");

        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| prob[i] < 1.0);

        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l;
            prob[l] -= 1.0 - prob[s];
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Probability mass the table assigns to each outcome (reconstructed).
    pub fn implied_probabilities(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut p = vec![0.0; self.prob.len()];
        for i in 0..self.prob.len() {
            p[i] += self.prob[i] / n;
            p[self.alias[i]] += (1.0 - self.prob[i]) / n;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_weights_never_alias() {
        let t = AliasTable::new(&[1.0; 5]);
        for p in t.implied_probabilities() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn reconstructs_input_law(w in prop::collection::vec(0.0f64..10.0, 1..40)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let total: f64 = w.iter().sum();
            let t = AliasTable::new(&w);
            for (p, wi) in t.implied_probabilities().iter().zip(&w) {
                prop_assert!((p - wi / total).abs() < 1e-12);
            }
        }
    }
}
