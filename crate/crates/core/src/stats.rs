//! Order-insensitive aggregation of Monte Carlo samples.

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (zero for fewer than two samples).
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = compensated_sum(values) / count as f64;
        let std = if count > 1 {
            let dev: Vec<f64> = values.iter().map(|x| (x - mean).powi(2)).collect();
            (compensated_sum(&dev) / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_catastrophically_rounded_terms() {
        assert_eq!(compensated_sum(&[1.0, 1e100, 1.0, -1e100]), 2.0);
    }

    #[test]
    fn summary_of_small_samples() {
        let s = Summary::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[3.0]).std, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
    }

    proptest! {
        #[test]
        fn mean_ignores_sample_order(
            mut values in prop::collection::vec(1e-12f64..1e6, 1..300),
            seed in any::<u64>(),
        ) {
            let before = Summary::of(&values).mean;
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..values.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                values.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let after = Summary::of(&values).mean;
            prop_assert!((before - after).abs() <= 1e-12 * before.abs());
        }
    }
}
