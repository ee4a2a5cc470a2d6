//! Small helpers for Monte Carlo summaries.

/// A point estimate with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Estimate a probability from a binomial count.
    pub fn binomial(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self { value: f64::NAN, std_error: f64::NAN };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        Self { value: p, std_error: (p * (1.0 - p) / n).sqrt() }
    }

    /// Sample mean with standard error of the mean.
    pub fn mean(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self { value: f64::NAN, std_error: f64::NAN };
        }
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { value: mean, std_error: f64::NAN };
        }
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { value: mean, std_error: (var / n).sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_estimate() {
        let e = Estimate::binomial(25, 100);
        assert_eq!(e.value, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_estimate() {
        let e = Estimate::mean(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        // Sample variance 5/3, SE = sqrt(5/12).
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_yield_nan() {
        assert!(Estimate::binomial(0, 0).value.is_nan());
        assert!(Estimate::mean(&[]).value.is_nan());
        assert!(Estimate::mean(&[1.0]).std_error.is_nan());
    }
}
