use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("percentile must lie in [0, 100]")]
    BadPercentile,
}

/// Nearest-rank percentile: the sorted sample at 1-based rank
/// `ceil(p/100 * n)`, clamped to rank 1.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(StatsError::BadPercentile);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Standard error of the mean with the n-1 sample variance.
pub fn sem(samples: &[f64]) -> Result<f64, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    let m = mean(samples)?;
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(var.sqrt() / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0), Ok(9.0));
        assert_eq!(percentile(&v, 100.0), Ok(10.0));
        assert_eq!(percentile(&v, 0.0), Ok(1.0));
        assert_eq!(percentile(&[5.0], 37.0), Ok(5.0));
        assert_eq!(percentile(&[], 50.0), Err(StatsError::EmptySamples));
    }

    #[test]
    fn median_of_uniform_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let m = percentile(&v, 50.0).unwrap();
        assert!((m - 0.5).abs() < 0.01, "{m}");
    }

    #[test]
    fn sem_cases() {
        assert_eq!(sem(&[3.0; 5]), Ok(0.0));
        let s = sem(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((s - 2.5f64.sqrt() / 5f64.sqrt()).abs() < 1e-12);
        assert!((s - (2.5f64 / 5.0).sqrt()).abs() < 1e-12);
        assert_eq!(sem(&[1.0]), Err(StatsError::TooFewSamples(1)));
    }
}
