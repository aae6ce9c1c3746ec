//! Summary statistics shared by the estimators.

use serde::{Deserialize, Serialize};

/// A mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Sample mean and `sd / sqrt(n)` of independent samples.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_err: f64::NAN,
            };
        }
        // shifted by the first sample: constant input gives an exact mean
        let shift = xs[0];
        let deviations: Vec<f64> = xs.iter().map(|x| x - shift).collect();
        let mean = shift + self::mean(&deviations);
        let std_err = if n > 1 {
            (sample_variance(xs, mean) / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_err }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance around a known mean estimate.
pub fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Recursive pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Batch-means estimate of the mean of a correlated series.
pub fn batch_means(xs: &[f64], n_batches: usize) -> Estimate {
    let n_batches = n_batches.clamp(1, xs.len().max(1));
    let size = xs.len() / n_batches;
    if size == 0 {
        return Estimate::from_samples(xs);
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(n_batches).map(mean).collect();
    Estimate::from_samples(&means)
}

/// Number of batches used for a series of `n_samples`: `floor(sqrt(n))`,
/// clamped to `[20, 200]` and never more than the sample count.
pub fn batch_count(n_samples: usize) -> usize {
    ((n_samples as f64).sqrt() as usize)
        .clamp(20, 200)
        .min(n_samples.max(1))
}

/// Ordinary least-squares fit `y = a + b x`; returns `(b, se(b))`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

/// Slope of `ln y` against `ln x`; undefined when any `y <= 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if y.iter().chain(x).any(|&v| v.is_nan() || v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// `log sum_k exp(x_k)` with max-shift.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}
