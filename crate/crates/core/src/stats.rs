//! Batch-means error bars and a one-sample Kolmogorov–Smirnov test.

use serde::Serialize;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors. A zero error
    /// degenerates to an exact comparison up to `abs_floor`.
    pub fn within(&self, target: f64, k: f64, abs_floor: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + abs_floor
    }
}

/// Mean of `y` with a batch-means standard error. Batch `b` holds the
/// items with index `i ≡ b (mod batches)`, so the split does not depend
/// on how the items were computed.
pub fn batch_means(y: &[f64], batches: usize) -> Estimate {
    let n = y.len();
    if n == 0 {
        return Estimate { value: 0.0, std_error: 0.0 };
    }
    let value = y.iter().sum::<f64>() / n as f64;
    let b = batches.clamp(1, n);
    if b < 2 {
        return Estimate { value, std_error: 0.0 };
    }
    let mut sums = vec![0.0; b];
    let mut counts = vec![0usize; b];
    for (i, v) in y.iter().enumerate() {
        sums[i % b] += v;
        counts[i % b] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let mbar = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mbar).powi(2)).sum::<f64>() / (b - 1) as f64;
    Estimate { value, std_error: (var / b as f64).sqrt() }
}

/// Two-sided KS statistic `sup |F_n − F|` of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples, with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
