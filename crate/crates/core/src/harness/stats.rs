//! Order statistics and bootstrap intervals over finite samples.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Finite values of `values`, sorted ascending.
pub fn sorted_finite(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
/// NaN for an empty sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Quantile of the finite values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted_finite(values), q)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    let v = sorted_finite(values);
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Percentile bootstrap interval for the median at confidence `level`.
pub fn bootstrap_median_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Interval {
    let data = sorted_finite(values);
    if data.is_empty() || resamples == 0 {
        return Interval {
            low: f64::NAN,
            high: f64::NAN,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; data.len()];
    let mut medians = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in sample.iter_mut() {
            *slot = data[rng.gen_range(0..data.len())];
        }
        sample.sort_by(f64::total_cmp);
        medians.push(quantile_sorted(&sample, 0.5));
    }
    medians.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Interval {
        low: quantile_sorted(&medians, tail),
        high: quantile_sorted(&medians, 1.0 - tail),
    }
}

/// Counts adjacent pairs that move against `increasing` and the largest such
/// move relative to the larger magnitude of the pair.
pub fn trend_violations(values: &[f64], increasing: bool) -> (usize, f64) {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for pair in values.windows(2) {
        let delta = if increasing { pair[0] - pair[1] } else { pair[1] - pair[0] };
        if delta > 0.0 {
            count += 1;
            let scale = pair[0].abs().max(pair[1].abs());
            worst = worst.max(if scale > 0.0 { delta / scale } else { f64::INFINITY });
        }
    }
    (count, worst)
}
