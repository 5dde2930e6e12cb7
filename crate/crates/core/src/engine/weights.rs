use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// `ln Σ exp(x_i)`, negative infinity when every entry is.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of log-weights with max subtraction; negative infinity maps to 0.
pub fn normalize_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let m = log_weights
        .iter()
        .copied()
        .filter(|w| w.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::AllParticlesDead);
    }
    let unnorm: Vec<f64> = log_weights
        .iter()
        .map(|w| if w.is_finite() { (w - m).exp() } else { 0.0 })
        .collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|w| w / total).collect())
}

/// `1 / Σ w²`, computed as `(Σ v)² / Σ v²` with `v = w / max w` so equal
/// weights give exactly N.
pub fn effective_sample_size(normalized: &[f64]) -> f64 {
    let max = normalized.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let (s, s2) = normalized.iter().fold((0.0, 0.0), |(s, s2), w| {
        let v = w / max;
        (s + v, s2 + v * v)
    });
    s * s / s2
}

/// Ancestor indices drawn from normalized weights.
pub fn resample_indices(
    weights: &[f64],
    scheme: ResampleScheme,
    rng: &mut StreamRng,
) -> Vec<usize> {
    let n = weights.len();
    match scheme {
        ResampleScheme::Multinomial => {
            let cum: Vec<f64> = weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w.max(0.0);
                    Some(*acc)
                })
                .collect();
            let total = *cum.last().expect("resampling needs particles");
            assert!(total > 0.0, "resampling needs positive weight");
            let last = weights
                .iter()
                .rposition(|w| *w > 0.0)
                .expect("positive weight exists");
            (0..n)
                .map(|_| {
                    let u = rng.next_f64() * total;
                    cum.partition_point(|&c| c <= u).min(last)
                })
                .collect()
        }
        ResampleScheme::Systematic => {
            let u0 = rng.next_f64();
            let mut out = Vec::with_capacity(n);
            let mut cum = 0.0;
            let mut j = 0;
            for i in 0..n {
                let u = (i as f64 + u0) / n as f64;
                while j < n - 1 && (cum + weights[j] <= u || weights[j] == 0.0) {
                    cum += weights[j];
                    j += 1;
                }
                out.push(j);
            }
            out
        }
    }
}

/// Replace `items` by ancestors drawn from `weights` and return the shared
/// post-resample log-weight, `ln(mean of exp(log_weights))`.
pub fn resample<T: Clone>(
    items: &[T],
    log_weights: &[f64],
    scheme: ResampleScheme,
    rng: &mut StreamRng,
) -> Result<(Vec<T>, Vec<usize>, f64)> {
    let w = normalize_weights(log_weights)?;
    let ancestors = resample_indices(&w, scheme, rng);
    let level = log_sum_exp(log_weights) - (log_weights.len() as f64).ln();
    Ok((
        ancestors.iter().map(|&a| items[a].clone()).collect(),
        ancestors,
        level,
    ))
}
