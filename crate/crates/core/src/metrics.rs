//! Run-level metrics (ESR, FVR, EE), the normalized convergence residual and
//! bootstrap summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::BatteryTrace;
use crate::traffic::Flow;
use crate::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("total demand is zero")]
    ZeroDemand,
    #[error("total ISL energy is zero")]
    ZeroEnergy,
    #[error("residual reference coincides with the initial iterate")]
    DegenerateReference,
    #[error("need at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("length mismatch: {0}")]
    Shape(&'static str),
}

/// Fraction of (satellite, slot) pairs strictly above the floor.
pub fn esr<T: Real>(trace: &BatteryTrace<T>) -> Result<T, MetricsError> {
    if trace.charge.is_empty() {
        return Err(MetricsError::Empty("battery trace"));
    }
    let above = trace.charge.iter().filter(|&&c| c > trace.floor).count();
    Ok(T::from_usize_lossy(above) / T::from_usize_lossy(trace.charge.len()))
}

/// Shortfall ratio `Σ max(0, d − delivered) / Σ d`, with `delivered[ω]` the sink absorption
/// averaged over slots.
pub fn fvr<T: Real>(flows: &[Flow<T>], delivered: &[T]) -> Result<T, MetricsError> {
    if flows.is_empty() {
        return Err(MetricsError::Empty("flows"));
    }
    if delivered.len() != flows.len() {
        return Err(MetricsError::Shape("one delivered value per flow"));
    }
    let total: T = flows.iter().map(|f| f.demand).sum();
    if !(total > T::zero()) {
        return Err(MetricsError::ZeroDemand);
    }
    let short: T = flows
        .iter()
        .zip(delivered)
        .map(|(f, &d)| (f.demand - d.max(T::zero())).max(T::zero()))
        .sum();
    Ok((short / total).min(T::one()))
}

/// Per-flow sink absorption averaged over slots; `per_slot[t][ω]`.
pub fn mean_delivered<T: Real>(per_slot: &[Vec<T>], num_flows: usize) -> Result<Vec<T>, MetricsError> {
    if per_slot.is_empty() {
        return Err(MetricsError::Empty("slots"));
    }
    let mut acc = vec![T::zero(); num_flows];
    for row in per_slot {
        if row.len() != num_flows {
            return Err(MetricsError::Shape("one delivered value per flow in every slot"));
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = T::from_usize_lossy(per_slot.len());
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Delivered bits per ISL joule; `throughput[t]` in bits/s, `power[t]` in watts.
pub fn energy_efficiency<T: Real>(throughput: &[T], power: &[T], slot_duration: T) -> Result<T, MetricsError> {
    if throughput.len() != power.len() {
        return Err(MetricsError::Shape("throughput and power per slot"));
    }
    let bits: T = throughput.iter().map(|&r| r.max(T::zero()) * slot_duration).sum();
    let joules: T = power.iter().map(|&p| p * slot_duration).sum();
    if !(joules > T::zero()) {
        return Err(MetricsError::ZeroEnergy);
    }
    Ok(bits / joules)
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

/// First index `k` such that `‖R^{(j+1)} − R^{(j)}‖ < threshold` for `run` consecutive `j`
/// ending at `k`; `None` if the iterates never settle.
pub fn plateau_index<T: Real>(iterates: &[Vec<T>], threshold: T, run: usize) -> Option<usize> {
    let mut streak = 0;
    for k in 1..iterates.len() {
        if distance(&iterates[k], &iterates[k - 1]) < threshold {
            streak += 1;
            if streak >= run {
                return Some(k);
            }
        } else {
            streak = 0;
        }
    }
    None
}

/// `r^{(k)} = ‖R^{(k)} − R*‖ / ‖R^{(0)} − R*‖`.
pub fn residual_series<T: Real>(iterates: &[Vec<T>], reference: &[T]) -> Result<Vec<T>, MetricsError> {
    let first = iterates.first().ok_or(MetricsError::Empty("iterates"))?;
    let d0 = distance(first, reference);
    if !(d0 > T::zero()) {
        return Err(MetricsError::DegenerateReference);
    }
    Ok(iterates.iter().map(|r| distance(r, reference) / d0).collect())
}

/// Trailing moving average; the first `window − 1` entries average what is available.
pub fn moving_average<T: Real>(values: &[T], window: usize) -> Vec<T> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let s: T = values[lo..=i].iter().copied().sum();
            s / T::from_usize_lossy(i + 1 - lo)
        })
        .collect()
}

/// Least-squares slope of `ln y` on `ln x`, skipping nonpositive points.
pub fn loglog_slope<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> =
        x.iter().zip(y).filter(|(a, b)| **a > T::zero() && **b > T::zero()).map(|(a, b)| (a.ln(), b.ln())).collect();
    linear_fit(&pts).map(|(slope, _, _)| slope)
}

/// Ordinary least squares `(slope, intercept, R²)`; `None` with fewer than two distinct x.
pub fn linear_fit<T: Real>(pts: &[(T, T)]) -> Option<(T, T, T)> {
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > T::zero()) {
        return None;
    }
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: T = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > T::zero() { sxy * sxy / (sxx * syy) } else { T::one() };
    Some((slope, my - slope * mx, r2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary<T> {
    pub values: Vec<T>,
    pub mean: T,
    pub sem: T,
    pub ci_low: T,
    pub ci_high: T,
}

/// Mean, SEM (sample SD / √n) and a percentile-bootstrap 95% CI.
pub fn summarize<T: Real>(values: &[T], samples: usize, seed: u64) -> Result<Summary<T>, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewRuns(n));
    }
    let nt = T::from_usize_lossy(n);
    let mean = values.iter().copied().sum::<T>() / nt;
    let var = values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / (nt - T::one());
    let sem = (var / nt).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<T> = (0..samples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<T>() / nt)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pick = |q: f64| {
        let idx = (q * (means.len() - 1) as f64).round() as usize;
        means[idx.min(means.len() - 1)]
    };
    Ok(Summary { values: values.to_vec(), mean, sem, ci_low: pick(0.025), ci_high: pick(0.975) })
}
