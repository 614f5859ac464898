//! Per-packet and per-slot measurement primitives.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("transmission rate must be positive, got {0} bit/s")]
    ZeroRate(f64),
    #[error("dequeue slot {dequeue} precedes enqueue slot {enqueue}")]
    DequeueBeforeEnqueue { enqueue: u64, dequeue: u64 },
    #[error("jain index undefined: all values are zero")]
    AllZero,
    #[error("jain index needs non-negative finite values")]
    InvalidValue,
}

/// Queueing wait plus transmission time plus control-loop overhead, in ms.
pub fn packet_latency(
    enqueue_slot: u64,
    dequeue_slot: u64,
    bits: u64,
    rate_bps: f64,
    control_overhead_ms: f64,
    slot_duration_ms: f64,
) -> Result<f64, MetricError> {
    if dequeue_slot < enqueue_slot {
        return Err(MetricError::DequeueBeforeEnqueue { enqueue: enqueue_slot, dequeue: dequeue_slot });
    }
    if !(rate_bps > 0.0) {
        return Err(MetricError::ZeroRate(rate_bps));
    }
    let wait = (dequeue_slot - enqueue_slot) as f64 * slot_duration_ms;
    Ok(wait + bits as f64 / rate_bps * 1000.0 + control_overhead_ms)
}

/// Jain's fairness index (Σx)² / (n·Σx²).
pub fn jain(values: &[f64]) -> Result<f64, MetricError> {
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(MetricError::InvalidValue);
    }
    let sum: f64 = values.iter().sum();
    if sum <= 0.0 {
        return Err(MetricError::AllZero);
    }
    let sq: f64 = values.iter().map(|v| v * v).sum();
    Ok(sum * sum / (values.len() as f64 * sq))
}

/// Nearest-rank percentile of an ascending slice, `p` in (0, 100].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population variance.
pub fn variance(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64)
}
