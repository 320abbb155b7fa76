//! Objective functions evaluated on one oversampled OFDM symbol: PAPR, crest
//! factor, the sum-exp surrogate and the symbol raw cubic metric.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonnegative metric value with a decibel view.
///
/// The decibel form is `10 log10(linear)` and is meaningful for the
/// power-like metrics (PAPR, SRCM, RCM); it is undefined (`-inf`) at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    linear: f64,
}

impl MetricValue {
    pub fn from_linear(linear: f64) -> Self {
        debug_assert!(linear >= 0.0);
        Self { linear }
    }

    pub fn linear(self) -> f64 {
        self.linear
    }

    pub fn db(self) -> f64 {
        10.0 * self.linear.log10()
    }
}

/// Peak instantaneous power `max_n |s(n)|^2`.
pub fn papr(signal: &[Complex64]) -> Result<MetricValue> {
    if signal.is_empty() {
        return Err(Error::Argument("papr of an empty signal".into()));
    }
    let peak = signal.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    Ok(MetricValue::from_linear(peak))
}

/// Crest factor, the square root of PAPR.
pub fn crest_factor(signal: &[Complex64]) -> Result<MetricValue> {
    Ok(MetricValue::from_linear(papr(signal)?.linear().sqrt()))
}

/// `ln` of the sum-exp metric, `ln sum_n exp(kappa |s(n)|^2)`.
///
/// The sum itself overflows for realistic `kappa` and symbol sizes, so only
/// the logarithm is exposed; `ln` is monotone, which preserves every
/// comparison the selection engine makes. The sum is stabilized by shifting
/// out the largest exponent.
pub fn log_sum_exp_metric(signal: &[Complex64], kappa: f64) -> Result<f64> {
    if kappa < 1.0 {
        return Err(Error::Config(format!("kappa must be at least 1, got {kappa}")));
    }
    if signal.is_empty() {
        return Err(Error::Argument("sum-exp of an empty signal".into()));
    }
    let peak = signal.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    let sum: f64 = signal
        .iter()
        .map(|s| (kappa * (s.norm_sqr() - peak)).exp())
        .sum();
    Ok(kappa * peak + sum.ln())
}

/// Symbol raw cubic metric `(1/LN) sum_n |s(n)|^6`.
pub fn srcm(signal: &[Complex64]) -> Result<MetricValue> {
    if signal.is_empty() {
        return Err(Error::Argument("srcm of an empty signal".into()));
    }
    let sum: f64 = signal
        .iter()
        .map(|s| {
            let p = s.norm_sqr();
            p * p * p
        })
        .sum();
    Ok(MetricValue::from_linear(sum / signal.len() as f64))
}

/// Raw cubic metric of a symbol stream: the arithmetic mean of per-symbol
/// SRCM values in linear scale.
pub fn rcm(srcm_values: &[f64]) -> Result<MetricValue> {
    if srcm_values.is_empty() {
        return Err(Error::Argument("rcm of an empty list".into()));
    }
    let mean = srcm_values.iter().sum::<f64>() / srcm_values.len() as f64;
    Ok(MetricValue::from_linear(mean))
}

/// A selectable objective for the engines and baselines.
///
/// Every metric here depends on the signal through `|s(n)|^2` only, so the
/// common entry point is [`Metric::eval_power`] over squared magnitudes.
/// `SumExp` evaluates in the log domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Papr,
    CrestFactor,
    SumExp { kappa: f64 },
    Srcm,
}

impl Metric {
    /// Evaluate over precomputed squared magnitudes (non-empty).
    pub fn eval_power(self, power: &[f64]) -> f64 {
        debug_assert!(!power.is_empty());
        match self {
            Metric::Papr => power.iter().copied().fold(0.0, f64::max),
            Metric::CrestFactor => power.iter().copied().fold(0.0, f64::max).sqrt(),
            Metric::SumExp { kappa } => {
                let peak = power.iter().copied().fold(0.0, f64::max);
                let sum: f64 = power.iter().map(|&p| (kappa * (p - peak)).exp()).sum();
                kappa * peak + sum.ln()
            }
            Metric::Srcm => {
                power.iter().map(|&p| p * p * p).sum::<f64>() / power.len() as f64
            }
        }
    }

    /// Evaluate on complex samples.
    pub fn eval(self, signal: &[Complex64]) -> f64 {
        let power: Vec<f64> = signal.iter().map(|s| s.norm_sqr()).collect();
        self.eval_power(&power)
    }
}
