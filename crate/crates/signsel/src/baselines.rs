//! Reference selectors the engines are measured against: the exhaustive
//! optimum, selected mapping restricted to sign flips, and the uncoded
//! pass-through that SLM degenerates to at a single candidate.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::ofdm::{Constellation, DataSymbolVector, SignVector, SignalParams};

/// Knobs of the baseline selectors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// SLM candidate count.
    pub s: usize,
    /// Cap on the subcarrier count accepted by the exhaustive search.
    pub max_exhaustive_n: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { s: 1000, max_exhaustive_n: 20 }
    }
}

/// Global minimum of the metric over all `2^N` sign vectors.
///
/// Candidates are indexed by a counter whose bit `k` decides `x_k` (`0` is
/// `+1`), and ties go to the lowest counter, so the all-plus vector wins any
/// tie it is part of. The walk itself is Gray-coded so each step updates one
/// carrier.
pub fn exhaustive_min(
    b: &DataSymbolVector,
    metric: Metric,
    params: SignalParams,
    constellation: &Constellation,
    max_n: usize,
) -> Result<(SignVector, f64)> {
    let n = b.len();
    if n != params.subcarriers() {
        return Err(Error::Argument(format!(
            "expected {} symbols, got {n}",
            params.subcarriers()
        )));
    }
    if n > max_n {
        return Err(Error::Capacity(format!(
            "exhaustive search over 2^{n} sign vectors exceeds the cap of n = {max_n}"
        )));
    }
    let ln = params.samples();
    let symbols = b.symbols();
    let power_scale = 1.0 / (constellation.sigma_b().powi(2) * n as f64);

    let root: Vec<Complex64> = (0..ln)
        .map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / ln as f64))
        .collect();
    let add_carrier = |acc: &mut [Complex64], coeff: Complex64, j: usize| {
        let mut idx = 0usize;
        for v in acc.iter_mut() {
            *v += coeff * root[idx];
            idx += j;
            if idx >= ln {
                idx -= ln;
            }
        }
    };

    let mut acc = vec![Complex64::new(0.0, 0.0); ln];
    for (k, &bk) in symbols.iter().enumerate() {
        add_carrier(&mut acc, bk, k);
    }
    let mut power = vec![0.0f64; ln];
    let mut signs = vec![1.0f64; n];
    let total = 1u64 << n;
    let mut best_value = f64::INFINITY;
    let mut best_counter = u64::MAX;
    let mut best_signs = vec![1i8; n];
    for c in 0..total {
        for (pw, &v) in power.iter_mut().zip(acc.iter()) {
            *pw = v.norm_sqr() * power_scale;
        }
        let value = metric.eval_power(&power);
        // Gray-code state corresponds to counter c ^ (c >> 1).
        let counter = c ^ (c >> 1);
        if value < best_value || (value == best_value && counter < best_counter) {
            best_value = value;
            best_counter = counter;
            for (dst, &s) in best_signs.iter_mut().zip(signs.iter()) {
                *dst = if s > 0.0 { 1 } else { -1 };
            }
        }
        if c + 1 < total {
            let flip = (c + 1).trailing_zeros() as usize;
            add_carrier(&mut acc, symbols[flip] * (-2.0 * signs[flip]), flip);
            signs[flip] = -signs[flip];
        }
    }
    Ok((SignVector::new(best_signs)?, best_value))
}

/// Selected mapping over `s` sign-vector candidates. The first candidate is
/// all `+1`, so `s = 1` reproduces the uncoded metric; the rest are i.i.d.
/// uniform. Ties keep the earliest candidate.
pub fn slm<R: Rng + ?Sized>(
    b: &DataSymbolVector,
    s: usize,
    metric: Metric,
    params: SignalParams,
    constellation: &Constellation,
    rng: &mut R,
) -> Result<(SignVector, f64)> {
    if s == 0 {
        return Err(Error::Argument("slm needs at least one candidate".into()));
    }
    let n = b.len();
    if n != params.subcarriers() {
        return Err(Error::Argument(format!(
            "expected {} symbols, got {n}",
            params.subcarriers()
        )));
    }
    let ln = params.samples();
    let symbols = b.symbols();
    let power_scale = 1.0 / (constellation.sigma_b().powi(2) * n as f64);
    let ifft = rustfft::FftPlanner::new().plan_fft_inverse(ln);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); ln];
    let mut power = vec![0.0f64; ln];

    let mut best_value = f64::INFINITY;
    let mut best_signs = vec![1i8; n];
    let mut candidate = vec![1i8; n];
    for c in 0..s {
        if c > 0 {
            for x in candidate.iter_mut() {
                *x = if rng.gen::<bool>() { 1 } else { -1 };
            }
        }
        buf.fill(Complex64::new(0.0, 0.0));
        for (k, (&bk, &x)) in symbols.iter().zip(candidate.iter()).enumerate() {
            buf[k] = bk * f64::from(x);
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        for (pw, &v) in power.iter_mut().zip(buf.iter()) {
            *pw = v.norm_sqr() * power_scale;
        }
        let value = metric.eval_power(&power);
        if value < best_value {
            best_value = value;
            best_signs.copy_from_slice(&candidate);
        }
    }
    Ok((SignVector::new(best_signs)?, best_value))
}
