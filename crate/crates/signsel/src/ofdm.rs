//! Constellations, data-symbol generation, bit mapping and oversampled
//! discrete-time OFDM symbol synthesis.
//!
//! One OFDM symbol carries `N` complex data symbols and is observed through
//! `LN` time-domain samples
//!
//! ```text
//! s(n) = 1/(sigma_b sqrt(N)) * sum_k b_k x_k exp(i 2 pi k n / (LN))
//! ```
//!
//! where `x` is the +-1 sign vector chosen by the selection engine. The
//! normalization keeps the mean sample power at one for unit-energy symbol
//! vectors, so peak metrics read directly as peak-to-average ratios.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for matching a received value against a constellation point.
const POINT_MATCH_TOL: f64 = 1e-6;

/// Subcarrier count `N` and oversampling factor `L` of one OFDM symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalParams {
    n: usize,
    l: usize,
}

impl SignalParams {
    /// `n >= 1` subcarriers, `l >= 2` samples per subcarrier spacing.
    /// `l = 1` (Nyquist-rate sampling) misses peaks between sample points,
    /// so it is rejected.
    pub fn new(n: usize, l: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("subcarrier count must be at least 1".into()));
        }
        if l < 2 {
            return Err(Error::Argument(format!(
                "oversampling factor must be at least 2, got {l}"
            )));
        }
        Ok(Self { n, l })
    }

    pub fn subcarriers(self) -> usize {
        self.n
    }

    pub fn oversampling(self) -> usize {
        self.l
    }

    /// Number of time-domain samples per symbol, `LN`.
    pub fn samples(self) -> usize {
        self.n * self.l
    }
}

/// Supported symbol alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Qpsk,
    Qam16,
    Qam64,
}

impl ConstellationKind {
    /// Parse a user-facing name. Unknown names are a configuration error.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Self::Qpsk),
            "qam16" | "16qam" | "16-qam" => Ok(Self::Qam16),
            "qam64" | "64qam" | "64-qam" => Ok(Self::Qam64),
            other => Err(Error::Config(format!("unsupported constellation '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Qpsk => "qpsk",
            Self::Qam16 => "qam16",
            Self::Qam64 => "qam64",
        }
    }
}

/// A symmetric symbol alphabet together with the half-set used for the
/// reduced bit mapping.
///
/// `points` is the full alphabet; for every point `y` the negation `-y` is
/// also a point. `half_set` keeps exactly one of each `{y, -y}` pair, fixed
/// by convention to the right half plane (ties on the imaginary axis resolve
/// to positive imaginary part). Both lists are sorted by `(re, im)` so bit
/// mappings are reproducible.
#[derive(Debug, Clone)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
    half_set: Vec<Complex64>,
    sigma_b: f64,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let (points, sigma_b) = match kind {
            ConstellationKind::Qpsk => {
                // Unit-power QPSK: (+-1 +-i)/sqrt(2).
                let s = 1.0 / 2f64.sqrt();
                let pts: Vec<Complex64> = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                    .iter()
                    .map(|&(re, im)| Complex64::new(re * s, im * s))
                    .collect();
                (pts, 1.0)
            }
            ConstellationKind::Qam16 => (square_grid(&[-3.0, -1.0, 1.0, 3.0]), 10f64.sqrt()),
            ConstellationKind::Qam64 => (
                square_grid(&[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]),
                42f64.sqrt(),
            ),
        };
        let mut points = points;
        points.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        let mut half_set: Vec<Complex64> = points
            .iter()
            .copied()
            .filter(|p| p.re > 0.0 || (p.re == 0.0 && p.im > 0.0))
            .collect();
        half_set.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        Self { kind, points, half_set, sigma_b }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    /// The full alphabet, sorted by `(re, im)`.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// One representative of each `{y, -y}` pair, sorted by `(re, im)`.
    pub fn half_set(&self) -> &[Complex64] {
        &self.half_set
    }

    /// RMS symbol magnitude, computed analytically per alphabet.
    pub fn sigma_b(&self) -> f64 {
        self.sigma_b
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Bits carried by a full-alphabet symbol, `log2 |M|`.
    pub fn bits_per_symbol(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    /// Largest symbol magnitude, used by the concentration bounds.
    pub fn max_magnitude(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Index of the nearest point in `list`, or an error when nothing is
    /// within tolerance.
    fn match_point(list: &[Complex64], value: Complex64) -> Result<usize> {
        let (idx, dist) = list
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - value).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("constellation is never empty");
        if dist <= POINT_MATCH_TOL {
            Ok(idx)
        } else {
            Err(Error::Decode(format!(
                "value {value} does not match any constellation point"
            )))
        }
    }
}

fn square_grid(levels: &[f64]) -> Vec<Complex64> {
    levels
        .iter()
        .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
        .collect()
}

/// Convenience wrapper matching the constellation-building operation.
pub fn build_constellation(kind: ConstellationKind) -> Constellation {
    Constellation::new(kind)
}

/// The `N` complex data symbols of one OFDM symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataSymbolVector(Vec<Complex64>);

impl DataSymbolVector {
    /// Validates that every element belongs to the alphabet (sign selection
    /// may still flip them later; membership is checked against the full set).
    pub fn new(symbols: Vec<Complex64>, constellation: &Constellation) -> Result<Self> {
        for &s in &symbols {
            Constellation::match_point(constellation.points(), s)?;
        }
        Ok(Self(symbols))
    }

    /// No membership check; for internal generators that draw from the
    /// alphabet directly.
    pub(crate) fn from_raw(symbols: Vec<Complex64>) -> Self {
        Self(symbols)
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A +-1 decision vector, one sign per subcarrier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Argument("sign vector elements must be +1 or -1".into()));
        }
        Ok(Self(signs))
    }

    pub fn all_plus(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub(crate) fn from_raw(signs: Vec<i8>) -> Self {
        Self(signs)
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }

    /// Element-wise product with a symbol vector.
    pub fn apply(&self, symbols: &[Complex64]) -> Vec<Complex64> {
        symbols
            .iter()
            .zip(&self.0)
            .map(|(&b, &x)| b * f64::from(x))
            .collect()
    }
}

/// Oversampled time-domain samples of one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OversampledSignal {
    samples: Vec<Complex64>,
}

impl OversampledSignal {
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }
}

impl std::ops::Deref for OversampledSignal {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.samples
    }
}

/// Draw `n` i.i.d. uniform symbols from the alphabet.
pub fn draw_symbols<R: Rng + ?Sized>(
    constellation: &Constellation,
    n: usize,
    rng: &mut R,
) -> Result<DataSymbolVector> {
    if n == 0 {
        return Err(Error::Argument("cannot draw an empty symbol vector".into()));
    }
    let points = constellation.points();
    let symbols = (0..n)
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect();
    Ok(DataSymbolVector::from_raw(symbols))
}

/// Synthesize the normalized oversampled signal for an already sign-adjusted
/// spectrum: a zero-padded inverse DFT of size `LN` scaled by
/// `1/(sigma_b sqrt(N))`.
pub(crate) fn synthesize(spectrum: &[Complex64], params: SignalParams, sigma_b: f64) -> Vec<Complex64> {
    let ln = params.samples();
    let mut buf = vec![Complex64::new(0.0, 0.0); ln];
    buf[..spectrum.len()].copy_from_slice(spectrum);
    FftPlanner::new().plan_fft_inverse(ln).process(&mut buf);
    let scale = 1.0 / (sigma_b * (params.subcarriers() as f64).sqrt());
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Modulate one OFDM symbol from data symbols and a sign vector.
pub fn modulate(
    b: &DataSymbolVector,
    signs: &SignVector,
    params: SignalParams,
    constellation: &Constellation,
) -> Result<OversampledSignal> {
    let n = params.subcarriers();
    if b.len() != n || signs.len() != n {
        return Err(Error::Argument(format!(
            "length mismatch: {} symbols, {} signs, {} subcarriers",
            b.len(),
            signs.len(),
            n
        )));
    }
    let spectrum = signs.apply(b.symbols());
    let samples = synthesize(&spectrum, params, constellation.sigma_b());
    Ok(OversampledSignal { samples })
}

/// Running unnormalized partial sums over the decided subcarrier prefix:
/// `partial[n] = sum_{k < decided} x_k b_k exp(i 2 pi k n / LN)`.
#[derive(Debug, Clone)]
pub struct PrefixState {
    partial: Vec<Complex64>,
    decided: usize,
    params: SignalParams,
}

impl PrefixState {
    pub fn empty(params: SignalParams) -> Self {
        Self {
            partial: vec![Complex64::new(0.0, 0.0); params.samples()],
            decided: 0,
            params,
        }
    }

    pub fn partial(&self) -> &[Complex64] {
        &self.partial
    }

    pub fn decided_count(&self) -> usize {
        self.decided
    }

    pub fn params(&self) -> SignalParams {
        self.params
    }

    /// Extend by one decided subcarrier. `j` must equal the current decided
    /// count; anything else is a state error.
    pub fn extend(&self, b_j: Complex64, j: usize, sign: i8) -> Result<Self> {
        if j != self.decided {
            return Err(Error::State(format!(
                "prefix extension out of order: decided {} but got index {j}",
                self.decided
            )));
        }
        if j >= self.params.subcarriers() {
            return Err(Error::State(format!(
                "subcarrier index {j} beyond N={}",
                self.params.subcarriers()
            )));
        }
        if sign != 1 && sign != -1 {
            return Err(Error::Argument("sign must be +1 or -1".into()));
        }
        let mut next = self.clone();
        let ln = self.params.samples();
        let coeff = b_j * f64::from(sign);
        let step = 2.0 * std::f64::consts::PI * j as f64 / ln as f64;
        for (n, v) in next.partial.iter_mut().enumerate() {
            *v += coeff * Complex64::from_polar(1.0, step * n as f64);
        }
        next.decided = j + 1;
        Ok(next)
    }
}

/// Map an information bit stream onto data symbols.
///
/// The first `n_f` symbols take full `log2 |M|`-bit blocks into the alphabet
/// (their signs carry data and are excluded from sign selection); the
/// remaining `n - n_f` symbols take `log2 |M| - 1`-bit blocks into the
/// half-set, leaving their signs free for the selector.
pub fn encode_bits(
    bits: &[u8],
    constellation: &Constellation,
    n: usize,
    n_f: usize,
) -> Result<DataSymbolVector> {
    if n_f > n {
        return Err(Error::Argument(format!("n_f = {n_f} exceeds n = {n}")));
    }
    let m = constellation.bits_per_symbol();
    let expected = n_f * m + (n - n_f) * (m - 1);
    if bits.len() != expected {
        return Err(Error::Argument(format!(
            "expected {expected} bits for n={n}, n_f={n_f}, got {}",
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::Argument("bits must be 0 or 1".into()));
    }
    let mut symbols = Vec::with_capacity(n);
    let mut pos = 0;
    for i in 0..n {
        let (list, width) = if i < n_f {
            (constellation.points(), m)
        } else {
            (constellation.half_set(), m - 1)
        };
        let mut idx = 0usize;
        for &bit in &bits[pos..pos + width] {
            idx = (idx << 1) | bit as usize;
        }
        pos += width;
        symbols.push(list[idx]);
    }
    Ok(DataSymbolVector::from_raw(symbols))
}

/// Invert [`encode_bits`]. Sign flips on indices `>= n_f` do not change the
/// output because those symbols are resolved through the half-set.
pub fn decode_symbols(
    received: &DataSymbolVector,
    constellation: &Constellation,
    n: usize,
    n_f: usize,
) -> Result<Vec<u8>> {
    if n_f > n {
        return Err(Error::Argument(format!("n_f = {n_f} exceeds n = {n}")));
    }
    if received.len() != n {
        return Err(Error::Argument(format!(
            "expected {n} received symbols, got {}",
            received.len()
        )));
    }
    let m = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(n_f * m + (n - n_f) * (m - 1));
    for (i, &r) in received.symbols().iter().enumerate() {
        let (idx, width) = if i < n_f {
            (Constellation::match_point(constellation.points(), r)?, m)
        } else {
            // One of +-r lies in the half-set; find it.
            let idx = Constellation::match_point(constellation.half_set(), r)
                .or_else(|_| Constellation::match_point(constellation.half_set(), -r))?;
            (idx, m - 1)
        };
        for k in (0..width).rev() {
            bits.push(((idx >> k) & 1) as u8);
        }
    }
    Ok(bits)
}

/// Fraction of the symbol-stream bits spent on sign selection when `n_s` of
/// the `n` symbols have selector-owned signs.
pub fn rate_loss(n_s: usize, n: usize, m_size: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("n must be positive".into()));
    }
    if n_s > n {
        return Err(Error::Argument(format!("n_s = {n_s} exceeds n = {n}")));
    }
    if m_size < 4 || !m_size.is_power_of_two() {
        return Err(Error::Argument(format!(
            "constellation size must be a power of two >= 4, got {m_size}"
        )));
    }
    let bits = (m_size.trailing_zeros()) as f64;
    Ok(n_s as f64 / (n as f64 * bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qpsk_points_and_sigma() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        assert_eq!(c.size(), 4);
        assert!((c.sigma_b() - 1.0).abs() < 1e-15);
        for p in c.points() {
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
        // Half-set: the two points with positive real part.
        assert_eq!(c.half_set().len(), 2);
        assert!(c.half_set().iter().all(|p| p.re > 0.0));
    }

    #[test]
    fn qam16_sigma_matches_grid_mean() {
        let c = Constellation::new(ConstellationKind::Qam16);
        // Brute-force mean of |y|^2 over the unnormalized grid.
        let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean - 10.0).abs() < 1e-12);
        assert!((c.sigma_b() * c.sigma_b() - mean).abs() < 1e-12);
    }

    #[test]
    fn qam64_sigma_matches_grid_mean() {
        let c = Constellation::new(ConstellationKind::Qam64);
        let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 64.0;
        assert!((c.sigma_b() * c.sigma_b() - mean).abs() < 1e-12);
    }

    #[test]
    fn half_set_is_one_per_pair() {
        for kind in [ConstellationKind::Qpsk, ConstellationKind::Qam16, ConstellationKind::Qam64] {
            let c = Constellation::new(kind);
            assert_eq!(c.half_set().len(), c.size() / 2);
            // Zero-sum alphabet and half_set disjoint from its negation.
            let sum: Complex64 = c.points().iter().sum();
            assert!(sum.norm() < 1e-12);
            for h in c.half_set() {
                assert!(!c.half_set().iter().any(|g| (g + h).norm() < 1e-12));
                // -h is still a point of the full alphabet.
                assert!(Constellation::match_point(c.points(), -h).is_ok());
            }
        }
    }

    #[test]
    fn unknown_constellation_name_rejected() {
        assert!(matches!(
            ConstellationKind::from_name("qam256"),
            Err(Error::Config(_))
        ));
        assert_eq!(ConstellationKind::from_name("16-QAM").unwrap(), ConstellationKind::Qam16);
    }

    #[test]
    fn draw_is_deterministic_and_validates_n() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = draw_symbols(&c, 4, &mut r1).unwrap();
        let b = draw_symbols(&c, 4, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(matches!(draw_symbols(&c, 0, &mut r1), Err(Error::Argument(_))));
    }

    #[test]
    fn draw_mean_power_near_sigma_sq() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = draw_symbols(&c, 100_000, &mut rng).unwrap();
        let mean: f64 = b.symbols().iter().map(|s| s.norm_sqr()).sum::<f64>() / b.len() as f64;
        let sigma_sq = c.sigma_b() * c.sigma_b();
        assert!((mean / sigma_sq - 1.0).abs() < 0.01, "mean {mean} vs {sigma_sq}");
    }

    #[test]
    fn single_tone_has_constant_envelope() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let params = SignalParams::new(1, 4).unwrap();
        let b = DataSymbolVector::new(vec![c.points()[0]], &c).unwrap();
        let sig = modulate(&b, &SignVector::all_plus(1), params, &c).unwrap();
        assert_eq!(sig.len(), 4);
        for s in sig.iter() {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_sum_peaks_at_origin() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let n = 16;
        let params = SignalParams::new(n, 4).unwrap();
        let b = DataSymbolVector::new(vec![c.points()[3]; n], &c).unwrap();
        let sig = modulate(&b, &SignVector::all_plus(n), params, &c).unwrap();
        assert!((sig[0].norm_sqr() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn modulate_rejects_length_mismatch() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let params = SignalParams::new(4, 4).unwrap();
        let b = DataSymbolVector::new(vec![c.points()[0]; 3], &c).unwrap();
        assert!(matches!(
            modulate(&b, &SignVector::all_plus(4), params, &c),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn prefix_extend_cancels_and_orders() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let params = SignalParams::new(4, 4).unwrap();
        let p0 = PrefixState::empty(params);
        let b0 = c.points()[5];
        let p1 = p0.extend(b0, 0, 1).unwrap();
        assert_eq!(p1.decided_count(), 1);
        // Out-of-order extension is a state error.
        assert!(matches!(p1.extend(b0, 0, 1), Err(Error::State(_))));
        // Adding then subtracting the same carrier returns to the prior state.
        let p2 = p1.extend(b0, 1, -1).unwrap();
        let p3 = p0.extend(b0, 0, 1).unwrap().extend(-b0, 1, 1).unwrap();
        for (a, b) in p2.partial().iter().zip(p3.partial()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn bit_round_trip_qpsk() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        // n=2, n_f=0: one bit per symbol into the half-set.
        let b = encode_bits(&[0, 1], &c, 2, 0).unwrap();
        for s in b.symbols() {
            assert!(Constellation::match_point(c.half_set(), *s).is_ok());
        }
        assert_eq!(decode_symbols(&b, &c, 2, 0).unwrap(), vec![0, 1]);
        // n=2, n_f=2: two bits per symbol into the full set.
        let b = encode_bits(&[0, 0, 1, 1], &c, 2, 2).unwrap();
        assert_eq!(decode_symbols(&b, &c, 2, 2).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn decode_survives_all_sign_patterns() {
        // Exhaustive over sign patterns on the selector-owned indices.
        let c = Constellation::new(ConstellationKind::Qam16);
        let n = 5;
        let n_f = 2;
        let m = c.bits_per_symbol();
        let total = n_f * m + (n - n_f) * (m - 1);
        let bits: Vec<u8> = (0..total).map(|i| ((i * 7 + 3) % 2) as u8).collect();
        let b = encode_bits(&bits, &c, n, n_f).unwrap();
        for mask in 0..(1u32 << (n - n_f)) {
            let flipped: Vec<Complex64> = b
                .symbols()
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    if i >= n_f && (mask >> (i - n_f)) & 1 == 1 {
                        -s
                    } else {
                        s
                    }
                })
                .collect();
            let rx = DataSymbolVector::new(flipped, &c).unwrap();
            assert_eq!(decode_symbols(&rx, &c, n, n_f).unwrap(), bits);
        }
    }

    #[test]
    fn encode_rejects_wrong_bit_count() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        assert!(matches!(encode_bits(&[0, 1, 1], &c, 2, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn decode_rejects_foreign_symbol() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let rx = DataSymbolVector::from_raw(vec![Complex64::new(0.3, 0.1)]);
        assert!(matches!(decode_symbols(&rx, &c, 1, 0), Err(Error::Decode(_))));
    }

    #[test]
    fn rate_loss_examples() {
        assert!((rate_loss(64, 64, 16).unwrap() - 0.25).abs() < 1e-15);
        assert!((rate_loss(32, 64, 64).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(rate_loss(0, 64, 16).unwrap(), 0.0);
        assert!(rate_loss(65, 64, 16).is_err());
        assert!(rate_loss(4, 8, 6).is_err());
        assert!(rate_loss(0, 8, 2).is_err());
    }

    #[test]
    fn symbol_vector_serializes_as_re_im_pairs() {
        let c = Constellation::new(ConstellationKind::Qpsk);
        let b = DataSymbolVector::new(vec![c.points()[0], c.points()[3]], &c).unwrap();
        let json = serde_json::to_string(&b).unwrap();
        let parsed: DataSymbolVector = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, b);
        assert!(json.starts_with("[["));
    }
}
