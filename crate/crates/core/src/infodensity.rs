//! Generalized information density of the scaled nearest-neighbour decoder
//! and its conditional form under residual intersymbol interference.

use num_complex::Complex64;

use crate::special::{log_cosh, log_sum_exp};
use crate::waveform::Constellation;

/// Conditioning state of the decoding error bound for one packet.
///
/// The preceding symbol always interferes with the current one (the worst
/// of the two possible misalignment signs).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingState {
    pub h: Vec<Complex64>,
    pub h_hat: Vec<Complex64>,
    /// `1 − |d̂ − d|/tp` per block, in `[0, 1]`.
    pub delta: Vec<f64>,
    pub s: f64,
}

impl DecodingState {
    pub fn nb(&self) -> usize {
        self.h.len()
    }

    /// Perfect synchronization and channel knowledge.
    pub fn perfect(h: Vec<Complex64>, s: f64) -> Self {
        let nb = h.len();
        Self {
            h_hat: h.clone(),
            h,
            delta: vec![1.0; nb],
            s,
        }
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..self.clone() }
    }
}

/// Index of a consecutive symbol pair `(x_{k−1}, x_k)`.
///
/// Stored 0-based as `prev·u + cur`; for BPSK this reproduces the usual
/// table (`0 ↔ (x⁽¹⁾, x⁽¹⁾)`, `1 ↔ (x⁽¹⁾, x⁽²⁾)`, `2 ↔ (x⁽²⁾, x⁽¹⁾)`,
/// `3 ↔ (x⁽²⁾, x⁽²⁾)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IsiStateIndex(pub usize);

impl IsiStateIndex {
    pub fn new(prev: usize, cur: usize, u: usize) -> Self {
        Self(prev * u + cur)
    }

    /// From the 1-based label `b ∈ {1, …, u²}`.
    pub fn from_label(b: usize) -> Self {
        assert!(b >= 1, "state labels start at 1");
        Self(b - 1)
    }

    pub fn label(self) -> usize {
        self.0 + 1
    }

    pub fn prev(self, u: usize) -> usize {
        self.0 / u
    }

    pub fn cur(self, u: usize) -> usize {
        self.0 % u
    }

    pub fn symbols(self, c: &Constellation) -> (Complex64, Complex64) {
        let u = c.size();
        (c.points()[self.prev(u)], c.points()[self.cur(u)])
    }
}

/// `i_s(x; y, ĥ)` in nats, via log-sum-exp over the constellation.
pub fn info_density(x: Complex64, y: Complex64, h_hat: Complex64, s: f64, c: &Constellation) -> f64 {
    if c.is_antipodal_real() {
        let a = c.points()[1].re;
        let sigma = if x.re >= 0.0 { 1.0 } else { -1.0 };
        if x.im == 0.0 && x.re.abs() == a {
            let t = 2.0 * s * a * (h_hat.conj() * y).re;
            return sigma * t - log_cosh(t);
        }
    }
    let metric = |p: Complex64| -s * (y - h_hat * p).norm_sqr();
    let terms: Vec<f64> = c.points().iter().map(|&p| metric(p)).collect();
    metric(x) - log_sum_exp(&terms) + (c.size() as f64).ln()
}

/// Reference evaluation without the log-domain safeguards.
pub fn info_density_naive(
    x: Complex64,
    y: Complex64,
    h_hat: Complex64,
    s: f64,
    c: &Constellation,
) -> f64 {
    let metric = |p: Complex64| (-s * (y - h_hat * p).norm_sqr()).exp();
    let avg: f64 = c.points().iter().map(|&p| metric(p)).sum::<f64>() / c.size() as f64;
    (metric(x) / avg).ln()
}

/// Noise-free part `α_j = h(δ x_cur + (1 − δ) x_prev)` of the data sample.
pub fn isi_mean(b: IsiStateIndex, h: Complex64, delta: f64, c: &Constellation) -> Complex64 {
    let (prev, cur) = b.symbols(c);
    h * (cur * delta + prev * (1.0 - delta))
}

/// `i_s` for ISI state `b` of block `l` and noise sample `z`.
pub fn conditional_info_density(
    b: IsiStateIndex,
    z: Complex64,
    state: &DecodingState,
    l: usize,
    c: &Constellation,
) -> f64 {
    let (_, cur) = b.symbols(c);
    let y = isi_mean(b, state.h[l], state.delta[l], c) + z;
    info_density(cur, y, state.h_hat[l], state.s, c)
}

/// One-dimensional reduction for antipodal BPSK: `i_s = σt − log cosh t`
/// with `t ~ N(m, v)` and `σ = ±1` the sign of the current symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpskProjection {
    pub sigma: f64,
    pub m: f64,
    pub v: f64,
}

impl BpskProjection {
    pub fn new(b: IsiStateIndex, state: &DecodingState, l: usize, c: &Constellation) -> Self {
        debug_assert!(c.is_antipodal_real());
        let a = c.points()[1].re;
        let (_, cur) = b.symbols(c);
        let alpha = isi_mean(b, state.h[l], state.delta[l], c);
        let hh = state.h_hat[l];
        let s = state.s;
        Self {
            sigma: if cur.re > 0.0 { 1.0 } else { -1.0 },
            m: 2.0 * s * a * (hh.conj() * alpha).re,
            v: 2.0 * s * s * a * a * hh.norm_sqr(),
        }
    }

    /// Mean of `σt`, so that the MGF depends on `(m_signed, v)` only.
    pub fn signed_mean(&self) -> f64 {
        self.sigma * self.m
    }
}
