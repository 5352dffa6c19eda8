//! Signal model: pilot sequences, upsampled matched-filter templates and
//! sampled pilot observations.
//!
//! Time is measured in units of the sampling interval `ts`, which is fixed to
//! one. A symbol lasts `tp = N` samples. The rectangular transmit pulse and
//! the rectangular `ts`-wide receive filter combine into a triangular pulse,
//! so a sample taken between two lattice points is the linear interpolation
//! of the two neighbouring lattice templates.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// How the per-block delays are tied together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DelayModel {
    /// One delay per block, drawn independently.
    Independent,
    /// A single delay shared by all blocks.
    FullyDependent,
}

/// Modulation used for pilots and data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
}

/// A finite constellation with uniform prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    /// Antipodal BPSK, ordered as `[-√ρ, +√ρ]`.
    pub fn bpsk(rho: f64) -> Self {
        let a = rho.sqrt();
        Self {
            points: vec![Complex64::new(-a, 0.0), Complex64::new(a, 0.0)],
        }
    }

    /// Gray-free QPSK with average energy `ρ`.
    pub fn qpsk(rho: f64) -> Self {
        let a = (rho / 2.0).sqrt();
        Self {
            points: vec![
                Complex64::new(-a, -a),
                Complex64::new(-a, a),
                Complex64::new(a, -a),
                Complex64::new(a, a),
            ],
        }
    }

    pub fn from_points(points: Vec<Complex64>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Number of points `u`.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// True for a real antipodal pair `{-a, +a}` in that order.
    pub fn is_antipodal_real(&self) -> bool {
        self.points.len() == 2
            && self.points[0].im == 0.0
            && self.points[1].im == 0.0
            && self.points[0].re == -self.points[1].re
            && self.points[1].re > 0.0
    }
}

/// Physical and protocol parameters of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Average SNR (linear); noise spectral density is one.
    pub rho: f64,
    /// Transmission rate in nats per channel use.
    pub rate_nats: f64,
    /// Number of fading blocks per packet.
    pub nb: usize,
    /// Channel uses per block (pilots plus data).
    pub nc: usize,
    /// Pilot symbols per block.
    pub np: usize,
    /// Receiver upsampling rate `N`.
    pub upsampling: usize,
    /// Maximum delay, in samples.
    pub dmax: f64,
    pub delay_model: DelayModel,
    pub modulation: Modulation,
    pub include_data_interference: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            rho: 10f64.powf(0.65),
            rate_nats: 30.0 / 288.0 * std::f64::consts::LN_2,
            nb: 8,
            nc: 36,
            np: 15,
            upsampling: 5,
            dmax: 10.0,
            delay_model: DelayModel::FullyDependent,
            modulation: Modulation::Bpsk,
            include_data_interference: false,
        }
    }
}

impl SystemConfig {
    /// Data symbols per block.
    pub fn ns(&self) -> usize {
        self.nc.saturating_sub(self.np)
    }

    /// Symbol period in samples.
    pub fn tp(&self) -> f64 {
        self.upsampling as f64
    }

    /// Largest integer template shift, `ceil(dmax/ts)`.
    pub fn max_shift(&self) -> usize {
        self.dmax.ceil() as usize
    }

    /// Observation length `M = ceil(dmax/ts) + np·N`.
    pub fn obs_len(&self) -> usize {
        self.max_shift() + self.np * self.upsampling
    }

    pub fn constellation(&self) -> Constellation {
        match self.modulation {
            Modulation::Bpsk => Constellation::bpsk(self.rho),
        }
    }

    /// Sets `dmax` to the default of two symbol periods.
    pub fn with_default_dmax(mut self) -> Self {
        self.dmax = 2.0 * self.tp();
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.rho.log10()
    }

    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.rho = 10f64.powf(snr_db / 10.0);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.rate_nats > 0.0 && self.rate_nats.is_finite()) {
            return bad("rate must be positive");
        }
        if self.nb == 0 {
            return bad("nb must be at least 1");
        }
        if self.np >= self.nc {
            return bad("np must be smaller than nc");
        }
        if self.upsampling == 0 {
            return bad("upsampling rate must be at least 1");
        }
        if !(self.dmax >= 0.0 && self.dmax.is_finite()) {
            return bad("dmax must be non-negative");
        }
        Ok(())
    }
}

/// Triangular autocorrelation of the `ts`-wide rectangular pulse (`ts = 1`).
pub fn triangular_autocorrelation(t: f64) -> f64 {
    if (0.0..1.0).contains(&t) {
        t
    } else if (1.0..=2.0).contains(&t) {
        2.0 - t
    } else {
        0.0
    }
}

/// Galois feedback masks of maximal-length shift registers, indexed by degree.
const MSEQ_MASKS: [u32; 17] = [
    0, 0x1, 0x3, 0x6, 0xc, 0x14, 0x30, 0x60, 0xb8, 0x110, 0x240, 0x500, 0xe08, 0x1c80, 0x3802,
    0x6000, 0xd008,
];

/// Binary maximal-length sequence of degree `m` (`2^m - 1` bits).
pub fn m_sequence_bits(m: u32) -> Vec<u8> {
    assert!((1..MSEQ_MASKS.len() as u32).contains(&m), "unsupported degree {m}");
    let len = (1usize << m) - 1;
    let mask = MSEQ_MASKS[m as usize];
    let mut state: u32 = 1;
    (0..len)
        .map(|_| {
            let out = (state & 1) as u8;
            state >>= 1;
            if out == 1 {
                state ^= mask;
            }
            out
        })
        .collect()
}

/// BPSK pilot symbols (real-valued).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSequence {
    pub symbols: Vec<f64>,
}

impl PilotSequence {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|x| x * x).sum()
    }
}

/// Pilot sequence from an m-sequence, mapped `1 → +√ρ`, `0 → -√ρ`.
///
/// Lengths that are not of the form `2^m - 1` take the leading `np` symbols
/// of the next longer m-sequence.
pub fn make_pilot_sequence(np: usize, rho: f64) -> Result<PilotSequence> {
    if np == 0 {
        return Err(Error::NoPilots);
    }
    let mut m = 1;
    while (1usize << m) - 1 < np {
        m += 1;
    }
    let amp = rho.sqrt();
    let mut symbols: Vec<f64> = m_sequence_bits(m)
        .into_iter()
        .take(np)
        .map(|b| if b == 1 { amp } else { -amp })
        .collect();
    let energy: f64 = symbols.iter().map(|x| x * x).sum();
    let scale = (np as f64 * rho / energy).sqrt();
    for x in &mut symbols {
        *x *= scale;
    }
    Ok(PilotSequence { symbols })
}

/// Entry `n` (1-based) of the upsampled symbol stream, including the `1/√N`
/// filter gain; zero outside the stream.
#[inline]
fn upsampled_entry(symbols: &[f64], n: isize, upsampling: usize) -> f64 {
    if n < 1 {
        return 0.0;
    }
    let k = (n as usize - 1) / upsampling;
    symbols.get(k).map_or(0.0, |x| x / (upsampling as f64).sqrt())
}

/// Upsampled pilot template `x_N(q)`: `q` zeros, the `np·N` scaled pilot
/// samples, then zeros up to length `M`.
pub fn upsampled_pilot_vector(
    pilot: &PilotSequence,
    q: usize,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let m_len = cfg.obs_len();
    let span = pilot.len() * cfg.upsampling;
    if q + span > m_len {
        return Err(Error::ShiftOutOfRange {
            q,
            e: 0.0,
            max_shift: m_len - span.min(m_len),
        });
    }
    let mut v = vec![0.0; m_len];
    for (n, slot) in v[q..q + span].iter_mut().enumerate() {
        *slot = upsampled_entry(&pilot.symbols, n as isize + 1, cfg.upsampling);
    }
    Ok(v)
}

/// Fading gains and delays of one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    /// Delay per block in samples (all equal under `FullyDependent`).
    pub d: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(h: Vec<Complex64>, d: Vec<f64>, cfg: &SystemConfig) -> Result<Self> {
        if h.len() != cfg.nb || d.len() != cfg.nb {
            return Err(Error::InvalidConfig(format!(
                "realization needs {} gains and delays",
                cfg.nb
            )));
        }
        if d.iter().any(|&x| !(0.0..=cfg.dmax).contains(&x)) {
            return Err(Error::InvalidConfig("delay outside [0, dmax]".into()));
        }
        if cfg.delay_model == DelayModel::FullyDependent && d.iter().any(|&x| x != d[0]) {
            return Err(Error::InvalidConfig(
                "fully dependent delays must all be equal".into(),
            ));
        }
        Ok(Self { h, d })
    }

    /// Rayleigh gains and uniform delays on `[0, dmax]`.
    pub fn sample<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let h = (0..cfg.nb).map(|_| complex_normal(rng)).collect();
        let d = match cfg.delay_model {
            DelayModel::FullyDependent => vec![rng.gen::<f64>() * cfg.dmax; cfg.nb],
            DelayModel::Independent => (0..cfg.nb).map(|_| rng.gen::<f64>() * cfg.dmax).collect(),
        };
        Self { h, d }
    }

    /// Integer part of the delay of block `l`.
    pub fn q(&self, l: usize) -> usize {
        self.d[l].floor() as usize
    }

    /// Fractional part of the delay of block `l`, in `[0, 1)`.
    pub fn e(&self, l: usize) -> f64 {
        self.d[l] - self.d[l].floor()
    }
}

/// Sampled matched-filter output over the pilot window of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y: Vec<Complex64>,
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform draw from a real antipodal alphabet `{±√ρ}`.
pub fn random_bpsk<R: Rng + ?Sized>(rng: &mut R, rho: f64) -> f64 {
    if rng.gen::<bool>() {
        rho.sqrt()
    } else {
        -rho.sqrt()
    }
}

/// Noise-free matched-filter samples for the transmitted stream `symbols`
/// (pilots, optionally followed by data), delayed by `d` samples and scaled
/// by `h`. Exact for the rectangular/triangular pulse pair.
pub fn noiseless_samples(
    symbols: &[f64],
    h: Complex64,
    d: f64,
    cfg: &SystemConfig,
) -> Vec<Complex64> {
    let q = d.floor() as isize;
    let e = d - d.floor();
    (1..=cfg.obs_len() as isize)
        .map(|m| {
            let a = upsampled_entry(symbols, m - q, cfg.upsampling);
            let b = upsampled_entry(symbols, m - q - 1, cfg.upsampling);
            h * ((1.0 - e) * a + e * b)
        })
        .collect()
}

/// Draws the pilot observation of block `l`: pilot term, unit-variance
/// noise and, if enabled, interference from uniformly drawn data symbols.
pub fn sample_pilot_observation<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    l: usize,
    pilot: &PilotSequence,
    cfg: &SystemConfig,
    rng: &mut R,
) -> PilotObservation {
    let mut y = if cfg.include_data_interference {
        // Only the data symbols that can reach the window matter.
        let reach = cfg.max_shift() / cfg.upsampling + 2;
        let n_data = cfg.ns().min(reach);
        let mut stream = pilot.symbols.clone();
        stream.extend((0..n_data).map(|_| random_bpsk(rng, cfg.rho)));
        noiseless_samples(&stream, ch.h[l], ch.d[l], cfg)
    } else {
        noiseless_samples(&pilot.symbols, ch.h[l], ch.d[l], cfg)
    };
    for s in &mut y {
        *s += complex_normal(rng);
    }
    PilotObservation { y }
}

/// One data-phase output sample under residual misalignment `delta`, with
/// the preceding symbol leaking in (worst-case sign of the timing error).
pub fn isi_data_sample(
    x_k: Complex64,
    x_prev: Complex64,
    h: Complex64,
    delta: f64,
    z: Complex64,
) -> Complex64 {
    h * (x_k * delta + x_prev * (1.0 - delta)) + z
}
