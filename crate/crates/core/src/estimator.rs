//! Maximum-likelihood delay and channel estimation from the pilot part of
//! each block.
//!
//! For a fixed integer shift `q` the normalized matched-filter metric
//! `|v(q,e)ᵀy|² / ‖v(q,e)‖²` is a ratio of two quadratics in `e`, so its
//! interior maxima are roots of a quadratic. The search evaluates the metric
//! on the lattice points and at those roots only.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::waveform::{upsampled_pilot_vector, DelayModel, PilotSequence, SystemConfig};

/// Estimates for one packet. Joint estimation repeats the common delay in
/// every block.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub h_hat: Vec<Complex64>,
    pub d_hat: Vec<f64>,
    pub q_hat: Vec<usize>,
    pub e_hat: Vec<f64>,
}

/// `(q, e)` pairs searched by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<(usize, f64)>,
}

/// Linear interpolation between the shifted templates, `v(q, e)`.
pub fn template_v(q: usize, e: f64, pilot: &PilotSequence, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let max_shift = cfg.obs_len() - pilot.len() * cfg.upsampling;
    if !(0.0..=1.0).contains(&e) || q > max_shift || (e > 0.0 && q + 1 > max_shift) {
        return Err(Error::ShiftOutOfRange { q, e, max_shift });
    }
    let a = upsampled_pilot_vector(pilot, q, cfg)?;
    if e == 0.0 {
        return Ok(a);
    }
    let b = upsampled_pilot_vector(pilot, q + 1, cfg)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (1.0 - e) * x + e * y).collect())
}

/// Per-block metric `|vᵀy|² / ‖v‖²` evaluated directly from the template.
pub fn objective(
    q: usize,
    e: f64,
    y: &[Complex64],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<f64> {
    let v = template_v(q, e, pilot, cfg)?;
    let num: Complex64 = v.iter().zip(y).map(|(a, b)| b * a).sum();
    let den: f64 = v.iter().map(|a| a * a).sum();
    Ok(if den > 0.0 { num.norm_sqr() / den } else { 0.0 })
}

/// Sum of the per-block metrics at a common `(q, e)`.
pub fn objective_joint(
    q: usize,
    e: f64,
    ys: &[Vec<Complex64>],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<f64> {
    ys.iter().map(|y| objective(q, e, y, pilot, cfg)).sum()
}

/// Precomputed correlator for one pilot sequence and configuration.
#[derive(Debug, Clone)]
pub struct DelayEstimator {
    /// Non-zero part of `x_N(0)`, length `np·N`.
    up: Vec<f64>,
    max_shift: usize,
    /// `‖x_N(q)‖²`.
    energy: f64,
    /// `x_N(q)ᵀ x_N(q+1)`.
    cross: f64,
}

/// Ratio-of-quadratics metric `n(e)/d(e)` on one lattice interval.
#[derive(Debug, Clone, Copy)]
struct Quadratics {
    n: [f64; 3],
    d: [f64; 3],
}

impl Quadratics {
    fn value(&self, e: f64) -> f64 {
        let n = self.n[0] + e * (self.n[1] + e * self.n[2]);
        let d = self.d[0] + e * (self.d[1] + e * self.d[2]);
        if d > 0.0 {
            n / d
        } else {
            0.0
        }
    }

    /// Roots in `(0, 1)` of `n′d − nd′`, whose cubic terms cancel.
    fn interior_stationary_points(&self) -> Vec<f64> {
        let [n0, n1, n2] = self.n;
        let [d0, d1, d2] = self.d;
        let a = n2 * d1 - n1 * d2;
        let b = 2.0 * (n2 * d0 - n0 * d2);
        let c = n1 * d0 - n0 * d1;
        solve_quadratic(a, b, c)
            .into_iter()
            .filter(|&e| e > 0.0 && e < 1.0)
            .collect()
    }
}

/// Real roots of `a x² + b x + c`, in ascending order.
fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let (a, b, c) = (a / scale, b / scale, c / scale);
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let t = -0.5 * (b + b.signum() * sq);
    let mut roots = if t == 0.0 {
        vec![0.0]
    } else {
        vec![t / a, c / t]
    };
    roots.sort_by(f64::total_cmp);
    roots
}

impl DelayEstimator {
    pub fn new(pilot: &PilotSequence, cfg: &SystemConfig) -> Result<Self> {
        if pilot.is_empty() {
            return Err(Error::NoPilots);
        }
        let n_up = cfg.upsampling;
        let scale = 1.0 / (n_up as f64).sqrt();
        let up: Vec<f64> = pilot
            .symbols
            .iter()
            .flat_map(|&x| std::iter::repeat(x * scale).take(n_up))
            .collect();
        let energy = up.iter().map(|x| x * x).sum();
        let cross = up.windows(2).map(|w| w[0] * w[1]).sum();
        Ok(Self {
            up,
            max_shift: cfg.obs_len() - pilot.len() * n_up,
            energy,
            cross,
        })
    }

    pub fn max_shift(&self) -> usize {
        self.max_shift
    }

    /// `x_N(q)ᵀ y` for every admissible shift.
    pub fn correlations(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..=self.max_shift)
            .map(|q| {
                self.up
                    .iter()
                    .zip(&y[q..q + self.up.len()])
                    .map(|(a, b)| b * a)
                    .sum()
            })
            .collect()
    }

    /// Denominator `‖v(q, e)‖²` as a quadratic in `e`.
    fn denominator(&self) -> [f64; 3] {
        let g = self.energy - self.cross;
        [self.energy, -2.0 * g, 2.0 * g]
    }

    /// Numerator `|a + e(b − a)|²`, summed over blocks.
    fn numerator(pairs: impl Iterator<Item = (Complex64, Complex64)>) -> [f64; 3] {
        let mut n = [0.0; 3];
        for (a, b) in pairs {
            let diff = b - a;
            n[0] += a.norm_sqr();
            n[1] += 2.0 * (a.conj() * diff).re;
            n[2] += diff.norm_sqr();
        }
        n
    }

    /// Candidate set and metric values from correlations of one or more
    /// blocks sharing the delay.
    fn search(&self, corrs: &[Vec<Complex64>]) -> (usize, f64) {
        let den = self.denominator();
        let lattice = |q: usize| -> f64 {
            corrs.iter().map(|c| c[q].norm_sqr()).sum::<f64>() / self.energy
        };
        // Scan candidates in order of increasing delay; strict improvement
        // keeps the smallest delay among ties.
        let mut best = (0usize, 0.0f64);
        let mut best_val = lattice(0);
        for q in 0..self.max_shift {
            let quad = Quadratics {
                n: Self::numerator(corrs.iter().map(|c| (c[q], c[q + 1]))),
                d: den,
            };
            for e in quad.interior_stationary_points() {
                let val = quad.value(e);
                if val > best_val {
                    best_val = val;
                    best = (q, e);
                }
            }
            let val = lattice(q + 1);
            if val > best_val {
                best_val = val;
                best = (q + 1, 0.0);
            }
        }
        best
    }

    /// Channel estimate `v(q,e)ᵀy / ‖v(q,e)‖²` from precomputed correlations.
    fn channel(&self, corr: &[Complex64], q: usize, e: f64) -> Complex64 {
        if e == 0.0 {
            return corr[q] / self.energy;
        }
        let num = corr[q] * (1.0 - e) + corr[q + 1] * e;
        let [d0, d1, d2] = self.denominator();
        num / (d0 + e * (d1 + e * d2))
    }

    /// Channel estimate at a known delay `d`.
    pub fn channel_at(&self, y: &[Complex64], d: f64) -> Complex64 {
        let corr = self.correlations(y);
        let q = (d.floor() as usize).min(self.max_shift);
        let e = if q == self.max_shift { 0.0 } else { d - q as f64 };
        self.channel(&corr, q, e)
    }

    /// All candidates for one block: lattice points and interior roots.
    pub fn candidate_set(&self, y: &[Complex64]) -> CandidateSet {
        let corr = self.correlations(y);
        let den = self.denominator();
        let mut points = vec![(0, 0.0)];
        for q in 0..self.max_shift {
            let quad = Quadratics {
                n: Self::numerator(std::iter::once((corr[q], corr[q + 1]))),
                d: den,
            };
            points.extend(quad.interior_stationary_points().into_iter().map(|e| (q, e)));
            points.push((q + 1, 0.0));
        }
        CandidateSet { points }
    }

    /// Interior stationary points of the metric on `[q, q+1]`.
    pub fn stationary_points(&self, q: usize, y: &[Complex64]) -> Result<Vec<f64>> {
        if q >= self.max_shift {
            return Err(Error::ShiftOutOfRange {
                q,
                e: 0.0,
                max_shift: self.max_shift,
            });
        }
        let corr = self.correlations(y);
        let quad = Quadratics {
            n: Self::numerator(std::iter::once((corr[q], corr[q + 1]))),
            d: self.denominator(),
        };
        Ok(quad.interior_stationary_points())
    }

    /// Coefficients `(A, B, C)` of the stationary-point quadratic on `[q, q+1]`.
    pub fn stationary_coefficients(&self, q: usize, y: &[Complex64]) -> [f64; 3] {
        let corr = self.correlations(y);
        let [n0, n1, n2] = Self::numerator(std::iter::once((corr[q], corr[q + 1])));
        let [d0, d1, d2] = self.denominator();
        [n2 * d1 - n1 * d2, 2.0 * (n2 * d0 - n0 * d2), n1 * d0 - n0 * d1]
    }

    /// Independent per-block estimation.
    pub fn estimate_per_block(&self, ys: &[Vec<Complex64>]) -> EstimationResult {
        let mut out = EstimationResult {
            h_hat: Vec::with_capacity(ys.len()),
            d_hat: Vec::with_capacity(ys.len()),
            q_hat: Vec::with_capacity(ys.len()),
            e_hat: Vec::with_capacity(ys.len()),
        };
        for y in ys {
            let corr = self.correlations(y);
            let (q, e) = self.search(std::slice::from_ref(&corr));
            out.h_hat.push(self.channel(&corr, q, e));
            out.d_hat.push(q as f64 + e);
            out.q_hat.push(q);
            out.e_hat.push(e);
        }
        out
    }

    /// One delay for all blocks, maximizing the summed metric.
    pub fn estimate_joint(&self, ys: &[Vec<Complex64>]) -> EstimationResult {
        let corrs: Vec<Vec<Complex64>> = ys.iter().map(|y| self.correlations(y)).collect();
        let (q, e) = self.search(&corrs);
        let nb = ys.len();
        EstimationResult {
            h_hat: corrs.iter().map(|c| self.channel(c, q, e)).collect(),
            d_hat: vec![q as f64 + e; nb],
            q_hat: vec![q; nb],
            e_hat: vec![e; nb],
        }
    }
}

/// Per-block estimation from raw observations.
pub fn estimate_per_block(
    ys: &[Vec<Complex64>],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<EstimationResult> {
    Ok(DelayEstimator::new(pilot, cfg)?.estimate_per_block(ys))
}

/// Joint estimation; only defined when all blocks share the delay.
pub fn estimate_joint(
    ys: &[Vec<Complex64>],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<EstimationResult> {
    if cfg.delay_model != DelayModel::FullyDependent {
        return Err(Error::JointNeedsCommonDelay);
    }
    Ok(DelayEstimator::new(pilot, cfg)?.estimate_joint(ys))
}
