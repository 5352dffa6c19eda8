//! Moment-generating functions of the negated information density.
//!
//! Per symbol, conditioned on the ISI state `j`, the MGF is
//! `φ_j(ζ) = E[e^{−ζ i_s}]` over the noise. Per block the symbols form a
//! Markov chain over consecutive pairs, so `φ_ℓ = νᵀ P(ζ)^{ns−1} 1`; for
//! BPSK this collapses to `((φ₁ + φ₂)/2)^{ns}`.
//!
//! Two quadrature engines are provided. For real antipodal BPSK the
//! density depends on the noise only through one Gaussian projection `t`,
//! and `−i_s = −σt + log cosh t` is split at the kink `t = 0`: the linear
//! part is handled with closed-form truncated-normal moments (after an
//! exact exponential tilt) and the smooth remainder `log(1 + e^{−2|t|})`
//! with composite Gauss–Legendre. Other constellations use tensor
//! Gauss–Hermite over the real and imaginary parts of the noise.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::infodensity::{conditional_info_density, BpskProjection, DecodingState, IsiStateIndex};
use crate::quadrature::GaussRule;
use crate::special::{log_q, log_sum_exp, upper_truncation_excess};
use crate::waveform::Constellation;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this `|t|` the remainder `log(1 + e^{−2|t|})` is below `1e−15`.
const REMAINDER_CUTOFF: f64 = 18.0;

/// `φ`, `φ′/φ` and `φ″/φ` at one `ζ`, with `φ` kept as a logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfEval {
    pub log_phi: f64,
    pub d1: f64,
    pub d2: f64,
}

impl MgfEval {
    pub fn phi(&self) -> f64 {
        self.log_phi.exp()
    }

    pub fn dphi(&self) -> f64 {
        self.phi() * self.d1
    }

    pub fn ddphi(&self) -> f64 {
        self.phi() * self.d2
    }

    fn is_finite(&self) -> bool {
        self.log_phi.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

/// Quadrature engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// One-dimensional split engine for antipodal BPSK, tensor Gauss–Hermite
    /// otherwise.
    Auto,
    /// Tensor Gauss–Hermite for every constellation.
    Hermite,
}

/// Shared quadrature tables.
#[derive(Debug, Clone)]
pub struct MgfEngine {
    panel: GaussRule,
    panel_scale: f64,
    hermite: GaussRule,
    pub method: Method,
}

impl Default for MgfEngine {
    fn default() -> Self {
        Self::new(16, 64).with_panel_scale(6.0)
    }
}

/// Closed-form moments and remainder corrections of one half-line.
struct HalfLine {
    log_weight: f64,
    a: [f64; 3],
}

impl MgfEngine {
    /// `panel_nodes` Gauss–Legendre nodes per panel for the split engine,
    /// `hermite_order` points per dimension for the tensor rule.
    pub fn new(panel_nodes: usize, hermite_order: usize) -> Self {
        Self {
            panel: GaussRule::legendre(panel_nodes),
            panel_scale: 1.0,
            hermite: GaussRule::standard_normal(hermite_order),
            method: Method::Auto,
        }
    }

    /// Multiplies the panel width of the split engine by `scale`.
    pub fn with_panel_scale(mut self, scale: f64) -> Self {
        self.panel_scale = scale;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn hermite_order(&self) -> usize {
        self.hermite.len()
    }

    /// MGF of `ℓ = −t + log cosh t` for `t ~ N(m, v)`.
    ///
    /// This is `φ_j` for BPSK with `m` the signed projection mean.
    pub fn projected_mgf(&self, m: f64, v: f64, zeta: f64) -> MgfEval {
        if v < 1e-24 {
            let l = -m + crate::special::log_cosh(m);
            return MgfEval {
                log_phi: zeta * l,
                d1: l,
                d2: l * l,
            };
        }
        let sd = v.sqrt();
        // t ≥ 0: ℓ = −ln 2 + r(t)
        let plus = {
            let log_p = log_q(-m / sd);
            let a = self.remainder(m, sd, log_p, 0.0, zeta);
            let b = -LN_2;
            HalfLine {
                log_weight: -zeta * LN_2 + log_p,
                a: [1.0 + a[0], b + a[1], b * b + a[2]],
            }
        };
        // t < 0, u = −t > 0: ℓ = 2u − ln 2 + r(u); tilt by e^{2ζu}
        let minus = {
            let mt = m - 2.0 * zeta * v;
            let alpha = mt / sd;
            let log_p = log_q(alpha);
            let excess = upper_truncation_excess(alpha);
            let eu = sd * excess;
            let var_u = v * (1.0 - (alpha + excess) * excess).max(0.0);
            let eu2 = var_u + eu * eu;
            let b = -LN_2;
            let a = self.remainder(-mt, sd, log_p, 2.0, zeta);
            HalfLine {
                log_weight: -zeta * LN_2 - 2.0 * zeta * m + 2.0 * zeta * zeta * v + log_p,
                a: [
                    1.0 + a[0],
                    b + 2.0 * eu + a[1],
                    b * b + 4.0 * b * eu + 4.0 * eu2 + a[2],
                ],
            }
        };
        let lw = [
            plus.log_weight + plus.a[0].ln(),
            minus.log_weight + minus.a[0].ln(),
        ];
        let log_phi = if zeta == 0.0 { 0.0 } else { log_sum_exp(&lw) };
        let norm = log_sum_exp(&lw);
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for h in [&plus, &minus] {
            if h.log_weight == f64::NEG_INFINITY {
                continue;
            }
            let w = (h.log_weight - norm).exp();
            d1 += w * h.a[1];
            d2 += w * h.a[2];
        }
        MgfEval { log_phi, d1, d2 }
    }

    /// `E[e^{ζr}(L + r)^k − L^k | u ≥ 0]` for `k = 0, 1, 2`, where
    /// `u ~ N(mu, sd²)`, `L = −ln 2 + c·u` and `r = log(1 + e^{−2u})`.
    fn remainder(&self, mu: f64, sd: f64, log_p: f64, c: f64, zeta: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        if !log_p.is_finite() {
            return out;
        }
        let v = sd * sd;
        let peak = mu.max(0.0);
        let lo = (mu - 9.0 * sd).max(0.0);
        let hi = (mu + ((peak - mu).powi(2) + 80.0 * v).sqrt()).min(REMAINDER_CUTOFF);
        if lo >= hi {
            return out;
        }
        let mut width = (0.5 * sd).min(1.0);
        if mu != 0.0 {
            width = width.min(2.0 * v / mu.abs());
        }
        width *= self.panel_scale;
        let panels = (((hi - lo) / width).ceil() as usize).clamp(1, 20_000);
        let h = (hi - lo) / panels as f64;
        let log_norm = -(sd.ln() + LN_SQRT_2PI) - log_p;
        let b = -LN_2;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, w) in self.panel.nodes.iter().zip(&self.panel.weights) {
                let u = mid + 0.5 * h * x;
                let dens = (-(u - mu).powi(2) / (2.0 * v) + log_norm).exp();
                if dens == 0.0 {
                    continue;
                }
                let r = (-2.0 * u).exp().ln_1p();
                let l = b + c * u;
                let em1 = (zeta * r).exp_m1();
                let er = em1 + 1.0;
                let wd = 0.5 * h * w * dens;
                out[0] += wd * em1;
                out[1] += wd * (l * em1 + er * r);
                out[2] += wd * (l * l * em1 + er * r * (2.0 * l + r));
            }
        }
        out
    }

    /// Tensor Gauss–Hermite evaluation of `φ_j` for any constellation.
    pub fn hermite_mgf(
        &self,
        j: IsiStateIndex,
        l: usize,
        state: &DecodingState,
        c: &Constellation,
        zeta: f64,
    ) -> MgfEval {
        let r = &self.hermite;
        let n = r.len();
        let mut logs = Vec::with_capacity(n * n);
        let mut vals = Vec::with_capacity(n * n);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        for (xr, wr) in r.nodes.iter().zip(&r.weights) {
            for (xi, wi) in r.nodes.iter().zip(&r.weights) {
                let z = num_complex::Complex64::new(xr * scale, xi * scale);
                let ell = -conditional_info_density(j, z, state, l, c);
                logs.push((wr * wi).ln() + zeta * ell);
                vals.push(ell);
            }
        }
        let norm = log_sum_exp(&logs);
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (lg, ell) in logs.iter().zip(&vals) {
            let p = (lg - norm).exp();
            d1 += p * ell;
            d2 += p * ell * ell;
        }
        MgfEval {
            log_phi: if zeta == 0.0 { 0.0 } else { norm },
            d1,
            d2,
        }
    }

    /// Per-symbol conditional MGF `φ_j` of block `l`.
    pub fn conditional_mgf(
        &self,
        j: IsiStateIndex,
        l: usize,
        state: &DecodingState,
        c: &Constellation,
        zeta: f64,
    ) -> Result<MgfEval> {
        let eval = if self.method == Method::Auto && c.is_antipodal_real() {
            let pr = BpskProjection::new(j, state, l, c);
            self.projected_mgf(pr.signed_mean(), pr.v, zeta)
        } else {
            self.hermite_mgf(j, l, state, c, zeta)
        };
        if !eval.is_finite() {
            return Err(Error::NonFiniteMgf {
                zeta,
                s: state.s,
                state: j.label(),
            });
        }
        Ok(eval)
    }

    /// Block MGF through the Markov-chain recursion.
    pub fn block_mgf_generic(
        &self,
        l: usize,
        state: &DecodingState,
        c: &Constellation,
        ns: usize,
        zeta: f64,
    ) -> Result<MgfEval> {
        let u = c.size();
        let evals = (0..u * u)
            .map(|j| self.conditional_mgf(IsiStateIndex(j), l, state, c, zeta))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine_markov(&evals, u, ns))
    }

    /// Block MGF for antipodal BPSK using the two distinct state MGFs.
    pub fn block_mgf_bpsk(
        &self,
        l: usize,
        state: &DecodingState,
        c: &Constellation,
        ns: usize,
        zeta: f64,
    ) -> Result<MgfEval> {
        let e1 = self.conditional_mgf(IsiStateIndex(0), l, state, c, zeta)?;
        let e2 = self.conditional_mgf(IsiStateIndex(1), l, state, c, zeta)?;
        Ok(combine_bpsk(&e1, &e2, ns))
    }

    /// Block MGF with the fastest applicable path.
    pub fn block_mgf(
        &self,
        l: usize,
        state: &DecodingState,
        c: &Constellation,
        ns: usize,
        zeta: f64,
    ) -> Result<MgfEval> {
        if c.is_antipodal_real() {
            self.block_mgf_bpsk(l, state, c, ns, zeta)
        } else {
            self.block_mgf_generic(l, state, c, ns, zeta)
        }
    }

    /// `κ(ζ)`, `μ(ζ)` and `σ²(ζ)` summed over the blocks of `state`.
    pub fn cgf(&self, state: &DecodingState, c: &Constellation, ns: usize, zeta: f64) -> Result<Cgf> {
        let mut kappa = 0.0;
        let mut mu = 0.0;
        let mut var = 0.0;
        for l in 0..state.nb() {
            let e = self.block_mgf(l, state, c, ns, zeta)?;
            kappa += e.log_phi;
            mu += e.d1;
            var += e.d2 - e.d1 * e.d1;
        }
        let n = state.nb() as f64;
        Ok(Cgf {
            kappa,
            mu: mu / n,
            sigma2: var / n,
        })
    }

    /// Checks finiteness of `κ` and its derivatives on a grid over
    /// `[−ζ₀, ζ₀]`, logging a warning for any failure. Returns whether every
    /// point was finite.
    pub fn check_window(&self, state: &DecodingState, c: &Constellation, ns: usize, zeta0: f64) -> bool {
        let mut ok = true;
        for i in 0..=40 {
            let z = -zeta0 + 2.0 * zeta0 * i as f64 / 40.0;
            match self.cgf(state, c, ns, z) {
                Ok(g) if g.kappa.is_finite() && g.mu.is_finite() && g.sigma2.is_finite() => {}
                _ => {
                    log::warn!("MGF not finite at zeta = {z} (s = {})", state.s);
                    ok = false;
                }
            }
        }
        ok
    }
}

/// Cumulant generating function and its scaled derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cgf {
    pub kappa: f64,
    pub mu: f64,
    pub sigma2: f64,
}

/// `[P]_{ij} = (1/u)·1{x_{j1} = x_{i2}}` over pair states.
pub fn transition_matrix(u: usize) -> DMatrix<f64> {
    assert!(u >= 2);
    let n = u * u;
    DMatrix::from_fn(n, n, |i, j| {
        if IsiStateIndex(j).prev(u) == IsiStateIndex(i).cur(u) {
            1.0 / u as f64
        } else {
            0.0
        }
    })
}

/// `νᵀ P(ζ)^{ns−1} 1` with first and second derivatives, from per-state
/// evaluations. Runs the forward recursion with per-step renormalization.
pub fn combine_markov(evals: &[MgfEval], u: usize, ns: usize) -> MgfEval {
    assert_eq!(evals.len(), u * u);
    assert!(ns >= 1);
    let n = u * u;
    let shift = evals.iter().map(|e| e.log_phi).fold(f64::NEG_INFINITY, f64::max);
    let f0: Vec<f64> = evals.iter().map(|e| (e.log_phi - shift).exp()).collect();
    let f1: Vec<f64> = evals.iter().zip(&f0).map(|(e, f)| f * e.d1).collect();
    let f2: Vec<f64> = evals.iter().zip(&f0).map(|(e, f)| f * e.d2).collect();

    let init = 1.0 / n as f64;
    let mut w0: Vec<f64> = f0.iter().map(|f| f * init).collect();
    let mut w1: Vec<f64> = f1.iter().map(|f| f * init).collect();
    let mut w2: Vec<f64> = f2.iter().map(|f| f * init).collect();
    let mut log_scale = shift;
    let inv_u = 1.0 / u as f64;
    let mut n0 = vec![0.0; n];
    let mut n1 = vec![0.0; n];
    let mut n2 = vec![0.0; n];
    for _ in 1..ns {
        let s: f64 = w0.iter().sum();
        for k in 0..n {
            w0[k] /= s;
            w1[k] /= s;
            w2[k] /= s;
        }
        log_scale += s.ln() + shift;
        // Sum of each row block over the predecessor states that end in the
        // same symbol.
        for prev_sym in 0..u {
            let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
            for i in 0..n {
                if IsiStateIndex(i).cur(u) == prev_sym {
                    a0 += w0[i];
                    a1 += w1[i];
                    a2 += w2[i];
                }
            }
            for cur in 0..u {
                let j = IsiStateIndex::new(prev_sym, cur, u).0;
                n0[j] = inv_u * a0 * f0[j];
                n1[j] = inv_u * (a1 * f0[j] + a0 * f1[j]);
                n2[j] = inv_u * (a2 * f0[j] + 2.0 * a1 * f1[j] + a0 * f2[j]);
            }
        }
        std::mem::swap(&mut w0, &mut n0);
        std::mem::swap(&mut w1, &mut n1);
        std::mem::swap(&mut w2, &mut n2);
    }
    let s0: f64 = w0.iter().sum();
    let s1: f64 = w1.iter().sum();
    let s2: f64 = w2.iter().sum();
    MgfEval {
        log_phi: log_scale + s0.ln(),
        d1: s1 / s0,
        d2: s2 / s0,
    }
}

/// `((φ₁ + φ₂)/2)^{ns}` with derivatives.
pub fn combine_bpsk(e1: &MgfEval, e2: &MgfEval, ns: usize) -> MgfEval {
    let lse = log_sum_exp(&[e1.log_phi, e2.log_phi]);
    let w1 = (e1.log_phi - lse).exp();
    let w2 = (e2.log_phi - lse).exp();
    let r1 = w1 * e1.d1 + w2 * e2.d1;
    let r2 = w1 * e1.d2 + w2 * e2.d2;
    let n = ns as f64;
    MgfEval {
        log_phi: n * (lse - LN_2),
        d1: n * r1,
        d2: n * r2 + n * (n - 1.0) * r1 * r1,
    }
}
