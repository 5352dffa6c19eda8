//! Saddlepoint approximation of the conditional RCUs error probability, a
//! direct Monte-Carlo reference for it, and the outer average over channel,
//! delay and estimation randomness.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::DelayEstimator;
use crate::infodensity::{info_density, BpskProjection, DecodingState, IsiStateIndex};
use crate::mgf::{Cgf, MgfEngine};
use crate::special::{log_cosh, log_q, log_sum_exp, scaled_q, CompensatedSum};
use crate::waveform::{
    complex_normal, make_pilot_sequence, sample_pilot_observation, ChannelRealization,
    Constellation, DelayModel, PilotSequence, SystemConfig,
};

/// Which expression of the three-branch approximation applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `0 ≤ ζ* ≤ 1`.
    Mid,
    /// `ζ* > 1`.
    High,
    /// `ζ* < 0`.
    Low,
}

/// Saddle pinned at an end of the search window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Saturation {
    None,
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleResult {
    pub zeta_star: f64,
    pub branch: Branch,
    pub saturation: Saturation,
    /// `κ`, `μ`, `σ²` at `ζ*`.
    pub cgf: Cgf,
    pub eps_cond: f64,
    /// The raw expression fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

/// Saddle solver and branch evaluation for one constellation and block
/// structure.
#[derive(Debug, Clone)]
pub struct SaddlepointSolver {
    pub engine: MgfEngine,
    pub constellation: Constellation,
    /// Data symbols per block.
    pub ns: usize,
    /// Channel uses per block; the per-block rate target is `nc·R`.
    pub nc: usize,
    pub zeta0: f64,
}

impl SaddlepointSolver {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self {
            engine: MgfEngine::default(),
            constellation: cfg.constellation(),
            ns: cfg.ns(),
            nc: cfg.nc,
            zeta0: 2.0,
        }
    }

    pub fn cgf(&self, state: &DecodingState, zeta: f64) -> Result<Cgf> {
        self.engine.cgf(state, &self.constellation, self.ns, zeta)
    }

    /// Solves `−μ(ζ) = nc·R` by Newton steps safeguarded with bisection on
    /// `[−ζ₀, ζ₀]`.
    pub fn solve_saddle(&self, state: &DecodingState, rate_nats: f64) -> Result<(f64, Cgf, Saturation)> {
        let target = self.nc as f64 * rate_nats;
        let z0 = self.zeta0;
        let resid = |g: &Cgf| -g.mu - target;
        let (mut lo, mut hi) = (-z0, z0);
        let (mut lo_known, mut hi_known) = (false, false);
        let mut z = 0.5f64.min(z0);
        let mut last: Option<(f64, Cgf)> = None;
        for _ in 0..200 {
            let g = self.cgf(state, z)?;
            if g.sigma2 < -1e-9 * (1.0 + g.mu.abs()) {
                return Err(Error::NonMonotone { zeta: z });
            }
            let f = resid(&g);
            if f > 0.0 {
                lo = z;
                lo_known = true;
            } else {
                hi = z;
                hi_known = true;
            }
            if let Some((zp, _)) = last {
                if (z - zp).abs() < 1e-11 || f.abs() < 1e-13 * (1.0 + target) {
                    return Ok((z, g, Saturation::None));
                }
            }
            last = Some((z, g));
            let mut next = if g.sigma2 > 0.0 { z + f / g.sigma2 } else { f64::NAN };
            if (next - z).abs() < 1e-10 && next > lo && next < hi {
                return Ok((z, g, Saturation::None));
            }
            if !(next > lo && next < hi) {
                if next >= hi && !hi_known || (next.is_nan() && f > 0.0 && !hi_known) {
                    let ge = self.cgf(state, z0)?;
                    if resid(&ge) > 0.0 {
                        return Ok((z0, ge, Saturation::High));
                    }
                    hi = z0;
                    hi_known = true;
                } else if next <= lo && !lo_known || (next.is_nan() && f <= 0.0 && !lo_known) {
                    let ge = self.cgf(state, -z0)?;
                    if resid(&ge) <= 0.0 {
                        return Ok((-z0, ge, Saturation::Low));
                    }
                    lo = -z0;
                    lo_known = true;
                }
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
            }
            if hi - lo < 1e-12 {
                return Ok((z, g, Saturation::None));
            }
            z = next;
        }
        let (z, g) = last.expect("at least one iteration");
        Ok((z, g, Saturation::None))
    }

    /// Conditional error probability of the RCUs bound given `state`.
    pub fn conditional_eps(&self, state: &DecodingState, rate_nats: f64) -> Result<SaddleResult> {
        let (zeta, cgf, saturation) = self.solve_saddle(state, rate_nats)?;
        let n = state.nb() as f64;
        let target = self.nc as f64 * rate_nats;
        if saturation == Saturation::Low {
            return Ok(SaddleResult {
                zeta_star: zeta,
                branch: Branch::Low,
                saturation,
                cgf,
                eps_cond: 1.0,
                clamped: false,
            });
        }
        let (branch, raw) = if zeta > 1.0 {
            let g1 = self.cgf(state, 1.0)?;
            (Branch::High, high_branch(&g1, n, target))
        } else if zeta >= 0.0 {
            (Branch::Mid, mid_branch(&cgf, zeta, n))
        } else {
            (Branch::Low, low_branch(&cgf, zeta, n))
        };
        if raw.is_nan() {
            return Err(Error::NonFiniteMgf { zeta, s: state.s, state: 0 });
        }
        let clamped = !(0.0..=1.0).contains(&raw);
        Ok(SaddleResult {
            zeta_star: zeta,
            branch,
            saturation,
            cgf,
            eps_cond: raw.clamp(0.0, 1.0),
            clamped,
        })
    }
}

/// `e^{κ − nζμ}[e^{β_ζ²/2}Q(β_ζ) + e^{β_{1−ζ}²/2}Q(β_{1−ζ})]`.
pub fn mid_branch(g: &Cgf, zeta: f64, n: f64) -> f64 {
    let root = (n * g.sigma2.max(0.0)).sqrt();
    let bracket = scaled_q(zeta * root) + scaled_q((1.0 - zeta) * root);
    (g.kappa - n * zeta * g.mu + bracket.ln()).exp()
}

/// `1 − e^{κ − nζμ}[e^{β_{−ζ}²/2}Q(β_{−ζ}) − e^{β_{1−ζ}²/2}Q(β_{1−ζ})]`.
pub fn low_branch(g: &Cgf, zeta: f64, n: f64) -> f64 {
    let root = (n * g.sigma2.max(0.0)).sqrt();
    let bracket = scaled_q(-zeta * root) - scaled_q((1.0 - zeta) * root);
    1.0 - (g.kappa - n * zeta * g.mu).exp() * bracket
}

/// Tilted at `ζ = 1`: `e^{κ(1) + nR}[Ψ(1, 1) + Ψ(0, −1)]`, where `R` is the
/// per-block target and `g1` the CGF at one.
pub fn high_branch(g1: &Cgf, n: f64, target: f64) -> f64 {
    let s = (n * g1.sigma2.max(0.0)).sqrt();
    let a = n * (g1.mu + target);
    if s < 1e-150 {
        // deterministic information density: only one of the two terms survives
        return if a <= 0.0 {
            (g1.kappa + n * target).exp()
        } else {
            (g1.kappa - n * g1.mu).exp()
        };
    }
    let t_tail = g1.kappa + n * target + log_q(a / s);
    let t_body = g1.kappa - n * g1.mu + 0.5 * n * g1.sigma2 + log_q(s - a / s);
    log_sum_exp(&[t_tail, t_body]).exp()
}

/// Monte-Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub eps_hat: f64,
    pub stderr: f64,
}

/// Direct simulation of `P[log Υ + Σ_ℓ Σ_k i_s ≤ nb·nc·R]` given `state`.
pub fn rcus_mc_oracle(
    state: &DecodingState,
    cfg: &SystemConfig,
    n_samples: usize,
    seed: u64,
) -> McEstimate {
    const CHUNK: usize = 1 << 14;
    let c = cfg.constellation();
    let ns = cfg.ns();
    let threshold = (state.nb() * cfg.nc) as f64 * cfg.rate_nats;
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ci as u64);
            let len = CHUNK.min(n_samples - ci * CHUNK);
            (0..len)
                .filter(|_| {
                    let total = sample_info_sum(state, &c, ns, &mut rng);
                    let log_u = rng.gen::<f64>().ln();
                    log_u + total <= threshold
                })
                .count()
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    McEstimate {
        eps_hat: p,
        stderr: (p * (1.0 - p) / n_samples as f64).sqrt(),
    }
}

/// One draw of `Σ_ℓ I_ℓ` under the ISI model.
pub fn sample_info_sum<R: Rng + ?Sized>(
    state: &DecodingState,
    c: &Constellation,
    ns: usize,
    rng: &mut R,
) -> f64 {
    let u = c.size();
    let mut total = 0.0;
    if c.is_antipodal_real() {
        // i_s = σt − log cosh t with t ~ N(m_j, v)
        for l in 0..state.nb() {
            let proj: Vec<BpskProjection> =
                (0..4).map(|j| BpskProjection::new(IsiStateIndex(j), state, l, c)).collect();
            let sd = proj[0].v.sqrt();
            let mut prev = rng.gen_range(0..2);
            for _ in 0..ns {
                let cur = rng.gen_range(0..2);
                let p = &proj[prev * 2 + cur];
                let g: f64 = rng.sample(StandardNormal);
                let t = p.m + sd * g;
                total += p.sigma * t - log_cosh(t);
                prev = cur;
            }
        }
        return total;
    }
    for l in 0..state.nb() {
        let mut prev = rng.gen_range(0..u);
        for _ in 0..ns {
            let cur = rng.gen_range(0..u);
            let (xp, xc) = (c.points()[prev], c.points()[cur]);
            let y = state.h[l] * (xc * state.delta[l] + xp * (1.0 - state.delta[l]))
                + complex_normal(rng);
            total += info_density(xc, y, state.h_hat[l], state.s, c);
            prev = cur;
        }
    }
    total
}

/// How the receiver obtains `ĥ` and `d̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorMode {
    PerBlock,
    Joint,
    /// True delay known, channel estimated from the pilots.
    PerfectSyncPilotCsi,
    /// True delay and channel known.
    PerfectAll,
    /// `ĥ = h`, `d̂ ~ N(d, σ_d²)`; the field is `σ_d²/tp²`.
    SyntheticDelay { sigma2_over_tp2: f64 },
}

impl EstimatorMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::PerBlock => "per_block",
            EstimatorMode::Joint => "joint",
            EstimatorMode::PerfectSyncPilotCsi => "perfect_sync_pilot_csi",
            EstimatorMode::PerfectAll => "perfect_all",
            EstimatorMode::SyntheticDelay { .. } => "synthetic_delay",
        }
    }
}

/// Outcome of the estimation phase of one outer trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialState {
    pub h: Vec<Complex64>,
    pub h_hat: Vec<Complex64>,
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
}

impl TrialState {
    /// Some block is off by more than one symbol period.
    pub fn sync_failed(&self, tp: f64) -> bool {
        self.d.iter().zip(&self.d_hat).any(|(d, dh)| (dh - d).abs() > tp)
    }

    pub fn decoding_state(&self, tp: f64, s: f64) -> DecodingState {
        DecodingState {
            h: self.h.clone(),
            h_hat: self.h_hat.clone(),
            delta: self
                .d
                .iter()
                .zip(&self.d_hat)
                .map(|(d, dh)| (1.0 - (dh - d).abs() / tp).clamp(0.0, 1.0))
                .collect(),
            s,
        }
    }
}

/// Per-trial seed derived from the master seed.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

/// Draws channel, delay and estimates for trial `index`.
pub fn draw_trial(
    cfg: &SystemConfig,
    mode: EstimatorMode,
    pilot: Option<&PilotSequence>,
    estimator: Option<&DelayEstimator>,
    master: u64,
    index: usize,
) -> TrialState {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master, index));
    let ch = ChannelRealization::sample(cfg, &mut rng);
    let tp = cfg.tp();
    let observe = |rng: &mut ChaCha8Rng| -> Vec<Vec<Complex64>> {
        let p = pilot.expect("pilot-based mode needs pilots");
        (0..cfg.nb)
            .map(|l| sample_pilot_observation(&ch, l, p, cfg, rng).y)
            .collect()
    };
    let (h_hat, d_hat) = match mode {
        EstimatorMode::PerfectAll => (ch.h.clone(), ch.d.clone()),
        EstimatorMode::SyntheticDelay { sigma2_over_tp2 } => {
            let sd = sigma2_over_tp2.sqrt() * tp;
            let d_hat = match cfg.delay_model {
                DelayModel::FullyDependent => {
                    let g: f64 = rng.sample(StandardNormal);
                    ch.d.iter().map(|d| d + sd * g).collect()
                }
                DelayModel::Independent => ch
                    .d
                    .iter()
                    .map(|d| d + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            };
            (ch.h.clone(), d_hat)
        }
        EstimatorMode::PerfectSyncPilotCsi => {
            let ys = observe(&mut rng);
            let est = estimator.expect("estimator");
            let h_hat = ys
                .iter()
                .enumerate()
                .map(|(l, y)| est.channel_at(y, ch.d[l]))
                .collect();
            (h_hat, ch.d.clone())
        }
        EstimatorMode::PerBlock | EstimatorMode::Joint => {
            let ys = observe(&mut rng);
            let est = estimator.expect("estimator");
            let r = if mode == EstimatorMode::Joint {
                est.estimate_joint(&ys)
            } else {
                est.estimate_per_block(&ys)
            };
            (r.h_hat, r.d_hat)
        }
    };
    TrialState {
        h: ch.h,
        h_hat,
        d: ch.d,
        d_hat,
    }
}

/// Draws `n_outer` trials in parallel; the result is ordered by trial index.
pub fn draw_trials(
    cfg: &SystemConfig,
    mode: EstimatorMode,
    n_outer: usize,
    master: u64,
) -> Result<Vec<TrialState>> {
    cfg.validate()?;
    let needs_pilots = matches!(
        mode,
        EstimatorMode::PerBlock | EstimatorMode::Joint | EstimatorMode::PerfectSyncPilotCsi
    );
    if mode == EstimatorMode::Joint && cfg.delay_model != DelayModel::FullyDependent {
        return Err(Error::JointNeedsCommonDelay);
    }
    let pilot = if needs_pilots {
        Some(make_pilot_sequence(cfg.np, cfg.rho)?)
    } else {
        None
    };
    let estimator = match &pilot {
        Some(p) => Some(DelayEstimator::new(p, cfg)?),
        None => None,
    };
    Ok((0..n_outer)
        .into_par_iter()
        .map(|i| draw_trial(cfg, mode, pilot.as_ref(), estimator.as_ref(), master, i))
        .collect())
}

/// Averaged packet-error bound and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PepResult {
    pub eps_pep_ub: f64,
    pub stderr: f64,
    pub sync_fail_rate: f64,
    pub n_trials: usize,
    /// Trials evaluated with the Mid, High and Low expressions.
    pub branch_counts: [usize; 3],
    pub high_saturated: usize,
    pub low_saturated: usize,
    pub clamped: usize,
}

/// Per-trial packet-error contribution: one on a sync failure, otherwise
/// the saddlepoint approximation of the conditional RCUs bound.
pub fn trial_eps(
    trial: &TrialState,
    solver: &SaddlepointSolver,
    cfg: &SystemConfig,
    s: f64,
) -> Result<Option<SaddleResult>> {
    if trial.sync_failed(cfg.tp()) {
        return Ok(None);
    }
    let st = trial.decoding_state(cfg.tp(), s);
    solver.conditional_eps(&st, cfg.rate_nats).map(Some)
}

/// Averages the bound over pre-drawn trials for a given `s`.
pub fn eps_pep_from_trials(
    trials: &[TrialState],
    solver: &SaddlepointSolver,
    cfg: &SystemConfig,
    s: f64,
) -> Result<PepResult> {
    let per_trial: Vec<Option<SaddleResult>> = trials
        .par_iter()
        .map(|t| trial_eps(t, solver, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let n = per_trial.len();
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    let mut out = PepResult {
        eps_pep_ub: 0.0,
        stderr: 0.0,
        sync_fail_rate: 0.0,
        n_trials: n,
        branch_counts: [0; 3],
        high_saturated: 0,
        low_saturated: 0,
        clamped: 0,
    };
    let mut fails = 0usize;
    for r in &per_trial {
        let eps = match r {
            None => {
                fails += 1;
                1.0
            }
            Some(r) => {
                out.branch_counts[match r.branch {
                    Branch::Mid => 0,
                    Branch::High => 1,
                    Branch::Low => 2,
                }] += 1;
                match r.saturation {
                    Saturation::High => out.high_saturated += 1,
                    Saturation::Low => out.low_saturated += 1,
                    Saturation::None => {}
                }
                out.clamped += r.clamped as usize;
                r.eps_cond
            }
        };
        sum.add(eps);
        sum_sq.add(eps * eps);
    }
    if out.high_saturated > 0 {
        log::debug!("{} trials had the saddle pinned at the upper window edge", out.high_saturated);
    }
    if n > 0 {
        let nf = n as f64;
        let mean = sum.value() / nf;
        let var = (sum_sq.value() / nf - mean * mean).max(0.0);
        out.eps_pep_ub = mean.clamp(0.0, 1.0);
        out.stderr = if n > 1 { (var * nf / (nf - 1.0) / nf).sqrt() } else { 0.0 };
        out.sync_fail_rate = fails as f64 / nf;
    }
    Ok(out)
}

/// Draws trials and averages the bound for a fixed `s`.
pub fn epsilon_pep(
    cfg: &SystemConfig,
    mode: EstimatorMode,
    s: f64,
    n_outer: usize,
    seed: u64,
) -> Result<PepResult> {
    let trials = draw_trials(cfg, mode, n_outer, seed)?;
    eps_pep_from_trials(&trials, &SaddlepointSolver::new(cfg), cfg, s)
}
