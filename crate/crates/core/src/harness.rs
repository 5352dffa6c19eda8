//! Experiment driver: `s` and pilot-length optimization, SNR search for a
//! target error probability, NMSE against the CRB, and CSV output.

use std::io::Write;
use std::time::Instant;

use crate::crb::crb_bounds;
use crate::error::{Error, Result};
use crate::saddlepoint::{draw_trial, draw_trials, eps_pep_from_trials, EstimatorMode, PepResult, SaddlepointSolver, TrialState};
use crate::estimator::DelayEstimator;
use crate::waveform::{make_pilot_sequence, ChannelRealization, SystemConfig};

/// Pilot lengths tried by [`optimize_np`].
pub const NP_CANDIDATES: [usize; 5] = [3, 7, 15, 31, 63];

/// How the decoder parameter `s` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SMode {
    Fixed(f64),
    /// Once per operating point, over [`SGrid`] then golden-section.
    GridOptimized,
}

/// Log-spaced search grid for `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SGrid {
    fn default() -> Self {
        Self { lo: 0.05, hi: 4.0, points: 24 }
    }
}

impl SGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// Monte-Carlo size, seed and `s` policy shared by the drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub n_outer: usize,
    pub seed: u64,
    pub s_mode: SMode,
    pub grid: SGrid,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_outer: 100_000,
            seed: 1,
            s_mode: SMode::GridOptimized,
            grid: SGrid::default(),
        }
    }
}

/// `ε_pep` at one operating point and the `s` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub s: f64,
    pub pep: PepResult,
}

/// Minimizes the bound over `s` on the leading tenth of `trials`, then
/// evaluates the minimizer on all of them.
pub fn optimize_s_on_trials(
    trials: &[TrialState],
    solver: &SaddlepointSolver,
    cfg: &SystemConfig,
    grid: &SGrid,
) -> Result<PointResult> {
    let coarse = &trials[..(trials.len() / 10).max(1).min(trials.len())];
    let eval = |s: f64| eps_pep_from_trials(coarse, solver, cfg, s).map(|r| r.eps_pep_ub);
    let values = grid.values();
    let mut scores = Vec::with_capacity(values.len());
    for &s in &values {
        scores.push(eval(s)?);
    }
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v < scores[best] {
            best = i;
        }
    }
    let mut s_star = values[best];
    if values.len() > 1 {
        let mut a = values[best.saturating_sub(1)].ln();
        let mut b = values[(best + 1).min(values.len() - 1)].ln();
        let mut best_val = scores[best];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = eval(x1.exp())?;
        let mut f2 = eval(x2.exp())?;
        for _ in 0..14 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = eval(x1.exp())?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = eval(x2.exp())?;
            }
        }
        let (x, f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if f < best_val {
            best_val = f;
            s_star = x.exp();
        }
        log::debug!("s* = {s_star} (coarse eps {best_val:e})");
    }
    Ok(PointResult {
        s: s_star,
        pep: eps_pep_from_trials(trials, solver, cfg, s_star)?,
    })
}

/// Draws `n_outer` trials and returns the `s`-optimized bound.
pub fn optimize_s(
    cfg: &SystemConfig,
    mode: EstimatorMode,
    grid: &SGrid,
    n_outer: usize,
    seed: u64,
) -> Result<PointResult> {
    let trials = draw_trials(cfg, mode, n_outer, seed)?;
    optimize_s_on_trials(&trials, &SaddlepointSolver::new(cfg), cfg, grid)
}

/// Bound at one operating point under the configured `s` policy.
pub fn evaluate_point(cfg: &SystemConfig, mode: EstimatorMode, opts: &EvalOptions) -> Result<PointResult> {
    match opts.s_mode {
        SMode::Fixed(s) => {
            let trials = draw_trials(cfg, mode, opts.n_outer, opts.seed)?;
            Ok(PointResult {
                s,
                pep: eps_pep_from_trials(&trials, &SaddlepointSolver::new(cfg), cfg, s)?,
            })
        }
        SMode::GridOptimized => optimize_s(cfg, mode, &opts.grid, opts.n_outer, opts.seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpSearch {
    pub np_star: usize,
    pub point: PointResult,
    pub candidates: Vec<(usize, PointResult)>,
}

/// Pilot length minimizing the bound, with `s` chosen per candidate.
pub fn optimize_np(cfg: &SystemConfig, mode: EstimatorMode, opts: &EvalOptions) -> Result<NpSearch> {
    let mut candidates = Vec::new();
    for np in NP_CANDIDATES.into_iter().filter(|&np| np < cfg.nc) {
        let c = SystemConfig { np, ..cfg.clone() };
        candidates.push((np, evaluate_point(&c, mode, opts)?));
    }
    let mut best: Option<&(usize, PointResult)> = None;
    for cand in &candidates {
        if best.map_or(true, |b| cand.1.pep.eps_pep_ub < b.1.pep.eps_pep_ub) {
            best = Some(cand);
        }
    }
    let (np_star, point) = best.cloned().ok_or(Error::NoPilotCandidates { nc: cfg.nc })?;
    Ok(NpSearch { np_star, point, candidates })
}

/// Bisection bracket and stopping width for [`snr_for_target`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSearchOptions {
    pub lo_db: f64,
    pub hi_db: f64,
    pub tol_db: f64,
}

impl Default for SnrSearchOptions {
    fn default() -> Self {
        Self { lo_db: -10.0, hi_db: 40.0, tol_db: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrTracePoint {
    pub snr_db: f64,
    pub s: f64,
    pub eps: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSearch {
    /// Midpoint of the final bracket.
    pub snr_db: f64,
    pub lo_db: f64,
    pub hi_db: f64,
    /// Every evaluated point, in evaluation order.
    pub trace: Vec<SnrTracePoint>,
}

/// Smallest SNR (dB) at which the bound reaches `target`, by bisection.
pub fn snr_for_target(
    cfg: &SystemConfig,
    mode: EstimatorMode,
    target: f64,
    opts: &EvalOptions,
    search: &SnrSearchOptions,
) -> Result<SnrSearch> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidConfig(format!("target {target} not in (0, 1)")));
    }
    let mut trace = Vec::new();
    let mut eval = |snr_db: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.set_snr_db(snr_db);
        let r = evaluate_point(&c, mode, opts)?;
        log::info!("{} at {snr_db:.3} dB: eps {:e} (s {:.4})", mode.name(), r.pep.eps_pep_ub, r.s);
        trace.push(SnrTracePoint {
            snr_db,
            s: r.s,
            eps: r.pep.eps_pep_ub,
            stderr: r.pep.stderr,
        });
        Ok(r.pep.eps_pep_ub)
    };
    let unreachable = Error::TargetUnreachable {
        target,
        lo_db: search.lo_db,
        hi_db: search.hi_db,
    };
    if eval(search.hi_db)? > target {
        return Err(unreachable);
    }
    if eval(search.lo_db)? <= target {
        return Err(unreachable);
    }
    let (mut lo, mut hi) = (search.lo_db, search.hi_db);
    while hi - lo > search.tol_db {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SnrSearch {
        snr_db: 0.5 * (lo + hi),
        lo_db: lo,
        hi_db: hi,
        trace,
    })
}

/// Estimation accuracy against the CRB over paired trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseResult {
    /// `E[(d̂ − d)²]/tp²`.
    pub nmse_delay: f64,
    /// `E|ĥ − h|² / E|h|²`.
    pub nmse_channel: f64,
    pub crb_delay: f64,
    pub crb_channel: f64,
    /// Trials with a defined CRB; the averages use these only.
    pub n_used: usize,
    pub n_trials: usize,
}

impl NmseResult {
    pub fn delay_ratio(&self) -> f64 {
        self.nmse_delay / self.crb_delay
    }

    pub fn channel_ratio(&self) -> f64 {
        self.nmse_channel / self.crb_channel
    }
}

/// NMSE of the pilot-based estimator and the matching CRB, both averaged
/// over the same realizations. Realizations on the sampling lattice are
/// skipped since the bound is undefined there.
pub fn nmse_vs_crb(cfg: &SystemConfig, mode: EstimatorMode, n_trials: usize, seed: u64) -> Result<NmseResult> {
    use rayon::prelude::*;
    cfg.validate()?;
    if !matches!(mode, EstimatorMode::PerBlock | EstimatorMode::Joint) {
        return Err(Error::InvalidConfig(format!("NMSE needs a pilot-based estimator, got {}", mode.name())));
    }
    if mode == EstimatorMode::Joint && cfg.delay_model != crate::waveform::DelayModel::FullyDependent {
        return Err(Error::JointNeedsCommonDelay);
    }
    let pilot = make_pilot_sequence(cfg.np, cfg.rho)?;
    let est = DelayEstimator::new(&pilot, cfg)?;
    // (delay sq err, delay crb, channel sq err, channel crb, |h|²), summed over blocks
    let per_trial: Vec<Option<[f64; 5]>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let t = draw_trial(cfg, mode, Some(&pilot), Some(&est), seed, i);
            let ch = ChannelRealization::new(t.h.clone(), t.d.clone(), cfg).ok()?;
            let crb = crb_bounds(&ch, &pilot, cfg).ok()?;
            let nb = t.h.len() as f64;
            let d_err: f64 = t.d.iter().zip(&t.d_hat).map(|(d, e)| (e - d).powi(2)).sum::<f64>() / nb;
            let d_crb = crb.delay.iter().sum::<f64>() / crb.delay.len() as f64;
            let h_err: f64 = t.h.iter().zip(&t.h_hat).map(|(h, e)| (e - h).norm_sqr()).sum();
            let h_crb: f64 = crb.channel.iter().sum();
            let h_pow: f64 = t.h.iter().map(|h| h.norm_sqr()).sum();
            Some([d_err, d_crb, h_err, h_crb, h_pow])
        })
        .collect();
    let mut sums = [crate::special::CompensatedSum::new(); 5];
    let mut used = 0usize;
    for v in per_trial.iter().flatten() {
        used += 1;
        for (s, x) in sums.iter_mut().zip(v) {
            s.add(*x);
        }
    }
    let s: Vec<f64> = sums.iter().map(|s| s.value()).collect();
    let tp2 = cfg.tp().powi(2);
    let n = used.max(1) as f64;
    Ok(NmseResult {
        nmse_delay: s[0] / n / tp2,
        crb_delay: s[1] / n / tp2,
        nmse_channel: s[2] / s[4],
        crb_channel: s[3] / s[4],
        n_used: used,
        n_trials,
    })
}

/// Parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    /// Upsampling rate `N`; `dmax` follows `2·tp`.
    Upsampling,
    Np,
    /// Blocks per packet with `nb·nc` held fixed.
    Nb,
    /// `σ_d²/tp²` of the synthetic delay estimator.
    SigmaD2,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::Upsampling => "N",
            SweepAxis::Np => "np",
            SweepAxis::Nb => "nb",
            SweepAxis::SigmaD2 => "sigma_d2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "snr" => SweepAxis::Snr,
            "N" | "n" | "upsampling" => SweepAxis::Upsampling,
            "np" => SweepAxis::Np,
            "nb" => SweepAxis::Nb,
            "sigma_d2" => SweepAxis::SigmaD2,
            other => return Err(Error::InvalidConfig(format!("unknown sweep axis {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// When set, each row reports the SNR reaching this bound.
    pub target_eps: Option<f64>,
    pub mode: EstimatorMode,
    pub eval: EvalOptions,
    pub search: SnrSearchOptions,
    pub optimize_np: bool,
    /// Trials for the NMSE/CRB columns; zero leaves them empty.
    pub nmse_trials: usize,
    /// Fill the `wall_time` column (breaks byte-identical reruns).
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig, axis: SweepAxis, values: Vec<f64>, mode: EstimatorMode) -> Self {
        Self {
            base,
            axis,
            values,
            target_eps: None,
            mode,
            eval: EvalOptions::default(),
            search: SnrSearchOptions::default(),
            optimize_np: false,
            nmse_trials: 0,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep values must be finite".into()));
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("sweep values must be sorted".into()));
        }
        Ok(())
    }

    /// Configuration and estimator mode at one sweep value.
    pub fn point(&self, value: f64) -> Result<(SystemConfig, EstimatorMode)> {
        let mut cfg = self.base.clone();
        let mut mode = self.mode;
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} must be a non-negative integer, got {v}", self.axis.name())))
            }
        };
        match self.axis {
            SweepAxis::Snr => cfg.set_snr_db(value),
            SweepAxis::Upsampling => {
                cfg.upsampling = as_count(value)?;
                cfg = cfg.with_default_dmax();
            }
            SweepAxis::Np => cfg.np = as_count(value)?,
            SweepAxis::Nb => {
                let total = self.base.nb * self.base.nc;
                let nb = as_count(value)?;
                if nb == 0 || total % nb != 0 {
                    return Err(Error::InvalidConfig(format!("nb = {nb} does not divide nb·nc = {total}")));
                }
                cfg.nb = nb;
                cfg.nc = total / nb;
            }
            SweepAxis::SigmaD2 => mode = EstimatorMode::SyntheticDelay { sigma2_over_tp2: value },
        }
        cfg.validate()?;
        Ok((cfg, mode))
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub axis: &'static str,
    pub value: f64,
    pub mode: &'static str,
    pub snr_db: f64,
    pub eps_pep_ub: f64,
    pub stderr: f64,
    pub sync_fail_rate: f64,
    pub s_star: f64,
    pub np_star: Option<usize>,
    pub nmse_delay: Option<f64>,
    pub nmse_channel: Option<f64>,
    pub crb_delay: Option<f64>,
    pub crb_channel: Option<f64>,
    pub branch_mid: usize,
    pub branch_high: usize,
    pub branch_low: usize,
    pub wall_time: Option<f64>,
}

pub const CSV_HEADER: [&str; 17] = [
    "axis",
    "value",
    "mode",
    "snr_dB",
    "eps_pep_ub",
    "stderr",
    "sync_fail_rate",
    "s_star",
    "np_star",
    "nmse_delay",
    "nmse_channel",
    "crb_delay",
    "crb_channel",
    "branch_mid",
    "branch_high",
    "branch_low",
    "wall_time",
];

/// Runs every sweep point in order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let start = Instant::now();
        let (mut cfg, mode) = spec.point(value)?;
        let mut np_star = None;
        if spec.optimize_np {
            let r = optimize_np(&cfg, mode, &spec.eval)?;
            cfg.np = r.np_star;
            np_star = Some(r.np_star);
        }
        if let Some(target) = spec.target_eps {
            let found = snr_for_target(&cfg, mode, target, &spec.eval, &spec.search)?;
            cfg.set_snr_db(found.snr_db);
        }
        let point = evaluate_point(&cfg, mode, &spec.eval)?;
        let nmse = if spec.nmse_trials > 0 && matches!(mode, EstimatorMode::PerBlock | EstimatorMode::Joint) {
            Some(nmse_vs_crb(&cfg, mode, spec.nmse_trials, spec.eval.seed)?)
        } else {
            None
        };
        rows.push(Row {
            axis: spec.axis.name(),
            value,
            mode: mode.name(),
            snr_db: cfg.snr_db(),
            eps_pep_ub: point.pep.eps_pep_ub,
            stderr: point.pep.stderr,
            sync_fail_rate: point.pep.sync_fail_rate,
            s_star: point.s,
            np_star,
            nmse_delay: nmse.map(|n| n.nmse_delay),
            nmse_channel: nmse.map(|n| n.nmse_channel),
            crb_delay: nmse.map(|n| n.crb_delay),
            crb_channel: nmse.map(|n| n.crb_channel),
            branch_mid: point.pep.branch_counts[0],
            branch_high: point.pep.branch_counts[1],
            branch_low: point.pep.branch_counts[2],
            wall_time: spec.timing.then(|| start.elapsed().as_secs_f64()),
        });
    }
    Ok(rows)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes the header and one record per row.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.axis.to_string(),
            num(r.value),
            r.mode.to_string(),
            num(r.snr_db),
            num(r.eps_pep_ub),
            num(r.stderr),
            num(r.sync_fail_rate),
            num(r.s_star),
            r.np_star.map(|n| n.to_string()).unwrap_or_default(),
            opt_num(r.nmse_delay),
            opt_num(r.nmse_channel),
            opt_num(r.crb_delay),
            opt_num(r.crb_channel),
            r.branch_mid.to_string(),
            r.branch_high.to_string(),
            r.branch_low.to_string(),
            opt_num(r.wall_time),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SystemConfig {
        SystemConfig {
            nb: 2,
            nc: 20,
            np: 7,
            upsampling: 2,
            ..SystemConfig::default()
        }
        .with_default_dmax()
    }

    #[test]
    fn grid_endpoints_and_single_point() {
        let g = SGrid::default().values();
        assert_eq!(g.len(), 24);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[23] - 4.0).abs() < 1e-12);
        let one = SGrid { lo: 0.7, hi: 3.0, points: 1 };
        let cfg = small();
        let r = optimize_s(&cfg, EstimatorMode::PerfectAll, &one, 20, 3).unwrap();
        assert_eq!(r.s, 0.7);
    }

    #[test]
    fn empty_sweep_gives_header_only() {
        let spec = ExperimentSpec::new(small(), SweepAxis::Snr, vec![], EstimatorMode::Joint);
        let rows = run_experiment(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("axis,value,mode,snr_dB,eps_pep_ub"));
    }

    #[test]
    fn np_candidates_respect_block_length() {
        let cfg = SystemConfig { nc: 3, np: 1, ..small() };
        let opts = EvalOptions { n_outer: 4, s_mode: SMode::Fixed(1.0), ..EvalOptions::default() };
        assert_eq!(
            optimize_np(&cfg, EstimatorMode::Joint, &opts),
            Err(Error::NoPilotCandidates { nc: 3 })
        );
    }

    #[test]
    fn unsorted_sweep_rejected() {
        let spec = ExperimentSpec::new(small(), SweepAxis::Snr, vec![3.0, 1.0], EstimatorMode::Joint);
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn nb_axis_keeps_total_length() {
        let spec = ExperimentSpec::new(SystemConfig::default(), SweepAxis::Nb, vec![4.0], EstimatorMode::Joint);
        let (cfg, _) = spec.point(4.0).unwrap();
        assert_eq!(cfg.nb * cfg.nc, 288);
    }
}
