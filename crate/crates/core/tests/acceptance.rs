//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 are reported but do not fail the run; see the README.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patsync::estimator::{objective, objective_joint, DelayEstimator};
use patsync::harness::{
    evaluate_point, nmse_vs_crb, optimize_np, run_experiment, snr_for_target, EvalOptions, ExperimentSpec,
    SGrid, SMode, SnrSearchOptions, SweepAxis,
};
use patsync::infodensity::{DecodingState, IsiStateIndex};
use patsync::mgf::MgfEngine;
use patsync::oracle::{brute_force_block_mgf, grid_search_delay, mc_conditional_mgf};
use patsync::saddlepoint::{epsilon_pep, rcus_mc_oracle, EstimatorMode, SaddlepointSolver};
use patsync::waveform::{make_pilot_sequence, noiseless_samples, sample_pilot_observation, Constellation};
use patsync::{ChannelRealization, SystemConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_state(rng: &mut ChaCha8Rng, nb: usize) -> DecodingState {
    let c = |rng: &mut ChaCha8Rng| Complex64::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
    let h: Vec<Complex64> = (0..nb).map(|_| c(rng)).collect();
    DecodingState {
        h_hat: h.iter().map(|&x| x + c(rng) * 0.1).collect(),
        h,
        delta: (0..nb).map(|_| rng.gen_range(0.5..1.0)).collect(),
        s: rng.gen_range(0.2..2.0),
    }
}

fn block_mgf_vs_paths() -> Outcome {
    let eng = MgfEngine::default();
    let c = Constellation::bpsk(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let st = random_state(&mut rng, 1);
        let z = rng.gen_range(-1.0..1.5);
        let evals: Vec<_> = (0..4)
            .map(|j| eng.conditional_mgf(IsiStateIndex(j), 0, &st, &c, z).unwrap())
            .collect();
        for ns in 2..=6 {
            let brute = brute_force_block_mgf(&evals, 2, ns);
            for e in [
                eng.block_mgf_bpsk(0, &st, &c, ns, z).unwrap(),
                eng.block_mgf_generic(0, &st, &c, ns, z).unwrap(),
            ] {
                worst = worst
                    .max(rel(e.phi(), brute.phi()))
                    .max(rel(e.dphi(), brute.dphi()))
                    .max(rel(e.ddphi(), brute.ddphi()));
            }
        }
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} (limit 1e-10)"))
}

fn quadrature_vs_mc() -> Outcome {
    let eng = MgfEngine::default();
    let st = DecodingState {
        h: vec![Complex64::new(0.8, 0.3)],
        h_hat: vec![Complex64::new(0.75, 0.35)],
        delta: vec![0.8],
        s: 0.4,
    };
    let mut worst = 0.0f64;
    for (k, snr_db) in [0.0f64, 3.0, 6.0].into_iter().enumerate() {
        let c = Constellation::bpsk(10f64.powf(snr_db / 10.0));
        for (i, z) in [0.0, 0.3, 0.9].into_iter().enumerate() {
            for j in 0..4 {
                let e = eng.conditional_mgf(IsiStateIndex(j), 0, &st, &c, z).unwrap();
                let seed = 1000 * k as u64 + 10 * i as u64 + j as u64;
                let mc = mc_conditional_mgf(IsiStateIndex(j), 0, &st, &c, z, 1_000_000, seed);
                if mc.phi_stderr > 0.0 {
                    worst = worst.max((e.phi() - mc.phi).abs() / mc.phi_stderr);
                } else {
                    worst = worst.max(if e.phi() == mc.phi { 0.0 } else { f64::INFINITY });
                }
                worst = worst.max((e.dphi() - mc.dphi).abs() / mc.dphi_stderr);
            }
        }
    }
    outcome(worst <= 3.0, format!("max deviation {worst:.2} standard errors (limit 3)"))
}

fn saddlepoint_vs_mc() -> Outcome {
    let gains = [
        Complex64::new(0.9, 0.3),
        Complex64::new(-0.5, 0.8),
        Complex64::new(0.7, -0.9),
        Complex64::new(0.2, 1.1),
    ];
    // (nb, nc, snr dB, rate, s, delta, relative channel error)
    let states = [
        (4, 30, 3.0, 0.5, 1.0, 1.0, 0.0),
        (4, 30, 3.0, 0.4, 1.0, 0.9, 0.1),
        (4, 30, 6.0, 0.4, 1.0, 0.8, 0.0),
        (2, 8, 0.0, 0.05, 0.4, 1.0, 0.0),
        (2, 8, 0.0, 0.1, 0.4, 1.0, 0.0),
        (2, 8, 0.0, 0.05, 0.4, 0.8, 0.1),
        (4, 30, 3.0, 0.65, 1.0, 1.0, 0.0),
        (2, 12, 0.0, 0.35, 0.7, 0.7, 0.2),
        (2, 12, 0.0, 0.3, 0.7, 0.7, 0.2),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, &(nb, nc, snr, rate, s, delta, herr)) in states.iter().enumerate() {
        let mut cfg = SystemConfig { nb, nc, np: 0, rate_nats: rate, ..SystemConfig::default() };
        cfg.set_snr_db(snr);
        let h: Vec<Complex64> = gains.iter().copied().cycle().take(nb).collect();
        let st = DecodingState {
            h_hat: h.iter().map(|x| x * (1.0 + herr)).collect(),
            h,
            delta: vec![delta; nb],
            s,
        };
        let sp = SaddlepointSolver::new(&cfg).conditional_eps(&st, rate).unwrap();
        let mc = rcus_mc_oracle(&st, &cfg, 10_000_000, 500 + k as u64);
        let r = rel(sp.eps_cond, mc.eps_hat);
        let in_range = (1e-4..=1e-1).contains(&mc.eps_hat);
        pass &= r <= 0.15;
        lines.push(format!(
            "{:?} {:.3e} vs {:.3e} ({:.1}%{})",
            sp.branch,
            sp.eps_cond,
            mc.eps_hat,
            100.0 * r,
            if in_range { "" } else { ", outside [1e-4, 1e-1]" }
        ));
    }
    outcome(pass, lines.join("; "))
}

fn estimator_vs_grid() -> Outcome {
    let cfg = SystemConfig { nb: 2, nc: 20, np: 7, upsampling: 4, ..SystemConfig::default() }.with_default_dmax();
    let pilot = make_pilot_sequence(cfg.np, cfg.rho).unwrap();
    let est = DelayEstimator::new(&pilot, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let ch = ChannelRealization::sample(&cfg, &mut rng);
        let ys: Vec<_> = (0..cfg.nb)
            .map(|l| sample_pilot_observation(&ch, l, &pilot, &cfg, &mut rng).y)
            .collect();
        let joint = est.estimate_joint(&ys);
        let ours = objective_joint(joint.q_hat[0], joint.e_hat[0], &ys, &pilot, &cfg).unwrap();
        let (_, grid) = grid_search_delay(&ys, &pilot, &cfg, 1e-4);
        worst = worst.max((grid - ours) / grid);
        let per = est.estimate_per_block(&ys[..1]);
        let ours = objective(per.q_hat[0], per.e_hat[0], &ys[0], &pilot, &cfg).unwrap();
        let (_, grid) = grid_search_delay(&ys[..1], &pilot, &cfg, 1e-4);
        worst = worst.max((grid - ours) / grid);
    }
    let mut recovery = 0.0f64;
    for _ in 0..50 {
        let d = rng.gen_range(0.0..cfg.max_shift() as f64);
        let h = [
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ];
        let ys: Vec<_> = h.iter().map(|&hl| noiseless_samples(&pilot.symbols, hl, d, &cfg)).collect();
        let r = est.estimate_joint(&ys);
        for l in 0..2 {
            recovery = recovery.max((r.d_hat[l] - d).abs()).max((r.h_hat[l] - h[l]).norm());
        }
        let r = est.estimate_per_block(&ys[..1]);
        recovery = recovery.max((r.d_hat[0] - d).abs()).max((r.h_hat[0] - h[0]).norm());
    }
    outcome(
        worst <= 1e-9 && recovery <= 1e-9,
        format!("largest grid advantage {worst:.2e}, noise-free error {recovery:.2e} (limits 1e-9)"),
    )
}

fn nmse_vs_bound() -> Outcome {
    let mut cfg = SystemConfig { nb: 4, nc: 72, np: 7, upsampling: 10, ..SystemConfig::default() }.with_default_dmax();
    let mut pass = true;
    let mut lines = Vec::new();
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        cfg.set_snr_db(snr);
        let j = nmse_vs_crb(&cfg, EstimatorMode::Joint, 10_000, 55).unwrap();
        let p = nmse_vs_crb(&cfg, EstimatorMode::PerBlock, 10_000, 55).unwrap();
        pass &= j.nmse_delay < p.nmse_delay && j.nmse_channel < p.nmse_channel;
        if snr >= 25.0 {
            pass &= j.delay_ratio() <= 1.5 && j.channel_ratio() <= 1.5;
            lines.push(format!("{snr} dB ratios {:.3}/{:.3}", j.delay_ratio(), j.channel_ratio()));
        }
    }
    outcome(pass, format!("{}; joint below per-block at 0..30 dB: {}", lines.join(", "), pass))
}

fn delay_threshold() -> Outcome {
    let cfg = SystemConfig { np: 0, ..SystemConfig::default() };
    let opts = EvalOptions { n_outer: 100_000, seed: 66, ..EvalOptions::default() };
    let eps = |sigma2: f64| {
        evaluate_point(&cfg, EstimatorMode::SyntheticDelay { sigma2_over_tp2: sigma2 }, &opts).unwrap()
    };
    let a = eps(0.10);
    let b = eps(0.16);
    outcome(
        a.pep.eps_pep_ub < 1e-4 && b.pep.eps_pep_ub > 1e-4,
        format!(
            "eps(0.10) = {:.3e} (s {:.3}, sync failures {:.2e}), eps(0.16) = {:.3e}",
            a.pep.eps_pep_ub, a.s, a.pep.sync_fail_rate, b.pep.eps_pep_ub
        ),
    )
}

fn snr_gaps() -> Outcome {
    let cfg = SystemConfig { nb: 8, nc: 36, np: 15, upsampling: 5, ..SystemConfig::default() }.with_default_dmax();
    let opts = EvalOptions { n_outer: 2000, seed: 7, ..EvalOptions::default() };
    let search = SnrSearchOptions { tol_db: 0.1, ..SnrSearchOptions::default() };
    let snr = |mode| snr_for_target(&cfg, mode, 1e-5, &opts, &search).map(|r| r.snr_db);
    let (joint, per, perfect) = match (
        snr(EstimatorMode::Joint),
        snr(EstimatorMode::PerBlock),
        snr(EstimatorMode::PerfectSyncPilotCsi),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => return outcome(false, format!("search failed: {a:?} {b:?} {c:?}")),
    };
    let gap = per - joint;
    let loss = joint - perfect;
    outcome(
        (1.5..=5.0).contains(&gap) && loss <= 1.0,
        format!("joint {joint:.2} dB, per-block {per:.2} dB (gap {gap:.2}), perfect sync {perfect:.2} dB (gap {loss:.2})"),
    )
}

fn pilot_length() -> Outcome {
    let mut cfg = SystemConfig { nb: 4, nc: 72, ..SystemConfig::default() }.with_default_dmax();
    cfg.set_snr_db(8.45);
    let opts = EvalOptions { n_outer: 10_000, seed: 11, ..EvalOptions::default() };
    let r = optimize_np(&cfg, EstimatorMode::Joint, &opts).unwrap();
    let at15 = &r.candidates.iter().find(|(np, _)| *np == 15).unwrap().1.pep;
    let ok = r.np_star == 15 || (r.point.pep.eps_pep_ub - at15.eps_pep_ub).abs() <= 2.0 * at15.stderr;
    outcome(
        ok,
        format!("np* = {} (eps {:.3e}), np = 15 eps {:.3e} ± {:.1e}", r.np_star, r.point.pep.eps_pep_ub, at15.eps_pep_ub, at15.stderr),
    )
}

fn properties() -> Outcome {
    let eng = MgfEngine::default();
    let c = Constellation::bpsk(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut fails = Vec::new();
    for _ in 0..10 {
        let st = random_state(&mut rng, 2);
        let ns = rng.gen_range(1..30);
        let k: Vec<f64> = (0..=40).map(|i| eng.cgf(&st, &c, ns, -1.5 + 0.075 * i as f64).unwrap().kappa).collect();
        if k.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] < -1e-9 * (1.0 + w[1].abs())) {
            fails.push("convexity");
        }
        if eng.cgf(&st, &c, ns, 0.0).unwrap().kappa != 0.0 {
            fails.push("phi(0)");
        }
        let z = rng.gen_range(-1.0..1.5);
        let h = 1e-5;
        let nb = st.nb() as f64;
        let (g, gp, gm) = (
            eng.cgf(&st, &c, ns, z).unwrap(),
            eng.cgf(&st, &c, ns, z + h).unwrap(),
            eng.cgf(&st, &c, ns, z - h).unwrap(),
        );
        if ((gp.kappa - gm.kappa) / (2.0 * h) / nb - g.mu).abs() > 1e-5 * (1.0 + g.mu.abs())
            || ((gp.mu - gm.mu) / (2.0 * h) - g.sigma2).abs() > 1e-5 * (1.0 + g.sigma2.abs())
        {
            fails.push("derivatives");
        }
    }
    let cfg = SystemConfig { nb: 2, nc: 24, np: 7, upsampling: 2, ..SystemConfig::default() }.with_default_dmax();
    for mode in [EstimatorMode::PerBlock, EstimatorMode::Joint, EstimatorMode::PerfectAll] {
        let a = epsilon_pep(&cfg, mode, 0.6, 100, 3).unwrap();
        if a != epsilon_pep(&cfg, mode, 0.6, 100, 3).unwrap() {
            fails.push("determinism");
        }
    }
    let mut spec = ExperimentSpec::new(cfg, SweepAxis::Snr, vec![0.0, 4.0, 8.0], EstimatorMode::PerBlock);
    spec.eval = EvalOptions { n_outer: 100, seed: 9, s_mode: SMode::GridOptimized, grid: SGrid { points: 8, ..SGrid::default() } };
    let rows = run_experiment(&spec).unwrap();
    if rows.iter().any(|r| !(0.0..=1.0).contains(&r.eps_pep_ub) || !(0.0..=1.0).contains(&r.sync_fail_rate)) {
        fails.push("probability range");
    }
    fails.dedup();
    outcome(fails.is_empty(), if fails.is_empty() { "all checks hold".into() } else { fails.join(", ") })
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome, bool); 9] = [
        (1, block_mgf_vs_paths, true),
        (2, quadrature_vs_mc, true),
        (3, saddlepoint_vs_mc, true),
        (4, estimator_vs_grid, true),
        (5, nmse_vs_bound, true),
        (6, delay_threshold, false),
        (7, snr_gaps, false),
        (8, pilot_length, true),
        (9, properties, true),
    ];
    let mut failed = false;
    for (n, run, gating) in criteria {
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {n}: {} [{:.1} s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failed |= gating && !o.pass;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
