//! Short oracle checks runnable from the command line.

use num_complex::Complex64;
use patsync::estimator::DelayEstimator;
use patsync::infodensity::{DecodingState, IsiStateIndex};
use patsync::mgf::MgfEngine;
use patsync::oracle::{brute_force_block_mgf, grid_search_delay, mc_conditional_mgf};
use patsync::saddlepoint::{rcus_mc_oracle, SaddlepointSolver};
use patsync::waveform::{make_pilot_sequence, sample_pilot_observation, Constellation};
use patsync::{ChannelRealization, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, bool, String);

fn random_state<R: Rng>(rng: &mut R, nb: usize) -> DecodingState {
    let c = |rng: &mut R| Complex64::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
    let h: Vec<Complex64> = (0..nb).map(|_| c(rng)).collect();
    DecodingState {
        h_hat: h.iter().map(|&x| x + c(rng) * 0.1).collect(),
        h,
        delta: (0..nb).map(|_| rng.gen_range(0.5..1.0)).collect(),
        s: rng.gen_range(0.2..2.0),
    }
}

fn block_mgf(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eng = MgfEngine::default();
    let c = Constellation::bpsk(3.0);
    let mut worst = 0.0f64;
    for ns in 2..=6 {
        for _ in 0..4 {
            let st = random_state(&mut rng, 1);
            let z = rng.gen_range(-1.0..1.5);
            let evals: Vec<_> = (0..4)
                .map(|j| eng.conditional_mgf(IsiStateIndex(j), 0, &st, &c, z).unwrap())
                .collect();
            let brute = brute_force_block_mgf(&evals, 2, ns);
            for e in [
                eng.block_mgf_bpsk(0, &st, &c, ns, z).unwrap(),
                eng.block_mgf_generic(0, &st, &c, ns, z).unwrap(),
            ] {
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                worst = worst
                    .max(rel(e.phi(), brute.phi()))
                    .max(rel(e.dphi(), brute.dphi()))
                    .max(rel(e.ddphi(), brute.ddphi()));
            }
        }
    }
    ("block MGF vs path enumeration", worst <= 1e-10, format!("max relative error {worst:.2e}"))
}

fn state_mgf(seed: u64) -> Check {
    let eng = MgfEngine::default();
    let c = Constellation::bpsk(2.0);
    // moderate tilt keeps the sample means well behaved
    let st = DecodingState {
        h: vec![Complex64::new(0.8, 0.3)],
        h_hat: vec![Complex64::new(0.75, 0.35)],
        delta: vec![0.8],
        s: 0.4,
    };
    let mut worst = 0.0f64;
    for z in [0.3, 0.9] {
        for j in 0..4 {
            let e = eng.conditional_mgf(IsiStateIndex(j), 0, &st, &c, z).unwrap();
            let mc = mc_conditional_mgf(IsiStateIndex(j), 0, &st, &c, z, 200_000, seed ^ j as u64);
            worst = worst
                .max((e.phi() - mc.phi).abs() / mc.phi_stderr)
                .max((e.dphi() - mc.dphi).abs() / mc.dphi_stderr);
        }
    }
    ("state MGF vs Monte Carlo", worst < 4.0, format!("max deviation {worst:.2} standard errors"))
}

fn estimator(seed: u64) -> Check {
    let cfg = SystemConfig { np: 7, nb: 2, upsampling: 4, ..SystemConfig::default() }.with_default_dmax();
    let pilot = make_pilot_sequence(cfg.np, cfg.rho).unwrap();
    let est = DelayEstimator::new(&pilot, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let ch = ChannelRealization::sample(&cfg, &mut rng);
        let ys: Vec<_> = (0..cfg.nb)
            .map(|l| sample_pilot_observation(&ch, l, &pilot, &cfg, &mut rng).y)
            .collect();
        let r = est.estimate_joint(&ys);
        let ours = patsync::estimator::objective_joint(r.q_hat[0], r.e_hat[0], &ys, &pilot, &cfg).unwrap();
        let (_, grid) = grid_search_delay(&ys, &pilot, &cfg, 1e-3);
        worst = worst.max((grid - ours) / grid);
    }
    ("estimator vs grid search", worst <= 1e-9, format!("largest grid advantage {worst:.2e}"))
}

fn saddlepoint(seed: u64) -> Check {
    let mut cfg = SystemConfig { nb: 2, nc: 8, np: 0, rate_nats: 0.05, ..SystemConfig::default() };
    cfg.set_snr_db(0.0);
    let h = vec![Complex64::new(0.9, 0.3), Complex64::new(-0.5, 0.8)];
    let st = DecodingState::perfect(h, 0.4);
    let sp = SaddlepointSolver::new(&cfg).conditional_eps(&st, cfg.rate_nats).unwrap();
    let mc = rcus_mc_oracle(&st, &cfg, 200_000, seed);
    let rel = (sp.eps_cond / mc.eps_hat - 1.0).abs();
    (
        "saddlepoint vs direct simulation",
        rel < 0.15,
        format!("{:.4e} vs {:.4e} ({:?} branch)", sp.eps_cond, mc.eps_hat, sp.branch),
    )
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![block_mgf(seed), state_mgf(seed), estimator(seed), saddlepoint(seed)]
}
