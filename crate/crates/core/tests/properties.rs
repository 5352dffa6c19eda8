use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use patsync::crb::{fisher_matrix, mean_vector_derivatives};
use patsync::estimator::{objective, DelayEstimator};
use patsync::infodensity::{info_density, info_density_naive, DecodingState};
use patsync::mgf::MgfEngine;
use patsync::saddlepoint::{epsilon_pep, EstimatorMode, SaddlepointSolver};
use patsync::waveform::{
    make_pilot_sequence, noiseless_samples, sample_pilot_observation, Constellation,
};
use patsync::{ChannelRealization, DelayModel, SystemConfig};

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(a, b)| Complex64::new(a, b))
}

fn state(nb: usize) -> impl Strategy<Value = DecodingState> {
    (
        prop::collection::vec(complex(), nb),
        prop::collection::vec(complex(), nb),
        prop::collection::vec(0.5f64..1.0, nb),
        0.1f64..2.0,
    )
        .prop_map(|(h, dh, delta, s)| DecodingState {
            h_hat: h.iter().zip(&dh).map(|(a, b)| a + b * 0.2).collect(),
            h,
            delta,
            s,
        })
}

fn small_cfg(nb: usize, np: usize, upsampling: usize) -> SystemConfig {
    SystemConfig {
        nb,
        nc: np + 12,
        np,
        upsampling,
        ..SystemConfig::default()
    }
    .with_default_dmax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_mgf_at_zero(st in state(3), ns in 1usize..40) {
        let g = MgfEngine::default().cgf(&st, &Constellation::bpsk(2.0), ns, 0.0).unwrap();
        prop_assert_eq!(g.kappa, 0.0);
    }

    #[test]
    fn cgf_is_convex(st in state(2), ns in 1usize..30, z in -1.5f64..1.5) {
        let eng = MgfEngine::default();
        let c = Constellation::bpsk(3.0);
        let h = 0.05;
        let k = |z: f64| eng.cgf(&st, &c, ns, z).unwrap().kappa;
        let second = k(z + h) - 2.0 * k(z) + k(z - h);
        prop_assert!(second >= -1e-9 * (1.0 + k(z).abs()), "second difference {second}");
        prop_assert!(eng.cgf(&st, &c, ns, z).unwrap().sigma2 > 0.0);
    }

    #[test]
    fn cgf_derivatives_match_finite_differences(st in state(2), ns in 1usize..20, z in -1.0f64..1.5) {
        let eng = MgfEngine::default();
        let c = Constellation::bpsk(2.0);
        let nb = st.nb() as f64;
        let h = 1e-5;
        let g = eng.cgf(&st, &c, ns, z).unwrap();
        let gp = eng.cgf(&st, &c, ns, z + h).unwrap();
        let gm = eng.cgf(&st, &c, ns, z - h).unwrap();
        let mu_fd = (gp.kappa - gm.kappa) / (2.0 * h) / nb;
        let s2_fd = (gp.mu - gm.mu) / (2.0 * h);
        prop_assert!((mu_fd - g.mu).abs() <= 1e-5 * (1.0 + g.mu.abs()), "{mu_fd} vs {}", g.mu);
        prop_assert!((s2_fd - g.sigma2).abs() <= 1e-5 * (1.0 + g.sigma2.abs()), "{s2_fd} vs {}", g.sigma2);
    }

    #[test]
    fn bpsk_and_markov_block_mgfs_agree(st in state(1), ns in 1usize..12, z in -1.0f64..1.5) {
        let eng = MgfEngine::default();
        let c = Constellation::bpsk(1.5);
        let a = eng.block_mgf_bpsk(0, &st, &c, ns, z).unwrap();
        let b = eng.block_mgf_generic(0, &st, &c, ns, z).unwrap();
        prop_assert!((a.log_phi - b.log_phi).abs() < 1e-10 * (1.0 + a.log_phi.abs()));
        prop_assert!((a.d1 - b.d1).abs() < 1e-9 * (1.0 + a.d1.abs()));
        prop_assert!((a.d2 - b.d2).abs() < 1e-9 * (1.0 + a.d2.abs()));
    }

    #[test]
    fn info_density_stable_and_bounded(y in complex(), hh in complex(), s in 0.05f64..3.0, idx in 0usize..4) {
        for c in [Constellation::bpsk(2.0), Constellation::qpsk(2.0)] {
            let x = c.points()[idx % c.size()];
            let a = info_density(x, y * 2.0, hh, s, &c);
            let b = info_density_naive(x, y * 2.0, hh, s, &c);
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a <= (c.size() as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn conditional_eps_is_probability_and_monotone(st in state(2), r1 in 0.01f64..1.0, r2 in 0.01f64..1.0) {
        let cfg = SystemConfig { nb: 2, nc: 12, np: 0, ..SystemConfig::default() };
        let solver = SaddlepointSolver::new(&cfg);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = solver.conditional_eps(&st, lo).unwrap();
        let b = solver.conditional_eps(&st, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.eps_cond));
        prop_assert!((0.0..=1.0).contains(&b.eps_cond));
        prop_assert!(b.eps_cond >= a.eps_cond * (1.0 - 1e-9));
    }

    #[test]
    fn estimator_attains_objective_maximum(seed in any::<u64>(), q in 0usize..8, e in 0.0f64..1.0) {
        let cfg = small_cfg(1, 7, 4);
        let pilot = make_pilot_sequence(cfg.np, cfg.rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelRealization::sample(&cfg, &mut rng);
        let y = sample_pilot_observation(&ch, 0, &pilot, &cfg, &mut rng).y;
        let est = DelayEstimator::new(&pilot, &cfg).unwrap();
        let r = est.estimate_per_block(std::slice::from_ref(&y));
        let best = objective(r.q_hat[0], r.e_hat[0], &y, &pilot, &cfg).unwrap();
        let q = q.min(cfg.max_shift() - 1);
        let probe = objective(q, e, &y, &pilot, &cfg).unwrap();
        prop_assert!(best >= probe * (1.0 - 1e-12), "{best} < {probe}");
    }

    #[test]
    fn noise_free_delay_recovered(q in 0usize..8, e in 0.01f64..0.99, h in complex()) {
        prop_assume!(h.norm() > 0.1);
        let cfg = small_cfg(1, 7, 4);
        let pilot = make_pilot_sequence(cfg.np, cfg.rho).unwrap();
        let d = q.min(cfg.max_shift() - 1) as f64 + e;
        let y = noiseless_samples(&pilot.symbols, h, d, &cfg);
        let r = DelayEstimator::new(&pilot, &cfg).unwrap().estimate_per_block(&[y]);
        prop_assert!((r.d_hat[0] - d).abs() < 1e-9);
        prop_assert!((r.h_hat[0] - h).norm() < 1e-9);
    }

    #[test]
    fn fisher_matrix_is_psd(seed in any::<u64>(), dependent in any::<bool>()) {
        let mut cfg = small_cfg(3, 7, 4);
        cfg.delay_model = if dependent { DelayModel::FullyDependent } else { DelayModel::Independent };
        let pilot = make_pilot_sequence(cfg.np, cfg.rho).unwrap();
        let ch = ChannelRealization::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let j = fisher_matrix(&mean_vector_derivatives(&ch, &pilot, &cfg).unwrap());
        let eig = nalgebra::SymmetricEigen::new(j.clone()).eigenvalues;
        let scale = j.diagonal().amax();
        prop_assert!(eig.iter().all(|&l| l >= -1e-9 * scale));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pep_deterministic_and_bounded(seed in any::<u64>(), snr in 0.0f64..12.0) {
        let mut cfg = small_cfg(2, 7, 2);
        cfg.set_snr_db(snr);
        for mode in [EstimatorMode::PerBlock, EstimatorMode::Joint, EstimatorMode::PerfectAll] {
            let a = epsilon_pep(&cfg, mode, 0.6, 40, seed).unwrap();
            let b = epsilon_pep(&cfg, mode, 0.6, 40, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!((0.0..=1.0).contains(&a.eps_pep_ub));
            prop_assert!((0.0..=1.0).contains(&a.sync_fail_rate));
        }
    }
}
