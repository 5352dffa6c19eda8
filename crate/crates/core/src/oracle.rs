//! Brute-force references used to validate the fast paths.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::infodensity::{conditional_info_density, DecodingState, IsiStateIndex};
use crate::mgf::MgfEval;
use crate::special::{log_sum_exp, CompensatedSum};
use crate::waveform::{complex_normal, upsampled_pilot_vector, Constellation, PilotSequence, SystemConfig};

/// Delay maximizing `Σ_ℓ |vᵀy_ℓ|²/‖v‖²` over a uniform grid on
/// `[0, max_shift]`, with `v` interpolated between shifted templates.
/// Returns `(d, objective)`; the first maximizer wins ties.
pub fn grid_search_delay(
    ys: &[Vec<Complex64>],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
    step: f64,
) -> (f64, f64) {
    let q_max = cfg.max_shift();
    let templates: Vec<Vec<f64>> = (0..=q_max)
        .map(|q| upsampled_pilot_vector(pilot, q, cfg).expect("shift in range"))
        .collect();
    let points = (q_max as f64 / step).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=points {
        let d = (i as f64 * step).min(q_max as f64);
        let q = (d.floor() as usize).min(q_max);
        let e = d - q as f64;
        let v: Vec<f64> = if e == 0.0 {
            templates[q].clone()
        } else {
            templates[q]
                .iter()
                .zip(&templates[q + 1])
                .map(|(a, b)| (1.0 - e) * a + e * b)
                .collect()
        };
        let energy: f64 = v.iter().map(|x| x * x).sum();
        let val: f64 = ys
            .iter()
            .map(|y| {
                let c: Complex64 = v.iter().zip(y).map(|(a, b)| b * a).sum();
                c.norm_sqr() / energy
            })
            .sum();
        if val > best.1 {
            best = (d, val);
        }
    }
    best
}

/// Block MGF by summing over every symbol path `x_0, …, x_ns`, each with
/// probability `u^{−(ns+1)}`, given the per-state MGFs.
pub fn brute_force_block_mgf(evals: &[MgfEval], u: usize, ns: usize) -> MgfEval {
    let paths = u.pow(ns as u32 + 1);
    let mut logs = Vec::with_capacity(paths);
    let mut s1s = Vec::with_capacity(paths);
    let mut vs = Vec::with_capacity(paths);
    for p in 0..paths {
        let mut digits = Vec::with_capacity(ns + 1);
        let mut r = p;
        for _ in 0..=ns {
            digits.push(r % u);
            r /= u;
        }
        let (mut lp, mut s1, mut var) = (0.0, 0.0, 0.0);
        for k in 1..=ns {
            let e = &evals[digits[k - 1] * u + digits[k]];
            lp += e.log_phi;
            s1 += e.d1;
            var += e.d2 - e.d1 * e.d1;
        }
        logs.push(lp);
        s1s.push(s1);
        vs.push(var);
    }
    let lse = log_sum_exp(&logs);
    let mut d1 = CompensatedSum::new();
    let mut d2 = CompensatedSum::new();
    for i in 0..paths {
        let w = (logs[i] - lse).exp();
        d1.add(w * s1s[i]);
        d2.add(w * (s1s[i] * s1s[i] + vs[i]));
    }
    MgfEval {
        log_phi: lse - (ns as f64 + 1.0) * (u as f64).ln(),
        d1: d1.value(),
        d2: d2.value(),
    }
}

/// Sample means of `e^{ζℓ}` and `ℓe^{ζℓ}` for `ℓ = −i_s` in ISI state `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMgf {
    pub phi: f64,
    pub phi_stderr: f64,
    pub dphi: f64,
    pub dphi_stderr: f64,
}

pub fn mc_conditional_mgf(
    j: IsiStateIndex,
    l: usize,
    state: &DecodingState,
    c: &Constellation,
    zeta: f64,
    n: usize,
    seed: u64,
) -> McMgf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s0, mut s00, mut s1, mut s11) = (
        CompensatedSum::new(),
        CompensatedSum::new(),
        CompensatedSum::new(),
        CompensatedSum::new(),
    );
    for _ in 0..n {
        let z = complex_normal(&mut rng);
        let ell = -conditional_info_density(j, z, state, l, c);
        let a = (zeta * ell).exp();
        let b = ell * a;
        s0.add(a);
        s00.add(a * a);
        s1.add(b);
        s11.add(b * b);
    }
    let nf = n as f64;
    let se = |s: f64, ss: f64| ((ss / nf - (s / nf).powi(2)).max(0.0) / (nf - 1.0)).sqrt();
    McMgf {
        phi: s0.value() / nf,
        phi_stderr: se(s0.value(), s00.value()),
        dphi: s1.value() / nf,
        dphi_stderr: se(s1.value(), s11.value()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgf::combine_markov;

    #[test]
    fn brute_force_matches_markov_recursion() {
        let evals: Vec<MgfEval> = [0.3, -0.2, 0.1, 0.05]
            .iter()
            .enumerate()
            .map(|(i, &x)| MgfEval { log_phi: x, d1: 0.1 * i as f64 - 0.2, d2: 0.5 + 0.1 * i as f64 })
            .collect();
        for ns in 1..6 {
            let a = brute_force_block_mgf(&evals, 2, ns);
            let b = combine_markov(&evals, 2, ns);
            assert!((a.log_phi - b.log_phi).abs() < 1e-12);
            assert!((a.d1 - b.d1).abs() < 1e-12);
            assert!((a.d2 - b.d2).abs() < 1e-12);
        }
    }
}
