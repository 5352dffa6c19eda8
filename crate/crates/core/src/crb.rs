//! Cramér–Rao bounds for the gains and delays, treating them as
//! deterministic unknowns observed through the noisy pilot samples.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::waveform::{
    noiseless_samples, upsampled_pilot_vector, ChannelRealization, DelayModel, PilotSequence,
    SystemConfig,
};

/// Fractional delays closer than this to the lattice are treated as lattice
/// points, where the mean is not differentiable.
pub const LATTICE_TOL: f64 = 1e-9;

/// Diagonal of the inverse Fisher matrix, grouped by parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbBounds {
    /// One entry per block (Independent) or a single entry (FullyDependent).
    pub delay: Vec<f64>,
    /// Bound on `E|ĥ_ℓ − h_ℓ|²` per block.
    pub channel: Vec<f64>,
}

/// Stacked noise-free pilot observations of all blocks, `μ(θ)`.
pub fn mean_vector(
    h: &[Complex64],
    d: &[f64],
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Vec<Complex64> {
    h.iter()
        .zip(d)
        .flat_map(|(&hl, &dl)| noiseless_samples(&pilot.symbols, hl, dl, cfg))
        .collect()
}

/// Partial derivatives of `μ(θ)` with respect to `Re h`, `Im h` and the
/// delay parameter(s), in that order.
pub fn mean_vector_derivatives(
    ch: &ChannelRealization,
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<Vec<Vec<Complex64>>> {
    let nb = ch.h.len();
    let m = cfg.obs_len();
    for l in 0..nb {
        let e = ch.e(l);
        if e < LATTICE_TOL {
            return Err(Error::LatticeDelay { block: l, e });
        }
    }
    let mut v_blocks = Vec::with_capacity(nb);
    let mut w_blocks = Vec::with_capacity(nb);
    for l in 0..nb {
        let (q, e) = (ch.q(l), ch.e(l));
        let a = upsampled_pilot_vector(pilot, q, cfg)?;
        let b = upsampled_pilot_vector(pilot, q + 1, cfg)?;
        v_blocks.push(
            a.iter()
                .zip(&b)
                .map(|(x, y)| (1.0 - e) * x + e * y)
                .collect::<Vec<f64>>(),
        );
        w_blocks.push(b.iter().zip(&a).map(|(y, x)| y - x).collect::<Vec<f64>>());
    }

    let placed = |l: usize, f: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); nb * m];
        for i in 0..m {
            out[l * m + i] = f(i);
        }
        out
    };

    let mut derivs = Vec::with_capacity(3 * nb);
    for l in 0..nb {
        derivs.push(placed(l, &|i| Complex64::new(v_blocks[l][i], 0.0)));
    }
    for l in 0..nb {
        derivs.push(placed(l, &|i| Complex64::new(0.0, v_blocks[l][i])));
    }
    let delay_cols: Vec<Vec<Complex64>> = (0..nb)
        .map(|l| placed(l, &|i| ch.h[l] * w_blocks[l][i]))
        .collect();
    match cfg.delay_model {
        DelayModel::Independent => derivs.extend(delay_cols),
        DelayModel::FullyDependent => {
            let mut sum = vec![Complex64::new(0.0, 0.0); nb * m];
            for col in &delay_cols {
                for (s, c) in sum.iter_mut().zip(col) {
                    *s += c;
                }
            }
            derivs.push(sum);
        }
    }
    Ok(derivs)
}

/// `J_mn = 2 Re(∂_m μᴴ ∂_n μ)`.
pub fn fisher_matrix(derivs: &[Vec<Complex64>]) -> DMatrix<f64> {
    let k = derivs.len();
    let mut j = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = derivs[a]
                .iter()
                .zip(&derivs[b])
                .map(|(x, y)| (x.conj() * y).re)
                .sum();
            j[(a, b)] = 2.0 * s;
            j[(b, a)] = 2.0 * s;
        }
    }
    j
}

/// Ratio of extreme eigenvalue magnitudes of a symmetric matrix.
pub fn condition_number(j: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(j.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// CRBs for one realization.
pub fn crb_bounds(
    ch: &ChannelRealization,
    pilot: &PilotSequence,
    cfg: &SystemConfig,
) -> Result<CrbBounds> {
    let nb = ch.h.len();
    let derivs = mean_vector_derivatives(ch, pilot, cfg)?;
    let j = fisher_matrix(&derivs);
    let cond = condition_number(&j);
    if !(cond < 1e14) {
        return Err(Error::SingularFisher { condition: cond });
    }
    let inv = j
        .clone()
        .try_inverse()
        .ok_or(Error::SingularFisher { condition: cond })?;
    let channel = (0..nb).map(|l| inv[(l, l)] + inv[(l + nb, l + nb)]).collect();
    let delay = (2 * nb..derivs.len()).map(|k| inv[(k, k)]).collect();
    Ok(CrbBounds { delay, channel })
}
