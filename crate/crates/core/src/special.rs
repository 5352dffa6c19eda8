//! Gaussian tail functions evaluated without underflow.
//!
//! The saddlepoint expressions need `e^{x²/2} Q(x)` for arguments in the
//! tens, and the truncated-normal moments need `log Q(x)` far in the tail.
//! Both go through the Mills ratio `Q(x)/φ(x)` once `x` is large.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Switch-over point between direct `erfc` and the continued fraction.
const TAIL_SPLIT: f64 = 5.0;

/// Gaussian Q-function, `P[N(0,1) > x]`.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Mills ratio `Q(x)/φ(x)` for `x ≥ TAIL_SPLIT`, by Lentz's method on
/// `1/(x + 1/(x + 2/(x + 3/(x + …))))`.
fn mills_ratio_tail(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Mills ratio `Q(x)/φ(x)`, valid on the whole real line.
pub fn mills_ratio(x: f64) -> f64 {
    if x >= TAIL_SPLIT {
        mills_ratio_tail(x)
    } else {
        q_func(x) / normal_pdf(x)
    }
}

/// `log Q(x)`.
pub fn log_q(x: f64) -> f64 {
    if x >= TAIL_SPLIT {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio_tail(x).ln()
    } else if x > -TAIL_SPLIT {
        q_func(x).ln()
    } else {
        // Q(x) = 1 - Q(-x)
        (-q_func(-x)).ln_1p()
    }
}

/// `log Φ(x) = log Q(-x)`.
pub fn log_ndtr(x: f64) -> f64 {
    log_q(-x)
}

/// `e^{x²/2} Q(x)` for `x ≥ 0` (and moderate negative `x`).
pub fn scaled_q(x: f64) -> f64 {
    if x >= TAIL_SPLIT {
        mills_ratio_tail(x) / (2.0 * PI).sqrt()
    } else {
        (0.5 * x * x).exp() * q_func(x)
    }
}

/// Inverse Mills ratio of the upper truncation `X > a`, returned as
/// `E[X | X > a] - a` for `X ~ N(0,1)`. Stays accurate for large `a`.
pub fn upper_truncation_excess(a: f64) -> f64 {
    if a >= TAIL_SPLIT {
        // λ(a) - a = 1/(a + 2/(a + 3/(a + …)))
        let tiny = 1e-300;
        let mut f = a;
        let mut c = a;
        let mut d = 0.0;
        for k in 2..500 {
            let b = k as f64;
            d = a + b * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = a + b / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 / f
    } else {
        1.0 / mills_ratio(a) - a
    }
}

/// `log(cosh x)` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Numerically stable `log(Σ exp(v))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum; order-stable to within rounding of the
/// compensated result.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
