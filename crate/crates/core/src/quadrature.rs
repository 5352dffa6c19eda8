//! Gauss–Hermite and Gauss–Legendre rules.
//!
//! Nodes start from the eigenvalues of the Jacobi matrix and are polished by
//! Newton steps on the orthonormal three-term recurrence; weights come from
//! the Christoffel–Darboux sum, which keeps tiny tail weights accurate.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Symmetric recurrence `x p_k = b_{k+1} p_{k+1} + b_k p_{k−1}` with zero
/// diagonal, total mass `mu0`.
struct Recurrence {
    b: fn(usize) -> f64,
    mu0: f64,
}

impl Recurrence {
    /// `(p_n(x), p_n'(x), Σ_{k<n} p_k(x)²)` for the orthonormal family.
    fn eval(&self, n: usize, x: f64) -> (f64, f64, f64) {
        let mut p_prev = 0.0;
        let mut p = 1.0 / self.mu0.sqrt();
        let mut dp_prev = 0.0;
        let mut dp = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..n {
            sum_sq += p * p;
            let b_next = (self.b)(k + 1);
            let b_k = if k == 0 { 0.0 } else { (self.b)(k) };
            let p_next = (x * p - b_k * p_prev) / b_next;
            let dp_next = (p + x * dp - b_k * dp_prev) / b_next;
            p_prev = p;
            p = p_next;
            dp_prev = dp;
            dp = dp_next;
        }
        (p, dp, sum_sq)
    }

    fn rule(&self, n: usize) -> GaussRule {
        assert!(n >= 1);
        let mut jac = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (self.b)(k);
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);
        let mut weights = Vec::with_capacity(n);
        for x in &mut nodes {
            for _ in 0..3 {
                let (p, dp, _) = self.eval(n, *x);
                if dp != 0.0 {
                    *x -= p / dp;
                }
            }
            let (_, _, sum_sq) = self.eval(n, *x);
            weights.push(1.0 / sum_sq);
        }
        // exact symmetry about zero
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }
}

impl GaussRule {
    /// Physicists' Gauss–Hermite rule for weight `e^{−x²}`.
    pub fn hermite(n: usize) -> Self {
        Recurrence {
            b: |k| (k as f64 / 2.0).sqrt(),
            mu0: std::f64::consts::PI.sqrt(),
        }
        .rule(n)
    }

    /// Gauss–Legendre rule on `[−1, 1]`.
    pub fn legendre(n: usize) -> Self {
        Recurrence {
            b: |k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            mu0: 2.0,
        }
        .rule(n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hermite rule rescaled to a standard normal: returns `(x, w)` with
    /// `E[f(X)] ≈ Σ w f(x)`.
    pub fn standard_normal(n: usize) -> Self {
        let r = Self::hermite(n);
        let s = std::f64::consts::PI.sqrt();
        GaussRule {
            nodes: r.nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
            weights: r.weights.iter().map(|w| w / s).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [5usize, 20, 64, 80] {
            let r = GaussRule::standard_normal(n);
            let m = |k: i32| -> f64 { r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum() };
            assert!((m(0) - 1.0).abs() < 1e-13, "n = {n}");
            assert!((m(2) - 1.0).abs() < 1e-12);
            assert!((m(4) - 3.0).abs() < 1e-11);
            assert!(m(3).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_small_rule_exact() {
        // two-point rule: nodes ±1/√2, weights √π/2
        let r = GaussRule::hermite(2);
        assert!((r.nodes[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r.weights[0] - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_integrates_polynomials_and_exp() {
        let r = GaussRule::legendre(8);
        let int = |f: &dyn Fn(f64) -> f64| -> f64 { r.nodes.iter().zip(&r.weights).map(|(x, w)| w * f(*x)).sum() };
        assert!((int(&|_| 1.0) - 2.0).abs() < 1e-14);
        assert!((int(&|x| x.powi(14)) - 2.0 / 15.0).abs() < 1e-14);
        let want = 1f64.exp() - (-1f64).exp();
        assert!((int(&f64::exp) - want).abs() < 1e-14);
    }
}
