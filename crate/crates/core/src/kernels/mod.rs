//! The radial test function φ, its reduced kernel φ̃ and the transformed
//! kernel ψ_d = H_d φ̃^{(d−1)} that enters every local statistic.

mod hilbert;
mod table;

use std::f64::consts::PI;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special::{norm, sphere_area};

pub use hilbert::hilbert_transform;
pub use table::{build_kernel_table, GridSpec, KernelTable};

/// Highest z-derivative of φ(√(z²+r²)) that may be taken under the integral.
/// φ is C^5 at the support boundary x = 1, so beyond that the boundary
/// contributions no longer vanish.
const MAX_INNER_ORDER: usize = 5;

/// A radial profile φ that is a polynomial on [0, 1] and zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    /// Coefficients of the normalized polynomial, lowest degree first.
    coeffs: Vec<f64>,
    /// Same polynomial in powers of (1 − x), accurate near the support edge.
    shifted: Vec<f64>,
    normalizing_constant: f64,
}

impl Default for TestFunction {
    /// c(56x³ + 21x² + 6x + 1)(1 − x)⁶.
    fn default() -> Self {
        let p = [1.0, 6.0, 21.0, 56.0];
        let q = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];
        let mut prod = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                prod[i + j] += a * b;
            }
        }
        Self::from_polynomial(&prod).expect("default profile is admissible")
    }
}

impl TestFunction {
    /// Normalize an unnormalized polynomial profile so that ∫₀¹ φ = 1.
    pub fn from_polynomial(raw: &[f64]) -> Result<Self> {
        let integral: f64 = raw.iter().enumerate().map(|(j, a)| a / (j as f64 + 1.0)).sum();
        if !(integral > 0.0) {
            return Err(Error::config("test_function", "profile must have positive integral"));
        }
        let c = 1.0 / integral;
        let coeffs: Vec<f64> = raw.iter().map(|a| a * c).collect();
        let mut shifted = vec![0.0; coeffs.len()];
        for (j, a) in coeffs.iter().enumerate() {
            // x^j = (1 − y)^j
            let mut binom = 1.0;
            for k in 0..=j {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                shifted[k] += a * binom * sign;
                binom = binom * (j - k) as f64 / (k + 1) as f64;
            }
        }
        let tf = Self { coeffs, shifted, normalizing_constant: c };
        let scale = tf.coeffs.iter().map(|a| a.abs()).sum::<f64>();
        if tf.coeffs.iter().sum::<f64>().abs() > 1e-12 * scale {
            return Err(Error::config("test_function", "profile must vanish at x = 1"));
        }
        if tf.coeffs.get(1).is_some_and(|a| a.abs() > 1e-12 * scale)
            || tf.coeffs.get(2).is_some_and(|a| a.abs() > 1e-12 * scale)
        {
            return Err(Error::config("test_function", "need φ'(0) = φ''(0) = 0"));
        }
        if (0..=1000).any(|i| tf.eval_poly(i as f64 / 1000.0) < -1e-12 * scale) {
            return Err(Error::config("test_function", "profile must be nonnegative on [0, 1]"));
        }
        Ok(tf)
    }

    pub fn normalizing_constant(&self) -> f64 {
        self.normalizing_constant
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    fn eval_poly(&self, x: f64) -> f64 {
        if x > 0.5 {
            let y = 1.0 - x;
            return self.shifted.iter().rev().fold(0.0, |acc, a| acc * y + a);
        }
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }

    pub fn phi(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        if x >= 1.0 {
            0.0
        } else {
            // the profile is validated nonnegative; this only strips roundoff
            self.eval_poly(x).max(0.0)
        }
    }

    /// φ_{t,h}(b) = φ(‖b − t‖/h) / (h^d |S^{d−2}|).
    pub fn bump(&self, b: &[f64], tp: &TestPoint) -> f64 {
        let d = tp.dim();
        let diff: Vec<f64> = b.iter().zip(&tp.t).map(|(x, y)| x - y).collect();
        self.phi(norm(&diff) / tp.h) / (tp.h.powi(d as i32) * sphere_area(d - 2))
    }

    /// ∂_z^m φ(√(z² + r²)) from the monomial expansion of φ.
    fn inner_deriv(&self, z: f64, r: f64, m: usize) -> f64 {
        let u = z * z + r * r;
        if u >= 1.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (j, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 || (j == 0 && m > 0) {
                continue;
            }
            let alpha = j as f64 / 2.0;
            let mut s = 0.0;
            for m2 in 0..=m / 2 {
                let m1 = m - 2 * m2;
                let p = m1 + m2;
                let fall = falling(alpha, p);
                if fall == 0.0 {
                    continue;
                }
                let comb = factorial(m) / (factorial(m1) * factorial(m2));
                s += comb * fall * u.powf(alpha - p as f64) * (2.0 * z).powi(m1 as i32);
            }
            total += a * s;
        }
        total
    }

    /// k-th derivative of φ̃(z) = ∫₀^∞ r^{d−2} ∂_z φ(√(z²+r²)) dr.
    pub fn phi_tilde_deriv(&self, z: f64, d: usize, order: usize) -> Result<f64> {
        if d < 2 {
            return Err(Error::config("d", "dimension must be at least 2"));
        }
        if order > d + 1 {
            return Err(Error::config("order", format!("order {order} exceeds d + 1 = {}", d + 1)));
        }
        if order + 1 > MAX_INNER_ORDER {
            return Err(Error::config(
                "order",
                format!("order {order} exceeds the smoothness of φ at its support boundary"),
            ));
        }
        if z.abs() >= 1.0 {
            return Ok(0.0);
        }
        let rmax = (1.0 - z * z).sqrt();
        let f = |r: f64| r.powi(d as i32 - 2) * self.inner_deriv(z, r, order + 1);
        let mut pts = vec![0.0];
        if z.abs() < rmax {
            pts.push(z.abs());
        }
        pts.push(rmax);
        quad::integrate_pieces(f, &pts, 1e-11, 1e-11)
    }

    pub fn phi_tilde(&self, z: f64, d: usize) -> f64 {
        self.phi_tilde_deriv(z, d, 0).expect("order 0 is always valid for d >= 2")
    }
}

fn falling(a: f64, p: usize) -> f64 {
    (0..p).map(|i| a - i as f64).product()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

static DEFAULT_PHI: LazyLock<TestFunction> = LazyLock::new(TestFunction::default);

/// The default profile φ(x) = c(56x³+21x²+6x+1)(1−x)⁶ on [0, 1].
pub fn default_test_function() -> &'static TestFunction {
    &DEFAULT_PHI
}

pub fn eval_phi(x: f64) -> f64 {
    DEFAULT_PHI.phi(x)
}

pub fn eval_phi_bump(b: &[f64], tp: &TestPoint) -> f64 {
    DEFAULT_PHI.bump(b, tp)
}

pub fn eval_phi_tilde(z: f64, d: usize) -> f64 {
    DEFAULT_PHI.phi_tilde(z, d)
}

pub fn eval_phi_tilde_deriv(z: f64, d: usize, order: usize) -> Result<f64> {
    DEFAULT_PHI.phi_tilde_deriv(z, d, order)
}

/// Signed constant of the Radon inversion formula.
pub fn c_d(d: usize) -> f64 {
    assert!(d >= 2, "c_d needs d >= 2");
    let base = 2f64.powi(-(d as i32)) * PI.powi(1 - d as i32);
    let inv = if d % 2 == 1 {
        if ((d - 1) / 2) % 2 == 0 { base } else { -base }
    } else if (d / 2) % 2 == 0 {
        -base
    } else {
        base
    };
    1.0 / inv
}

/// One local test: location t, scale h, unit direction v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub t: Vec<f64>,
    pub h: f64,
    pub v: Vec<f64>,
}

impl TestPoint {
    /// `v` must be unit length up to 1e−9 and is renormalized exactly.
    pub fn new(t: Vec<f64>, h: f64, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.len() < 2 {
            return Err(Error::config("test_point", "t and v need the same dimension >= 2"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::config("h", format!("scale must be positive, got {h}")));
        }
        let nv = norm(&v);
        if (nv - 1.0).abs() > 1e-9 {
            return Err(Error::config("v", format!("direction must be a unit vector, |v| = {nv}")));
        }
        let v = v.iter().map(|x| x / nv).collect();
        Ok(Self { t, h, v })
    }

    /// Same as `new` but also enforces a1 + h ≤ t ≤ a2 − h componentwise.
    pub fn in_region(t: Vec<f64>, h: f64, v: Vec<f64>, a1: &[f64], a2: &[f64]) -> Result<Self> {
        let tp = Self::new(t, h, v)?;
        if !tp.satisfies_region(a1, a2) {
            return Err(Error::config(
                "region",
                format!("t = {:?} with h = {h} violates a1 + h <= t <= a2 - h", tp.t),
            ));
        }
        Ok(tp)
    }

    pub fn satisfies_region(&self, a1: &[f64], a2: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        self.t
            .iter()
            .zip(a1.iter().zip(a2))
            .all(|(t, (lo, hi))| *t >= lo + self.h - SLACK && *t <= hi - self.h + SLACK)
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }

    pub fn flipped(&self) -> Self {
        Self { t: self.t.clone(), h: self.h, v: self.v.iter().map(|x| -x).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_values() {
        assert_eq!(eval_phi(1.0), 0.0);
        assert_eq!(eval_phi(2.0), 0.0);
        assert!((eval_phi(0.0) - 2.5).abs() < 1e-13);
        assert!((default_test_function().normalizing_constant() - 2.5).abs() < 1e-13);
    }

    #[test]
    fn phi_flat_at_origin() {
        let e = 1e-4;
        let d1 = (eval_phi(e) - eval_phi(0.0)) / e;
        assert!(d1.abs() < 1e-8, "{d1}");
        let c = default_test_function().coefficients();
        assert!(c[1].abs() < 1e-12 && c[2].abs() < 1e-12 && c[3].abs() < 1e-12);
    }

    #[test]
    fn bump_values() {
        let tp = TestPoint::new(vec![0.0, 0.0], 1.0, vec![1.0, 0.0]).unwrap();
        assert!((eval_phi_bump(&[0.0, 0.0], &tp) - 1.25).abs() < 1e-13);
        assert_eq!(eval_phi_bump(&[1.0, 0.0], &tp), 0.0);
        let tp = TestPoint::new(vec![0.2, 0.1, -0.3], 0.5, vec![0.0, 0.0, 1.0]).unwrap();
        let v = eval_phi_bump(&[0.2, 0.1, -0.3], &tp);
        // 2.5 / (0.125 · 2π)
        assert!((v - 3.183_098_861_837_907).abs() < 1e-12);
    }

    #[test]
    fn phi_tilde_support_and_parity() {
        assert_eq!(eval_phi_tilde(0.0, 2), 0.0);
        assert_eq!(eval_phi_tilde(1.5, 2), 0.0);
        assert_eq!(eval_phi_tilde_deriv(2.0, 3, 2).unwrap(), 0.0);
        for d in [2, 3] {
            for i in 1..=100 {
                let z = i as f64 / 101.0;
                for k in 0..d {
                    let a = eval_phi_tilde_deriv(z, d, k).unwrap();
                    let b = eval_phi_tilde_deriv(-z, d, k).unwrap();
                    let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                    assert!((a - sign * b).abs() < 1e-8, "d={d} k={k} z={z}");
                }
            }
        }
    }

    #[test]
    fn phi_tilde_matches_riemann_sum() {
        // midpoint rule with 10^6 panels on the d = 2 integrand
        let z: f64 = 0.5;
        let rmax = (1.0 - z * z).sqrt();
        let n = 1_000_000;
        let dr = rmax / n as f64;
        let tf = default_test_function();
        let mut s = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * dr;
            s += tf.inner_deriv(z, r, 1);
        }
        assert!((s * dr - eval_phi_tilde(z, 2)).abs() < 1e-6);
    }

    #[test]
    fn phi_tilde_d3_closed_form() {
        // in three dimensions φ̃(z) = −z φ(|z|)
        for i in 0..40 {
            let z = -0.99 + i as f64 * 0.05;
            assert!((eval_phi_tilde(z, 3) + z * eval_phi(z.abs())).abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = 1e-5;
        for d in [2, 3] {
            for k in 1..=d + 1 {
                for &z in &[0.3, -0.55, 0.8] {
                    let fd = (eval_phi_tilde_deriv(z + e, d, k - 1).unwrap()
                        - eval_phi_tilde_deriv(z - e, d, k - 1).unwrap())
                        / (2.0 * e);
                    let an = eval_phi_tilde_deriv(z, d, k).unwrap();
                    assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "d={d} k={k} z={z}: {fd} vs {an}");
                }
            }
        }
        assert!(eval_phi_tilde_deriv(0.3, 2, 4).is_err());
    }

    #[test]
    fn inversion_constants() {
        assert!((c_d(2) - 4.0 * PI).abs() < 1e-12);
        assert!((c_d(3) + 8.0 * PI * PI).abs() < 1e-11);
        assert!((c_d(5) - 32.0 * PI.powi(4)).abs() < 1e-9);
        assert!(c_d(4) < 0.0);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(TestFunction::from_polynomial(&[1.0, -1.0]).is_err()); // φ'(0) ≠ 0
        assert!(TestFunction::from_polynomial(&[1.0, 0.0, 0.0, 0.0, 0.5]).is_err()); // φ(1) ≠ 0
    }

    #[test]
    fn testpoint_validation() {
        assert!(TestPoint::new(vec![0.0, 0.0], 0.0, vec![1.0, 0.0]).is_err());
        assert!(TestPoint::new(vec![0.0, 0.0], 1.0, vec![1.0, 1.0]).is_err());
        assert!(TestPoint::in_region(vec![0.4, 0.0], 0.5, vec![1.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0]).is_ok());
        assert!(TestPoint::in_region(vec![0.6, 0.0], 0.5, vec![1.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn phi_nonnegative_and_supported(x in 0.0f64..3.0) {
            let p = eval_phi(x);
            prop_assert!(p >= -1e-15);
            if x > 1.0 { prop_assert_eq!(p, 0.0); }
        }

        #[test]
        fn phi_tilde_odd(z in -1.2f64..1.2) {
            prop_assert!((eval_phi_tilde(z, 2) + eval_phi_tilde(-z, 2)).abs() < 1e-12);
        }
    }
}
