use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{c_d, hilbert_transform, TestFunction};
use crate::error::{Error, Result};
use crate::quad;

/// Number of tail moments kept for even d.
const TAIL_TERMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub u_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn default_for(d: usize) -> Self {
        if d % 2 == 0 {
            Self { u_max: 12.0, n_points: 32768 }
        } else {
            Self { u_max: 1.0, n_points: 4096 }
        }
    }
}

/// Tabulated ψ_d = H_d φ̃^{(d−1)} with linear interpolation.
///
/// For even d the values beyond the grid come from the exact far-field
/// expansion ψ(u) = (1/π) Σ_k m_k u^{−k−1}, m_k = ∫ s^k φ̃^{(d−1)}(s) ds,
/// which converges for |u| > 1.
#[derive(Debug, Clone)]
pub struct KernelTable {
    d: usize,
    u0: f64,
    du: f64,
    inv_du: f64,
    psi: Vec<f64>,
    base: Vec<f64>,
    moments: Vec<f64>,
    psi_norm_sq: f64,
    base_norm_sq: f64,
    c_d: f64,
    phi: TestFunction,
}

pub fn build_kernel_table(d: usize, grid: GridSpec) -> Result<KernelTable> {
    KernelTable::with_function(d, grid, TestFunction::default())
}

impl KernelTable {
    /// Table for dimension d with the default grid and profile.
    pub fn new(d: usize) -> Result<Self> {
        build_kernel_table(d, GridSpec::default_for(d))
    }

    pub fn with_function(d: usize, grid: GridSpec, phi: TestFunction) -> Result<Self> {
        if d < 2 {
            return Err(Error::config("d", "dimension must be at least 2"));
        }
        if grid.n_points < 16 {
            return Err(Error::config("n_points", "kernel grid too coarse"));
        }
        let even = d % 2 == 0;
        if even && grid.u_max < 8.0 {
            return Err(Error::config("u_max", "even d needs u_max >= 8"));
        }
        if grid.u_max < 1.0 {
            return Err(Error::config("u_max", "grid must cover the support [-1, 1]"));
        }
        let n = grid.n_points;
        let u0 = -grid.u_max;
        let du = 2.0 * grid.u_max / (n - 1) as f64;
        let u: Vec<f64> = (0..n).map(|i| u0 + i as f64 * du).collect();
        let mut base = Vec::with_capacity(n);
        for &x in &u {
            base.push(phi.phi_tilde_deriv(x, d, d - 1)?);
        }
        let trap = |v: &[f64]| -> f64 { du * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1])) };
        let base_sq: Vec<f64> = base.iter().map(|x| x * x).collect();
        let base_norm_sq = trap(&base_sq);

        let (psi, moments, psi_norm_sq) = if even {
            let psi = hilbert_transform(&u, &base)?;
            let moments: Vec<f64> = (0..TAIL_TERMS)
                .map(|k| {
                    let w: Vec<f64> = u.iter().zip(&base).map(|(x, f)| x.powi(k as i32) * f).collect();
                    trap(&w)
                })
                .collect();
            let sq: Vec<f64> = psi.iter().map(|x| x * x).collect();
            let mut norm = trap(&sq);
            // ∫_{|u|>U} of the squared far-field series
            let big_u = grid.u_max;
            for (k, mk) in moments.iter().enumerate() {
                for (l, ml) in moments.iter().enumerate() {
                    if (k + l) % 2 == 0 {
                        let p = (k + l + 1) as f64;
                        norm += 2.0 * mk * ml / (PI * PI) * big_u.powf(-p) / p;
                    }
                }
            }
            (psi, moments, norm)
        } else {
            (base.clone(), Vec::new(), base_norm_sq)
        };

        Ok(Self {
            d,
            u0,
            du,
            inv_du: 1.0 / du,
            psi,
            base,
            moments,
            psi_norm_sq,
            base_norm_sq,
            c_d: c_d(d),
            phi,
        })
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { u_max: -self.u0, n_points: self.psi.len() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn c_d(&self) -> f64 {
        self.c_d
    }

    pub fn sign(&self) -> f64 {
        self.c_d.signum()
    }

    pub fn u_max(&self) -> f64 {
        -self.u0
    }

    /// Half-width of the region where ψ is treated as non-negligible for
    /// truncated integrals: 1 for odd d, u_max for even d.
    pub fn support(&self) -> f64 {
        if self.d % 2 == 1 { 1.0 } else { self.u_max() }
    }

    /// ψ vanishes outside [−1, 1] (odd d).
    pub fn is_compact(&self) -> bool {
        self.d % 2 == 1
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (0..self.psi.len()).map(|i| self.u0 + i as f64 * self.du).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    /// Tabulated φ̃^{(d−1)} on the same grid.
    pub fn base_values(&self) -> &[f64] {
        &self.base
    }

    pub fn psi_norm_sq(&self) -> f64 {
        self.psi_norm_sq
    }

    pub fn base_norm_sq(&self) -> f64 {
        self.base_norm_sq
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.phi
    }

    #[inline]
    pub fn psi(&self, u: f64) -> f64 {
        let x = (u - self.u0) * self.inv_du;
        let last = (self.psi.len() - 1) as f64;
        if x >= 0.0 && x <= last {
            let i = (x as usize).min(self.psi.len() - 2);
            let fr = x - i as f64;
            self.psi[i] + fr * (self.psi[i + 1] - self.psi[i])
        } else {
            self.tail(u)
        }
    }

    fn tail(&self, u: f64) -> f64 {
        if self.moments.is_empty() {
            return 0.0;
        }
        let inv = 1.0 / u;
        let mut p = inv;
        let mut s = 0.0;
        for m in &self.moments {
            s += m * p;
            p *= inv;
        }
        s / PI
    }

    /// ψ_d(u) without the table: φ̃^{(d−1)} directly for odd d, and for even
    /// d the singularity-subtracted principal value integral.
    pub fn psi_direct(&self, u: f64) -> Result<f64> {
        let d = self.d;
        let f = |s: f64| self.phi.phi_tilde_deriv(s, d, d - 1);
        if d % 2 == 1 {
            return f(u);
        }
        if u.abs() > 1.0 {
            return Ok(quad::integrate(|s| f(s).unwrap_or(f64::NAN) / (u - s), -1.0, 1.0, 1e-12, 1e-10)? / PI);
        }
        let fu = f(u)?;
        let reg = |s: f64| {
            if s == u {
                0.0
            } else {
                (f(s).unwrap_or(f64::NAN) - fu) / (u - s)
            }
        };
        let pts = [-1.0, u, 1.0];
        let body = quad::integrate_pieces(reg, &pts, 1e-12, 1e-10)?;
        let log = if u.abs() < 1.0 { ((1.0 + u) / (1.0 - u)).ln() } else { 0.0 };
        Ok((body + fu * log) / PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_dimension_is_compact() {
        let kt = KernelTable::new(3).unwrap();
        assert_eq!(kt.u_max(), 1.0);
        assert_eq!(kt.psi(1.2), 0.0);
        assert_eq!(kt.psi(-3.0), 0.0);
        assert_eq!(kt.values(), kt.base_values());
    }

    #[test]
    fn d2_decay_and_isometry() {
        let kt = KernelTable::new(2).unwrap();
        let max = kt.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (p5, p10) = (kt.psi(5.0).abs(), kt.psi(10.0).abs());
        assert!(p10 <= p5 && p5 < 0.2 * max);
        let rel = (kt.psi_norm_sq() - kt.base_norm_sq()).abs() / kt.base_norm_sq();
        assert!(rel < 1e-3, "isometry off by {rel}");
        // |ψ(u)|(1 + |u|) stays bounded along the grid and into the tail
        let worst = (0..2000).map(|i| {
            let u = -40.0 + 0.04 * i as f64;
            kt.psi(u).abs() * (1.0 + u.abs())
        });
        assert!(worst.fold(0.0, f64::max) < 10.0 * max);
    }

    #[test]
    fn tail_continuous_at_grid_edge() {
        let kt = KernelTable::new(2).unwrap();
        let e = kt.u_max();
        assert!((kt.psi(e - 1e-9) - kt.psi(e + 1e-9)).abs() < 1e-8);
        assert!((kt.psi(-e + 1e-9) - kt.psi(-e - 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn interpolation_matches_direct() {
        for d in [2, 3] {
            let kt = KernelTable::new(d).unwrap();
            let lim = if d == 2 { 14.0 } else { 1.1 };
            for i in 0..60 {
                let u = -lim + 2.0 * lim * (i as f64 + 0.3713) / 60.0;
                let err = (kt.psi(u) - kt.psi_direct(u).unwrap()).abs();
                assert!(err < 1e-4, "d={d} u={u} err={err}");
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_kernel_table(1, GridSpec::default_for(3)).is_err());
        assert!(build_kernel_table(2, GridSpec { u_max: 4.0, n_points: 8192 }).is_err());
    }
}
