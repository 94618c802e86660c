//! The plug-in statistic T̂_{t,h,v}, its standard deviation σ̂_{t,h,v} and the
//! multiscale calibration terms α_h, β_h.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_density::FittedDesign;
use crate::error::{Error, Result};
use crate::geometry::{sphere_grid, SampleView, SphereGrid};
use crate::kernels::{KernelTable, TestPoint};
use crate::special::dot;

/// Smallest σ̂ accepted before the design is declared degenerate.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test_point: TestPoint,
    pub t_hat: f64,
    pub sigma_hat: f64,
    /// √n·T̂/σ̂
    pub standardized: f64,
    pub n: usize,
}

/// Statistic half with 1/f̃_Θ(Θ_i) precomputed, shared by a whole family.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    dim: usize,
    s: Vec<f64>,
    theta: Vec<f64>,
    inv_f: Vec<f64>,
}

impl PreparedSample {
    pub fn new(sample: SampleView<'_>, design: &FittedDesign) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::config("n", "statistic half is empty"));
        }
        if sample.dim != design.dim() {
            return Err(Error::config("d", "sample and design dimensions differ"));
        }
        let mut inv_f = Vec::with_capacity(sample.len());
        for i in 0..sample.len() {
            let f = design.f_theta(sample.theta_row(i));
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::Diagnostic(format!("design density is {f} at observation {i}")));
            }
            inv_f.push(1.0 / f);
        }
        Ok(Self { dim: sample.dim, s: sample.s.to_vec(), theta: sample.theta.to_vec(), inv_f })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// T̂ = (n√h)⁻¹ Σ ⟨Θ_i, v⟩/f̃_Θ(Θ_i) · ψ_d((S_i − ⟨t, Θ_i⟩)/h)
    pub fn t_hat(&self, kt: &KernelTable, tp: &TestPoint) -> Result<f64> {
        let d = self.dim;
        if kt.dim() != d || tp.dim() != d {
            return Err(Error::config("d", "sample, kernel table and test point dimensions differ"));
        }
        let inv_h = 1.0 / tp.h;
        let compact = kt.is_compact();
        let mut acc = 0.0;
        for i in 0..self.s.len() {
            let th = &self.theta[i * d..(i + 1) * d];
            let u = (self.s[i] - dot(&tp.t, th)) * inv_h;
            if compact && u.abs() >= 1.0 {
                continue;
            }
            acc += dot(th, &tp.v) * self.inv_f[i] * kt.psi(u);
        }
        Ok(acc / (self.s.len() as f64 * tp.h.sqrt()))
    }
}

pub fn t_hat(sample: SampleView<'_>, design: &FittedDesign, kt: &KernelTable, tp: &TestPoint) -> Result<f64> {
    PreparedSample::new(sample, design)?.t_hat(kt, tp)
}

/// Quadrature for σ̂: equal-weight sphere grid times a trapezoid rule in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaQuad {
    /// Sphere grid resolution; `None` picks 256 on the circle, 500 on S².
    pub sphere_resolution: Option<usize>,
    /// s-step is min(h₊, h_min)/s_divisions.
    pub s_divisions: usize,
}

impl Default for SigmaQuad {
    fn default() -> Self {
        Self { sphere_resolution: None, s_divisions: 16 }
    }
}

impl SigmaQuad {
    pub fn resolution(&self, d: usize) -> usize {
        self.sphere_resolution.unwrap_or(if d == 2 { 256 } else { 500 })
    }

    pub fn refined(&self, d: usize) -> Self {
        Self { sphere_resolution: Some(2 * self.resolution(d)), s_divisions: 2 * self.s_divisions }
    }
}

/// Plug-in densities tabulated on a sphere grid × s-grid.
///
/// f̃_{S,Θ}(·, θ) is split into its floor level b(θ) plus a compactly
/// supported excess e(s, θ), so that
/// ∫ψ(u)² f̃_{S,Θ}(c + hu, θ) du = b(θ)‖ψ‖² + h⁻¹∫ψ((s − c)/h)² e(s, θ) ds
/// with the second integral confined to the data range.
#[derive(Debug, Clone)]
pub struct SigmaContext {
    dim: usize,
    grid: SphereGrid,
    inv_f2: Vec<f64>,
    base: Vec<f64>,
    s0: f64,
    ds: f64,
    m: usize,
    excess: Vec<f64>,
    psi_norm_sq: f64,
    h_min: f64,
}

impl SigmaContext {
    pub fn new(design: &FittedDesign, kt: &KernelTable, quad: &SigmaQuad, h_min: f64) -> Result<Self> {
        let d = design.dim();
        if kt.dim() != d {
            return Err(Error::config("d", "kernel table and design dimensions differ"));
        }
        if !(h_min > 0.0) {
            return Err(Error::config("h", "scales must be positive"));
        }
        if quad.s_divisions < 2 {
            return Err(Error::config("s_divisions", "need at least 2 s-steps per bandwidth"));
        }
        let grid = sphere_grid(d, quad.resolution(d))?;
        let ext = design.s_extent();
        let step = design.h_plus().min(h_min) / quad.s_divisions as f64;
        let m = if ext > 0.0 { (2.0 * ext / step).ceil() as usize + 1 } else { 0 };
        let ds = if m > 1 { 2.0 * ext / (m - 1) as f64 } else { 0.0 };
        let s0 = -ext;
        let rows: Vec<(f64, f64, Vec<f64>)> = grid
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|th| {
                let f = design.f_theta(th);
                let slice = design.joint_slice(th);
                let b = slice.floor_level();
                let e: Vec<f64> = (0..m).map(|j| slice.eval(s0 + j as f64 * ds) - b).collect();
                (f, b, e)
            })
            .collect();
        let mut inv_f2 = Vec::with_capacity(rows.len());
        let mut base = Vec::with_capacity(rows.len());
        let mut excess = Vec::with_capacity(rows.len() * m);
        for (i, (f, b, e)) in rows.into_iter().enumerate() {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::Diagnostic(format!("design density is {f} at grid direction {i}")));
            }
            inv_f2.push(1.0 / (f * f));
            base.push(b);
            excess.extend(e);
        }
        Ok(Self { dim: d, grid, inv_f2, base, s0, ds, m, excess, psi_norm_sq: kt.psi_norm_sq(), h_min })
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    /// h⁻¹∫ψ((s − c)/h)² e(s, θ_k) ds by the trapezoid rule.
    fn excess_integral(&self, kt: &KernelTable, k: usize, c: f64, h: f64) -> f64 {
        if self.m < 2 {
            return 0.0;
        }
        let e = &self.excess[k * self.m..(k + 1) * self.m];
        let (lo, hi) = if kt.is_compact() {
            let a = ((c - h - self.s0) / self.ds).floor().max(0.0) as usize;
            let b = (((c + h - self.s0) / self.ds).ceil().max(0.0) as usize + 1).min(self.m);
            (a.min(self.m), b)
        } else {
            (0, self.m)
        };
        let inv_h = 1.0 / h;
        let mut acc = 0.0;
        for j in lo..hi {
            let ej = e[j];
            if ej == 0.0 {
                continue;
            }
            let p = kt.psi((self.s0 + j as f64 * self.ds - c) * inv_h);
            let w = if j == 0 || j == self.m - 1 { 0.5 } else { 1.0 };
            acc += w * p * p * ej;
        }
        acc * self.ds * inv_h
    }

    pub fn sigma_hat(&self, kt: &KernelTable, tp: &TestPoint) -> Result<f64> {
        if tp.dim() != self.dim {
            return Err(Error::config("d", "test point dimension differs from the design"));
        }
        let mut acc = 0.0;
        for (k, th) in self.grid.iter().enumerate() {
            let a = dot(th, &tp.v);
            if a == 0.0 {
                continue;
            }
            let c = dot(&tp.t, th);
            let inner = self.base[k] * self.psi_norm_sq + self.excess_integral(kt, k, c, tp.h);
            acc += a * a * self.inv_f2[k] * inner;
        }
        let sigma = (acc * self.grid.weight()).sqrt();
        if !(sigma >= SIGMA_FLOOR) {
            return Err(Error::Diagnostic(format!(
                "sigma_hat = {sigma:e} at t = {:?}, h = {}: degenerate design or test point outside the data",
                tp.t, tp.h
            )));
        }
        Ok(sigma)
    }
}

pub fn sigma_hat(design: &FittedDesign, kt: &KernelTable, tp: &TestPoint, quad: &SigmaQuad) -> Result<f64> {
    SigmaContext::new(design, kt, quad, tp.h)?.sigma_hat(kt, tp)
}

/// α_h = √((3d − 1) log(1/h)), β_h = √(log(e/h)) / log(log(e^e/h)).
/// Scales above one are treated as h = 1.
pub fn alpha_beta(h: f64, d: usize) -> (f64, f64) {
    let h = h.min(1.0);
    let l = -h.ln();
    let alpha = ((3 * d - 1) as f64 * l).sqrt();
    let beta = (1.0 + l).sqrt() / (std::f64::consts::E + l).ln();
    (alpha, beta)
}

/// T̂ and σ̂ for every point of a family, in family order.
pub fn evaluate_family(
    prepared: &PreparedSample,
    ctx: &SigmaContext,
    kt: &KernelTable,
    family: &[TestPoint],
) -> Result<Vec<StatResult>> {
    let n = prepared.len();
    family
        .par_iter()
        .map(|tp| {
            let t_hat = prepared.t_hat(kt, tp)?;
            let sigma_hat = ctx.sigma_hat(kt, tp)?;
            let standardized = (n as f64).sqrt() * t_hat / sigma_hat;
            Ok(StatResult { test_point: tp.clone(), t_hat, sigma_hat, standardized, n })
        })
        .collect()
}
