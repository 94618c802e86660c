//! Gaussian limit process X̂_{t,h,v}: discretized ν-noise on the cylinder,
//! Monte Carlo multiscale quantiles κ_n(α), per-test quantiles and the
//! simulation-calibrated thresholds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_dgp, DgpSpec};
use crate::design_density::{fit_design, DesignConfig, FittedDesign};
use crate::error::{Error, Result};
use crate::geometry::{normalize, sphere_grid, SphereGrid};
use crate::kernels::{KernelTable, TestPoint};
use crate::seeds::{derive_seed, rng};
use crate::special::{dot, norm};
use crate::statistics::{alpha_beta, evaluate_family, PreparedSample, SigmaContext, SigmaQuad, StatResult};

/// Resolution of the noise grid on R × S^{d−1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `None` picks 256 on the circle, 500 on S².
    pub sphere_resolution: Option<usize>,
    /// s-step is h_min / s_divisions.
    pub s_divisions: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sphere_resolution: None, s_divisions: 8 }
    }
}

impl NoiseSpec {
    pub fn resolution(&self, d: usize) -> usize {
        self.sphere_resolution.unwrap_or(if d == 2 { 256 } else { 500 })
    }

    pub fn refined(&self, d: usize) -> Self {
        Self { sphere_resolution: Some(2 * self.resolution(d)), s_divisions: 2 * self.s_divisions }
    }
}

/// Product of a sphere grid and a uniform s-grid of cell centres.
#[derive(Debug, Clone)]
pub struct CylinderGrid {
    sphere: SphereGrid,
    s0: f64,
    ds: f64,
    m: usize,
}

impl CylinderGrid {
    pub fn new(sphere: SphereGrid, s_lo: f64, s_hi: f64, m: usize) -> Result<Self> {
        if !(s_hi > s_lo) || m == 0 {
            return Err(Error::config("noise", "empty s-range for the noise grid"));
        }
        let ds = (s_hi - s_lo) / m as f64;
        Ok(Self { sphere, s0: s_lo + 0.5 * ds, ds, m })
    }

    /// Grid covering ⟨t, θ⟩ ± h·reach for every member of the family, where
    /// reach is 1 for odd d and the kernel grid half-width for even d.
    pub fn for_family(kt: &KernelTable, family: &[TestPoint], spec: &NoiseSpec) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::config("family", "empty test family"));
        }
        let d = kt.dim();
        let reach = kt.support();
        let ext = family.iter().map(|tp| norm(&tp.t) + tp.h * reach).fold(0.0, f64::max);
        let h_min = family.iter().map(|tp| tp.h).fold(f64::INFINITY, f64::min);
        let m = ((2.0 * ext) / (h_min / spec.s_divisions as f64)).ceil() as usize;
        Self::new(sphere_grid(d, spec.resolution(d))?, -ext, ext, m)
    }

    pub fn dim(&self) -> usize {
        self.sphere.dim
    }

    pub fn cells(&self) -> usize {
        self.sphere.len() * self.m
    }

    pub fn cell_measure(&self) -> f64 {
        self.sphere.weight() * self.ds
    }

    pub fn sphere(&self) -> &SphereGrid {
        &self.sphere
    }

    pub fn s_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |j| self.s0 + j as f64 * self.ds)
    }

    fn s_range(&self) -> (f64, f64) {
        (self.s0 - 0.5 * self.ds, self.s0 + (self.m as f64 - 0.5) * self.ds)
    }

    /// Whether the kernel support of `tp` lies inside the grid for every θ.
    pub fn covers(&self, kt: &KernelTable, tp: &TestPoint) -> bool {
        let (lo, hi) = self.s_range();
        let r = kt.support() * tp.h;
        self.sphere.iter().all(|th| {
            let c = dot(&tp.t, th);
            c - r >= lo - 1e-12 && c + r <= hi + 1e-12
        })
    }
}

/// One realization of the discretized Gaussian ν-noise: independent
/// N(0, cell measure) per cell.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pub seed: u64,
    draws: Vec<f64>,
}

impl NoiseField {
    pub fn new(grid: &CylinderGrid, seed: u64) -> Self {
        let mut r = rng(seed);
        let sd = grid.cell_measure().sqrt();
        let draws = (0..grid.cells()).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
        Self { seed, draws }
    }

    /// W(E) for the union of the listed cells.
    pub fn measure_of(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&c| self.draws[c]).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.draws
    }
}

/// Integrands h^{−1/2}⟨θ, v⟩ψ((s − ⟨t, θ⟩)/h)√f̃_{S,Θ}(s, θ)/f̃_Θ(θ) of a
/// family, evaluated at the cell centres of a grid (one row per test point).
#[derive(Debug, Clone)]
pub struct FamilyIntegrand {
    p: usize,
    cells: usize,
    values: Vec<f64>,
    cell_measure: f64,
}

impl FamilyIntegrand {
    pub fn new(grid: &CylinderGrid, design: &FittedDesign, kt: &KernelTable, family: &[TestPoint]) -> Result<Self> {
        let d = grid.dim();
        if design.dim() != d || kt.dim() != d {
            return Err(Error::config("d", "noise grid, design and kernel table dimensions differ"));
        }
        for tp in family {
            if tp.dim() != d {
                return Err(Error::config("d", "test point dimension differs from the noise grid"));
            }
            if !grid.covers(kt, tp) {
                return Err(Error::config(
                    "noise",
                    format!("noise grid does not cover the kernel support of t = {:?}, h = {}", tp.t, tp.h),
                ));
            }
        }
        let s: Vec<f64> = grid.s_values().collect();
        let m = s.len();
        // √f̃_{S,Θ}/f̃_Θ per cell, shared by the family
        let dens: Vec<Vec<f64>> = grid
            .sphere
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|th| {
                let inv_f = 1.0 / design.f_theta(th);
                let slice = design.joint_slice(th);
                s.iter().map(|&sv| slice.eval(sv).sqrt() * inv_f).collect()
            })
            .collect();
        let compact = kt.is_compact();
        let rows: Vec<Vec<f64>> = family
            .par_iter()
            .map(|tp| {
                let mut row = vec![0.0; grid.cells()];
                let inv_h = 1.0 / tp.h;
                let scale = tp.h.sqrt().recip();
                for (k, th) in grid.sphere.iter().enumerate() {
                    let a = dot(th, &tp.v) * scale;
                    if a == 0.0 {
                        continue;
                    }
                    let c = dot(&tp.t, th);
                    for j in 0..m {
                        let u = (s[j] - c) * inv_h;
                        if compact && u.abs() >= 1.0 {
                            continue;
                        }
                        row[k * m + j] = a * kt.psi(u) * dens[k][j];
                    }
                }
                row
            })
            .collect();
        let cells = grid.cells();
        Ok(Self { p: family.len(), cells, values: rows.concat(), cell_measure: grid.cell_measure() })
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cells..(j + 1) * self.cells]
    }

    /// Σ_cells integrand · noise
    pub fn draw(&self, noise: &NoiseField, j: usize) -> f64 {
        dot(self.row(j), &noise.draws)
    }

    /// Deterministic Σ_cells g_a g_b · cell measure.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut c = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..=a {
                let v = dot(self.row(a), self.row(b)) * self.cell_measure;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        c
    }
}

/// X̂ for a single test point under one noise realization.
pub fn draw_x_hat(noise: &NoiseField, grid: &CylinderGrid, design: &FittedDesign, kt: &KernelTable, tp: &TestPoint) -> Result<f64> {
    let g = FamilyIntegrand::new(grid, design, kt, std::slice::from_ref(tp))?;
    if noise.draws.len() != grid.cells() {
        return Err(Error::config("noise", "noise field does not match the grid"));
    }
    Ok(g.draw(noise, 0))
}

/// How replications of the family vector (X̂_j) are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Exact draws from N(0, Σ) with Σ the covariance of the discrete
    /// stochastic integrals.
    #[default]
    Covariance,
    /// A fresh NoiseField per replication.
    NoiseField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub noise: NoiseSpec,
    pub sigma_quad: SigmaQuad,
    pub sampler: Sampler,
    pub n_mc: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self { noise: NoiseSpec::default(), sigma_quad: SigmaQuad::default(), sampler: Sampler::default(), n_mc: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMode {
    Theoretical,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileResult {
    /// κ_n(α) for theoretical quantiles, the threshold on min_j sgn(c_d)√nT̂_j/σ̂_j
    /// for calibrated ones (may be negative).
    pub kappa: f64,
    pub alpha: f64,
    /// MC draws (theoretical) or pipeline replications (calibrated).
    pub n_mc: usize,
    pub mode: QuantileMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QuantileResult {
    /// κ_n^{t,h,v}(α) = σ̂/√n (κ/β_h + α_h), or σ̂κ/√n when calibrated.
    pub fn per_test(&self, stat: &StatResult) -> f64 {
        let sn = stat.sigma_hat / (stat.n as f64).sqrt();
        match self.mode {
            QuantileMode::Theoretical => {
                let (a, b) = alpha_beta(stat.test_point.h, stat.test_point.dim());
                sn * (self.kappa / b + a)
            }
            QuantileMode::Calibrated => sn * self.kappa,
        }
    }
}

/// 1-based order statistic ⌈q·n⌉ of the sorted pool.
fn order_statistic(mut pool: Vec<f64>, q: f64) -> f64 {
    pool.sort_by(f64::total_cmp);
    let n = pool.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    pool[k - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", format!("level must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Monte Carlo draws of sup_j β_j(|X̂_j|/σ̂_j − α_j).
pub fn sup_draws(
    integrand: &FamilyIntegrand,
    grid: &CylinderGrid,
    family: &[TestPoint],
    sigmas: &[f64],
    sampler: Sampler,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = family.len();
    if sigmas.len() != p || integrand.len() != p {
        return Err(Error::config("family", "family, σ̂ and integrand sizes differ"));
    }
    let ab: Vec<(f64, f64)> = family.iter().map(|tp| alpha_beta(tp.h, tp.dim())).collect();
    let sup = |x: &[f64]| {
        (0..p).map(|j| ab[j].1 * (x[j].abs() / sigmas[j] - ab[j].0)).fold(f64::NEG_INFINITY, f64::max)
    };
    match sampler {
        Sampler::Covariance => {
            let eig = SymmetricEigen::new(integrand.covariance());
            let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            Ok((0..n_mc)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng(derive_seed(seed, i as u64));
                    let z = DVector::from_iterator(p, (0..p).map(|_| r.sample::<f64, _>(StandardNormal)));
                    let x = &root * z;
                    sup(x.as_slice())
                })
                .collect())
        }
        Sampler::NoiseField => Ok((0..n_mc)
            .into_par_iter()
            .map(|i| {
                let noise = NoiseField::new(grid, derive_seed(seed, i as u64));
                let x: Vec<f64> = (0..p).map(|j| integrand.draw(&noise, j)).collect();
                sup(&x)
            })
            .collect()),
    }
}

/// κ_n(α) given precomputed σ̂ for the family.
pub fn quantile_kappa_with_sigma(
    family: &[TestPoint],
    design: &FittedDesign,
    kt: &KernelTable,
    sigmas: &[f64],
    alpha: f64,
    cfg: &LimitConfig,
    seed: u64,
) -> Result<QuantileResult> {
    check_alpha(alpha)?;
    if cfg.n_mc < 100 {
        return Err(Error::config("n_mc", "need at least 100 Monte Carlo draws"));
    }
    let grid = CylinderGrid::for_family(kt, family, &cfg.noise)?;
    let g = FamilyIntegrand::new(&grid, design, kt, family)?;
    let pool = sup_draws(&g, &grid, family, sigmas, cfg.sampler, cfg.n_mc, seed)?;
    Ok(QuantileResult {
        kappa: order_statistic(pool, 1.0 - alpha),
        alpha,
        n_mc: cfg.n_mc,
        mode: QuantileMode::Theoretical,
        warnings: vec![],
    })
}

pub fn quantile_kappa(
    family: &[TestPoint],
    design: &FittedDesign,
    kt: &KernelTable,
    alpha: f64,
    cfg: &LimitConfig,
    seed: u64,
) -> Result<QuantileResult> {
    let h_min = family.iter().map(|tp| tp.h).fold(f64::INFINITY, f64::min);
    let ctx = SigmaContext::new(design, kt, &cfg.sigma_quad, h_min)?;
    let sigmas = family.iter().map(|tp| ctx.sigma_hat(kt, tp)).collect::<Result<Vec<_>>>()?;
    quantile_kappa_with_sigma(family, design, kt, &sigmas, alpha, cfg, seed)
}

/// Everything the full test pipeline needs besides the data.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub design: DesignConfig,
    pub sigma_quad: SigmaQuad,
}

/// T̂, σ̂ for a family on one dataset drawn from `spec`.
pub fn pipeline_stats(
    spec: &DgpSpec,
    family: &[TestPoint],
    kt: &KernelTable,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Vec<StatResult>, FittedDesign)> {
    let raw = sample_dgp(&DgpSpec { seed, ..spec.clone() })?;
    let p = normalize(&raw, derive_seed(seed, 1))?;
    let design = fit_design(p.estimation_half(), &cfg.design)?;
    let prepared = PreparedSample::new(p.statistic_half(), &design)?;
    let h_min = family.iter().map(|tp| tp.h).fold(f64::INFINITY, f64::min);
    let ctx = SigmaContext::new(&design, kt, &cfg.sigma_quad, h_min)?;
    Ok((evaluate_family(&prepared, &ctx, kt, family)?, design))
}

/// min_j sgn(c_d)·√n·T̂_j/σ̂_j, the statistic whose exceedance means every
/// H_{0,−} in the family is rejected.
pub fn joint_min(stats: &[StatResult], sign: f64) -> f64 {
    stats.iter().map(|s| sign * s.standardized).fold(f64::INFINITY, f64::min)
}

/// Threshold on `joint_min` exceeded in a fraction α of pipeline
/// replications under the null DGP: the ⌈α·n_reps⌉-th largest value.
pub fn calibrated_quantiles(
    family: &[TestPoint],
    null: &DgpSpec,
    kt: &KernelTable,
    cfg: &PipelineConfig,
    alpha: f64,
    n_reps: usize,
    seed: u64,
) -> Result<QuantileResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config("alpha", format!("level must lie in (0, 1], got {alpha}")));
    }
    if n_reps < 200 {
        return Err(Error::config("n_reps", "calibration needs at least 200 replications"));
    }
    let mut warnings = Vec::new();
    if (n_reps as f64) * alpha < 10.0 {
        warnings.push(format!("n_reps·alpha = {} < 10: calibrated threshold is unstable", n_reps as f64 * alpha));
    }
    let sign = kt.sign();
    let mut pool = (0..n_reps)
        .into_par_iter()
        .map(|i| pipeline_stats(null, family, kt, cfg, derive_seed(seed, i as u64)).map(|(s, _)| joint_min(&s, sign)))
        .collect::<Result<Vec<f64>>>()?;
    pool.sort_by(|a, b| b.total_cmp(a));
    let k = ((alpha * n_reps as f64).ceil() as usize).clamp(1, n_reps);
    Ok(QuantileResult { kappa: pool[k - 1], alpha, n_mc: n_reps, mode: QuantileMode::Calibrated, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{BetaLaw, DesignLaw, GaussianComponent};
    use crate::design_density::{KnownDensity, ThetaSource};
    use crate::geometry::{normalize, ModelKind};

    fn sample_design(d: usize, flat: bool, seed: u64) -> FittedDesign {
        let spec = DgpSpec {
            dim: d,
            beta: BetaLaw::Mixture { components: vec![GaussianComponent::isotropic(1.0, vec![0.0; d], 0.3)] },
            design: DesignLaw::UniformSphere,
            model: ModelKind::NoIntercept,
            n: 1000,
            seed,
            retain_beta: false,
        };
        let p = normalize(&sample_dgp(&spec).unwrap(), seed).unwrap();
        let cfg = if flat {
            DesignConfig {
                theta: ThetaSource::Known(KnownDensity::Constant(1.0)),
                joint_constant: Some(1.0),
                ..Default::default()
            }
        } else {
            DesignConfig::default()
        };
        fit_design(p.estimation_half(), &cfg).unwrap()
    }

    fn tp(t: &[f64], h: f64, v: &[f64]) -> TestPoint {
        TestPoint::new(t.to_vec(), h, v.to_vec()).unwrap()
    }

    fn sample_var(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    }

    #[test]
    fn additivity_and_zero_integrand() {
        let kt = KernelTable::new(3).unwrap();
        let fam = [tp(&[0.0; 3], 1.0, &[1.0, 0.0, 0.0])];
        let grid = CylinderGrid::for_family(&kt, &fam, &NoiseSpec { sphere_resolution: Some(100), s_divisions: 4 }).unwrap();
        let noise = NoiseField::new(&grid, 3);
        let a = noise.measure_of(&[0, 1, 2]);
        let b = noise.measure_of(&[3, 4]);
        assert_eq!(noise.measure_of(&[0, 1, 2, 3, 4]), a + b);
        // v ⟂ every grid direction is impossible, so use a flat design with a zero joint density
        let p = {
            let spec = DgpSpec {
                dim: 3,
                beta: BetaLaw::PointMass { at: vec![0.0; 3] },
                design: DesignLaw::UniformSphere,
                model: ModelKind::NoIntercept,
                n: 100,
                seed: 1,
                retain_beta: false,
            };
            normalize(&sample_dgp(&spec).unwrap(), 1).unwrap()
        };
        let cfg = DesignConfig {
            theta: ThetaSource::Known(KnownDensity::Constant(1.0)),
            joint_constant: Some(0.0),
            ..Default::default()
        };
        let fit = fit_design(p.estimation_half(), &cfg).unwrap();
        assert_eq!(draw_x_hat(&noise, &grid, &fit, &kt, &fam[0]).unwrap(), 0.0);
    }

    #[test]
    fn under_covering_grid_is_rejected() {
        let kt = KernelTable::new(3).unwrap();
        let small = [tp(&[0.0; 3], 0.5, &[1.0, 0.0, 0.0])];
        let grid = CylinderGrid::for_family(&kt, &small, &NoiseSpec::default()).unwrap();
        let fit = sample_design(3, true, 1);
        let wide = tp(&[1.0, 0.0, 0.0], 1.0, &[1.0, 0.0, 0.0]);
        let noise = NoiseField::new(&grid, 0);
        assert!(matches!(draw_x_hat(&noise, &grid, &fit, &kt, &wide), Err(Error::Config { .. })));
    }

    #[test]
    fn noise_variance_matches_sigma() {
        // flat plug-ins: Var X̂ = σ̂² = (|S^{d-1}|/d)‖ψ‖²
        for d in [2usize, 3] {
            let kt = KernelTable::new(d).unwrap();
            let fit = sample_design(d, true, 2);
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            let fam = [tp(&vec![0.1; d], 0.5, &v)];
            let grid = CylinderGrid::for_family(&kt, &fam, &NoiseSpec::default()).unwrap();
            let g = FamilyIntegrand::new(&grid, &fit, &kt, &fam).unwrap();
            let draws: Vec<f64> = (0..2000).map(|i| g.draw(&NoiseField::new(&grid, 100 + i), 0)).collect();
            let sigma = crate::statistics::sigma_hat(&fit, &kt, &fam[0], &SigmaQuad::default()).unwrap();
            let var = sample_var(&draws);
            assert!((var / sigma.powi(2) - 1.0).abs() < 0.1, "d={d}: {var} vs {}", sigma * sigma);
            let cell_sum = g.covariance()[(0, 0)];
            assert!((cell_sum / sigma.powi(2) - 1.0).abs() < 0.02, "d={d}: {cell_sum}");
        }
    }

    #[test]
    fn discrete_isometry_for_random_points() {
        let kt = KernelTable::new(3).unwrap();
        let fit = sample_design(3, false, 3);
        let mut r = rng(77);
        let fam: Vec<TestPoint> = (0..5)
            .map(|_| {
                let mut v = [0.0; 3];
                crate::geometry::uniform_on_sphere(&mut r, &mut v);
                let t: Vec<f64> = (0..3).map(|_| r.random_range(-0.5..0.5)).collect();
                tp(&t, r.random_range(0.4..1.0), &v)
            })
            .collect();
        let grid = CylinderGrid::for_family(&kt, &fam, &NoiseSpec { sphere_resolution: Some(200), s_divisions: 6 }).unwrap();
        let g = FamilyIntegrand::new(&grid, &fit, &kt, &fam).unwrap();
        let noises: Vec<NoiseField> = (0..5000).map(|i| NoiseField::new(&grid, derive_seed(5, i))).collect();
        let cov = g.covariance();
        for j in 0..fam.len() {
            let x: Vec<f64> = noises.iter().map(|n| g.draw(n, j)).collect();
            let v = sample_var(&x);
            assert!((v / cov[(j, j)] - 1.0).abs() < 0.07, "{j}: {v} vs {}", cov[(j, j)]);
        }
    }

    #[test]
    fn disjoint_supports_are_uncorrelated() {
        let kt = KernelTable::new(3).unwrap();
        let fit = sample_design(3, false, 4);
        let fam = [tp(&[-1.5, 0.0, 0.0], 0.5, &[1.0, 0.0, 0.0]), tp(&[1.5, 0.0, 0.0], 0.5, &[1.0, 0.0, 0.0])];
        let grid = CylinderGrid::for_family(&kt, &fam, &NoiseSpec { sphere_resolution: Some(200), s_divisions: 4 }).unwrap();
        let g = FamilyIntegrand::new(&grid, &fit, &kt, &fam).unwrap();
        let (mut a, mut b) = (vec![], vec![]);
        for i in 0..2000 {
            let n = NoiseField::new(&grid, 900 + i);
            a.push(g.draw(&n, 0));
            b.push(g.draw(&n, 1));
        }
        let ma = a.iter().sum::<f64>() / 2000.0;
        let mb = b.iter().sum::<f64>() / 2000.0;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 1999.0;
        let corr = cov / (sample_var(&a) * sample_var(&b)).sqrt();
        assert!(corr.abs() < 0.05, "{corr}");
    }

    #[test]
    fn half_normal_quantile() {
        let kt = KernelTable::new(3).unwrap();
        let fit = sample_design(3, true, 5);
        let fam = [tp(&[0.0; 3], 1.0, &[0.0, 0.0, 1.0])];
        for sampler in [Sampler::Covariance, Sampler::NoiseField] {
            let cfg = LimitConfig { n_mc: 2000, sampler, ..Default::default() };
            let q = quantile_kappa(&fam, &fit, &kt, 0.05, &cfg, 11).unwrap();
            assert!((q.kappa - 1.96).abs() < 0.1, "{sampler:?}: {}", q.kappa);
            let q5 = quantile_kappa(&fam, &fit, &kt, 0.5, &cfg, 11).unwrap();
            assert!(q5.kappa <= q.kappa);
        }
    }

    #[test]
    fn deterministic_and_refinement_stable() {
        let kt = KernelTable::new(2).unwrap();
        let fit = sample_design(2, false, 6);
        let mut fam = Vec::new();
        for h in [0.5, 1.0] {
            for v in crate::geometry::axis_directions(2) {
                let t: Vec<f64> = v.iter().map(|x| h * x).collect();
                fam.push(tp(&t, h, &v));
            }
        }
        let cfg = LimitConfig { n_mc: 2000, ..Default::default() };
        let a = quantile_kappa(&fam, &fit, &kt, 0.05, &cfg, 21).unwrap();
        let b = quantile_kappa(&fam, &fit, &kt, 0.05, &cfg, 21).unwrap();
        assert_eq!(a.kappa.to_bits(), b.kappa.to_bits());
        let fine = LimitConfig { noise: cfg.noise.refined(2), ..cfg };
        let c = quantile_kappa(&fam, &fit, &kt, 0.05, &fine, 21).unwrap();
        assert!((c.kappa / a.kappa - 1.0).abs() < 0.03, "{} vs {}", a.kappa, c.kappa);
        let stat = StatResult { test_point: fam[0].clone(), t_hat: 0.0, sigma_hat: 2.0, standardized: 0.0, n: 400 };
        let (al, be) = alpha_beta(0.5, 2);
        assert!((a.per_test(&stat) - 0.1 * (a.kappa / be + al)).abs() < 1e-12);
        assert!(a.per_test(&stat) > 0.0);
    }

    #[test]
    fn bad_inputs() {
        let kt = KernelTable::new(3).unwrap();
        let fit = sample_design(3, true, 7);
        let fam = [tp(&[0.0; 3], 1.0, &[0.0, 0.0, 1.0])];
        let cfg = LimitConfig { n_mc: 50, ..Default::default() };
        assert!(quantile_kappa(&fam, &fit, &kt, 0.05, &cfg, 0).is_err());
        let cfg = LimitConfig::default();
        assert!(quantile_kappa(&fam, &fit, &kt, 1.0, &cfg, 0).is_err());
        assert!(quantile_kappa(&[], &fit, &kt, 0.05, &cfg, 0).is_err());
    }

    #[test]
    fn calibration_boundaries() {
        let kt = KernelTable::new(3).unwrap();
        let null = DgpSpec {
            dim: 3,
            beta: BetaLaw::UniformBox { lo: vec![-5.0; 3], hi: vec![5.0; 3] },
            design: DesignLaw::Cauchy { mean: vec![0.0; 2], scale: vec![1.0, 0.0, 0.0, 1.0] },
            model: ModelKind::Intercept,
            n: 100,
            seed: 0,
            retain_beta: false,
        };
        let fam: Vec<TestPoint> =
            crate::geometry::axis_directions(3).into_iter().map(|v| tp(&v, 1.0, &v)).collect();
        let cfg = PipelineConfig::default();
        let all = calibrated_quantiles(&fam, &null, &kt, &cfg, 1.0, 200, 3).unwrap();
        let mins: Vec<f64> = (0..200)
            .map(|i| joint_min(&pipeline_stats(&null, &fam, &kt, &cfg, derive_seed(3, i)).unwrap().0, kt.sign()))
            .collect();
        assert_eq!(all.kappa, mins.iter().copied().fold(f64::INFINITY, f64::min));
        let q = calibrated_quantiles(&fam, &null, &kt, &cfg, 0.05, 200, 3).unwrap();
        assert_eq!(q.mode, QuantileMode::Calibrated);
        assert_eq!(mins.iter().filter(|&&m| m >= q.kappa).count(), 10);
        assert!(q.warnings.is_empty());
        assert!(calibrated_quantiles(&fam, &null, &kt, &cfg, 0.05, 100, 3).is_err());
        let w = calibrated_quantiles(&fam, &null, &kt, &cfg, 0.01, 200, 3).unwrap();
        assert_eq!(w.warnings.len(), 1);
    }
}
