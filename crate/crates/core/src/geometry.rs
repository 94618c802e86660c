//! Projection of raw observations onto the cylinder R × S^{d−1}, direction
//! grids on the sphere and mode-test location families.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::TestPoint;
use crate::seeds;
use crate::special::{dot, norm, sphere_area};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    NoIntercept,
    Intercept,
}

/// Raw observations (X_i, Y_i), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub model: ModelKind,
    /// Coefficient draws kept for oracle checks.
    pub beta: Option<Vec<f64>>,
}

impl RawDataset {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>, model: ModelKind) -> Result<Self> {
        let ds = Self { dim, x, y, model, beta: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn beta_row(&self, i: usize) -> Option<&[f64]> {
        self.beta.as_ref().map(|b| &b[i * self.dim..(i + 1) * self.dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config("d", "dimension must be at least 2"));
        }
        if self.x.len() != self.dim * self.y.len() {
            return Err(Error::config("x", "design matrix does not match the number of responses"));
        }
        for i in 0..self.len() {
            let r = self.row(i);
            if self.model == ModelKind::Intercept && r[0] != 1.0 {
                return Err(Error::Data { row: i, msg: format!("intercept column x1 = {} is not 1", r[0]) });
            }
            if norm(r) == 0.0 {
                return Err(Error::Data { row: i, msg: "design row has zero norm".into() });
            }
            if !r.iter().all(|v| v.is_finite()) || !self.y[i].is_finite() {
                return Err(Error::Data { row: i, msg: "non-finite value".into() });
            }
        }
        Ok(())
    }
}

/// Normalized observations S_i = ζ_i Y_i/‖X_i‖, Θ_i = ζ_i X_i/‖X_i‖.
/// Rows before `split` feed the statistic, the rest the density estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    pub dim: usize,
    pub s: Vec<f64>,
    pub theta: Vec<f64>,
    pub zeta: Vec<i8>,
    pub split: usize,
    pub model: ModelKind,
}

/// A borrowed block of rows of a projected sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub dim: usize,
    pub s: &'a [f64],
    pub theta: &'a [f64],
    pub model: ModelKind,
}

impl<'a> SampleView<'a> {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn theta_row(&self, i: usize) -> &'a [f64] {
        &self.theta[i * self.dim..(i + 1) * self.dim]
    }
}

impl ProjectedSample {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn view(&self, lo: usize, hi: usize) -> SampleView<'_> {
        SampleView {
            dim: self.dim,
            s: &self.s[lo..hi],
            theta: &self.theta[lo * self.dim..hi * self.dim],
            model: self.model,
        }
    }

    pub fn statistic_half(&self) -> SampleView<'_> {
        self.view(0, self.split)
    }

    pub fn estimation_half(&self) -> SampleView<'_> {
        self.view(self.split, self.len())
    }

    pub fn all(&self) -> SampleView<'_> {
        self.view(0, self.len())
    }
}

/// Normalize with the default sign rule: random signs for the intercept
/// model only.
pub fn normalize(raw: &RawDataset, seed: u64) -> Result<ProjectedSample> {
    normalize_with(raw, seed, raw.model == ModelKind::Intercept)
}

/// Normalize, drawing ζ_i uniformly on {−1, +1} when `randomize_signs` is set.
pub fn normalize_with(raw: &RawDataset, seed: u64, randomize_signs: bool) -> Result<ProjectedSample> {
    let d = raw.dim;
    let n = raw.len();
    if raw.x.len() != n * d {
        return Err(Error::config("x", "design matrix does not match the number of responses"));
    }
    let mut rng = seeds::rng(seed);
    let mut s = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n * d);
    let mut zeta = Vec::with_capacity(n);
    for i in 0..n {
        let r = raw.row(i);
        let nr = norm(r);
        if nr == 0.0 {
            return Err(Error::Data { row: i, msg: "design row has zero norm".into() });
        }
        let z: i8 = if randomize_signs && rng.random::<bool>() { -1 } else { 1 };
        let zf = z as f64;
        s.push(zf * raw.y[i] / nr);
        theta.extend(r.iter().map(|x| zf * x / nr));
        zeta.push(z);
    }
    Ok(ProjectedSample { dim: d, s, theta, zeta, split: n / 2, model: raw.model })
}

/// Equal-weight point set on S^{d−1}, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// Quadrature weight of each node: |S^{d−1}| / N.
    pub fn weight(&self) -> f64 {
        sphere_area(self.dim - 1) / self.len() as f64
    }

    /// Largest geodesic distance from a probe point to its nearest node,
    /// over 20000 seeded uniform probes.
    pub fn covering_radius(&self) -> f64 {
        let mut rng = seeds::rng(0x5eed_c0de);
        let mut worst: f64 = 0.0;
        let mut p = vec![0.0; self.dim];
        for _ in 0..20_000 {
            uniform_on_sphere(&mut rng, &mut p);
            let best = self.iter().map(|q| dot(q, &p)).fold(-1.0, f64::max);
            worst = worst.max(best.clamp(-1.0, 1.0).acos());
        }
        worst
    }
}

pub fn uniform_on_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(rand_distr::StandardNormal);
        }
        let n = norm(out);
        if n > 1e-12 {
            out.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

/// `resolution` equally spaced angles on S¹, or a Fibonacci lattice on S².
pub fn sphere_grid(d: usize, resolution: usize) -> Result<SphereGrid> {
    if resolution == 0 {
        return Err(Error::config("resolution", "need at least one point"));
    }
    let mut points = Vec::with_capacity(resolution * d);
    match d {
        2 => {
            for k in 0..resolution {
                let a = 2.0 * PI * k as f64 / resolution as f64;
                points.extend([a.cos(), a.sin()]);
            }
        }
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let n = resolution as f64;
            for i in 0..resolution {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                points.extend([r * a.cos(), r * a.sin(), z]);
            }
        }
        _ => {
            return Err(Error::config(
                "d",
                format!("no built-in sphere grid for d = {d}; pass explicit directions instead"),
            ))
        }
    }
    Ok(SphereGrid { dim: d, points })
}

/// The 2d directions ±e_1, …, ±e_d.
pub fn axis_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * d);
    for i in 0..d {
        for sgn in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = sgn;
            out.push(e);
        }
    }
    out
}

/// Ring of test points around b0: t = b0 + offset·h·v for each scale h and
/// direction v, so each test looks at the slope pointing away from b0.
/// `offset` is 2 for the minimal admissible distance; 1 gives the tighter
/// t = b0 + h·v family.
pub fn mode_scan_testpoints(
    b0: &[f64],
    scales: &[f64],
    c_factor: f64,
    directions: &[Vec<f64>],
    offset: f64,
) -> Result<Vec<TestPoint>> {
    if !(c_factor > 2.0) {
        return Err(Error::config("c_factor", format!("must exceed 2, got {c_factor}")));
    }
    if !(offset > 0.0) || offset > c_factor {
        return Err(Error::config("offset", format!("need 0 < offset <= c_factor, got {offset}")));
    }
    if scales.is_empty() || directions.is_empty() {
        return Err(Error::config("scales", "need at least one scale and one direction"));
    }
    let mut out = Vec::with_capacity(scales.len() * directions.len());
    for &h in scales {
        for v in directions {
            if v.len() != b0.len() {
                return Err(Error::config("directions", "direction dimension differs from b0"));
            }
            let nv = norm(v);
            let t = b0.iter().zip(v).map(|(b, x)| b + offset * h * x / nv).collect();
            out.push(TestPoint::new(t, h, v.clone())?);
        }
    }
    Ok(out)
}
