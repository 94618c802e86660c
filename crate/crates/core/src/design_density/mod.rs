//! Cut-off kernel density estimators of f_Θ and f_{S,Θ} on the sphere and
//! the cylinder, with a hemisphere variant for the intercept model, plus
//! closed-form design densities.

mod closed_form;
mod kde;

use std::f64::consts::PI;

pub use closed_form::{cauchy_ftheta, ftheta_from_fx, CauchyTheta, DensityFn, KnownDensity};
pub use kde::JointSlice;
use kde::SortedCloud;

use crate::io::{f64_bytes, hash_parts};
use crate::error::{Error, Result};
use crate::geometry::{ModelKind, SampleView};
use crate::quad;
use crate::special::sphere_area;

/// Smallest estimation half accepted by `fit_design`.
pub const MIN_ESTIMATION_ROWS: usize = 50;

/// Epanechnikov profile (3/4)(1 − u²) on |u| ≤ 1.
#[inline]
pub fn smoothing_kernel(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// ∫ K((1 − cos α)/h²) sin^{d−2}α · frac(α) dα over the cap, times |S^{d−2}|.
fn cap_integral<F: Fn(f64) -> f64>(h: f64, d: usize, frac: F) -> Result<f64> {
    let amax = (1.0 - h * h).max(-1.0).acos();
    let g = |a: f64| smoothing_kernel((1.0 - a.cos()) / (h * h)) * a.sin().powi(d as i32 - 2) * frac(a);
    Ok(sphere_area(d - 2) * quad::integrate(g, 0.0, amax, 1e-14, 1e-11)?)
}

/// C(h) = h^{d−1} / ∫_{S^{d−1}} K((1 − ⟨θ′, θ⟩)/h²) dθ′.
pub fn normalizer_c(h: f64, d: usize) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::config("h_star", format!("bandwidth must be positive, got {h}")));
    }
    if d < 2 {
        return Err(Error::config("d", "dimension must be at least 2"));
    }
    Ok(h.powi(d as i32 - 1) / cap_integral(h, d, |_| 1.0)?)
}

/// Fraction of S^m whose first coordinate exceeds c.
fn sphere_fraction_above(m: usize, c: f64) -> f64 {
    match m {
        0 => 0.5 * ((1.0 > c) as u8 as f64 + (-1.0 > c) as u8 as f64),
        _ if c <= -1.0 => 1.0,
        _ if c >= 1.0 => 0.0,
        1 => c.acos() / PI,
        2 => 0.5 * (1.0 - c),
        _ => {
            let e = (m as f64 - 2.0) / 2.0;
            let g = |x: f64| (1.0 - x * x).powf(e);
            let num = quad::integrate(g, c, 1.0, 1e-14, 1e-12).unwrap_or(f64::NAN);
            let den = quad::integrate(g, -1.0, 1.0, 1e-14, 1e-12).unwrap_or(f64::NAN);
            num / den
        }
    }
}

/// C(h, θ) for the hemisphere S₊ = {θ₁ > 0}; depends on θ only through θ₁.
pub fn hemisphere_normalizer(h: f64, d: usize, theta1: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::config("h_star", format!("bandwidth must be positive, got {h}")));
    }
    let t1 = theta1.clamp(-1.0, 1.0);
    let rho = (1.0 - t1 * t1).sqrt();
    let frac = |a: f64| {
        if rho < 1e-12 {
            return if a.cos() * t1 > 0.0 { 1.0 } else { 0.0 };
        }
        let sa = a.sin();
        if sa == 0.0 {
            return if t1 > 0.0 { 1.0 } else { 0.0 };
        }
        sphere_fraction_above(d - 2, -t1 * a.cos() / (rho * sa))
    };
    Ok(h.powi(d as i32 - 1) / cap_integral(h, d, frac)?)
}

/// C(h, θ₁) tabulated on [0, 1] with linear interpolation.
#[derive(Debug, Clone)]
struct HemiTable {
    values: Vec<f64>,
}

impl HemiTable {
    const POINTS: usize = 513;

    fn new(h: f64, d: usize) -> Result<Self> {
        let values = (0..Self::POINTS)
            .map(|i| hemisphere_normalizer(h, d, i as f64 / (Self::POINTS - 1) as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values })
    }

    fn eval(&self, theta1: f64) -> f64 {
        let x = theta1.clamp(0.0, 1.0) * (Self::POINTS - 1) as f64;
        let i = (x as usize).min(Self::POINTS - 2);
        let fr = x - i as f64;
        self.values[i] + fr * (self.values[i + 1] - self.values[i])
    }
}

/// Bandwidth defaults 2·log(n)^{7/(d−1)}·n^{−1/(d−1)} and
/// 2·log(n)^{3/d}·n^{−1/(2d)}, each capped at 0.5.
pub fn default_bandwidths(n: usize, d: usize) -> (f64, f64) {
    let nf = n as f64;
    let l = nf.ln();
    let df = d as f64;
    let hs = 2.0 * l.powf(7.0 / (df - 1.0)) * nf.powf(-1.0 / (df - 1.0));
    let hp = 2.0 * l.powf(3.0 / df) * nf.powf(-1.0 / (2.0 * df));
    (hs.min(0.5), hp.min(0.5))
}

/// Where f_Θ comes from.
#[derive(Debug, Clone, Default)]
pub enum ThetaSource {
    #[default]
    Estimated,
    Known(KnownDensity),
}

#[derive(Debug, Clone, Default)]
pub struct DesignConfig {
    pub h_star: Option<f64>,
    pub h_plus: Option<f64>,
    pub theta: ThetaSource,
    /// Replace f_{S,Θ} by a constant (for checks with flat plug-ins).
    pub joint_constant: Option<f64>,
}

#[derive(Debug, Clone)]
enum ThetaModel {
    Sphere { cloud: SortedCloud, pre: f64 },
    Hemisphere { cloud: SortedCloud, table: HemiTable, pre: f64 },
    Known(KnownDensity),
}

#[derive(Debug, Clone)]
enum JointModel {
    Sphere { cloud: SortedCloud, pre: f64 },
    Hemisphere { cloud: SortedCloud, table: HemiTable, pre: f64 },
    Constant(f64),
}

/// Fitted f̃_Θ and f̃_{S,Θ} from the estimation half.
#[derive(Debug, Clone)]
pub struct FittedDesign {
    dim: usize,
    n: usize,
    model: ModelKind,
    h_star: f64,
    h_plus: f64,
    floor_theta: f64,
    floor_joint: f64,
    s_extent: f64,
    fingerprint: String,
    theta: ThetaModel,
    joint: JointModel,
}

/// Representative of ±θ in the closed upper hemisphere, and whether θ was flipped.
fn upper_rep(theta: &[f64]) -> (Vec<f64>, bool) {
    let first = theta.iter().copied().find(|x| *x != 0.0).unwrap_or(0.0);
    if theta[0] > 0.0 || (theta[0] == 0.0 && first >= 0.0) {
        (theta.to_vec(), false)
    } else {
        (theta.iter().map(|x| -x).collect(), true)
    }
}

/// Estimation-half rows reflected into θ₁ ≥ 0.
fn fold_upper(sample: &SampleView<'_>) -> (Vec<f64>, Vec<f64>) {
    let d = sample.dim;
    let mut theta = Vec::with_capacity(sample.theta.len());
    let mut s = Vec::with_capacity(sample.len());
    for i in 0..sample.len() {
        let row = sample.theta_row(i);
        let flip = row[0] < 0.0;
        let sg = if flip { -1.0 } else { 1.0 };
        theta.extend(row.iter().map(|x| sg * x));
        s.push(sg * sample.s[i]);
        debug_assert_eq!(theta.len(), (i + 1) * d);
    }
    (theta, s)
}

pub fn fit_design(sample: SampleView<'_>, cfg: &DesignConfig) -> Result<FittedDesign> {
    let n = sample.len();
    let d = sample.dim;
    if n < MIN_ESTIMATION_ROWS {
        return Err(Error::config(
            "n",
            format!("estimation half has {n} rows, need at least {MIN_ESTIMATION_ROWS}"),
        ));
    }
    let (hs_def, hp_def) = default_bandwidths(n, d);
    let h_star = cfg.h_star.unwrap_or(hs_def);
    let h_plus = cfg.h_plus.unwrap_or(hp_def);
    if !(h_star > 0.0) {
        return Err(Error::config("h_star", format!("bandwidth must be positive, got {h_star}")));
    }
    if !(h_plus > 0.0) {
        return Err(Error::config("h_plus", format!("bandwidth must be positive, got {h_plus}")));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let intercept = sample.model == ModelKind::Intercept;

    let (fold_theta, fold_s) = if intercept { fold_upper(&sample) } else { (sample.theta.to_vec(), sample.s.to_vec()) };

    let theta = match &cfg.theta {
        ThetaSource::Known(k) => ThetaModel::Known(k.clone()),
        ThetaSource::Estimated if intercept => ThetaModel::Hemisphere {
            cloud: SortedCloud::new(d, &fold_theta, &fold_s),
            table: HemiTable::new(h_star, d)?,
            pre: 1.0 / (nf * h_star.powi(d as i32 - 1)),
        },
        ThetaSource::Estimated => ThetaModel::Sphere {
            cloud: SortedCloud::new(d, &fold_theta, &fold_s),
            pre: normalizer_c(h_star, d)? / (nf * h_star.powi(d as i32 - 1)),
        },
    };
    let joint = match cfg.joint_constant {
        Some(c) => JointModel::Constant(c),
        None if intercept => JointModel::Hemisphere {
            cloud: SortedCloud::new(d, &fold_theta, &fold_s),
            table: HemiTable::new(h_plus, d)?,
            pre: 1.0 / (nf * h_plus.powi(d as i32)),
        },
        None => JointModel::Sphere {
            cloud: SortedCloud::new(d, &fold_theta, &fold_s),
            pre: normalizer_c(h_plus, d)? / (nf * h_plus.powi(d as i32)),
        },
    };
    let s_extent = match joint {
        JointModel::Constant(_) => 0.0,
        _ => fold_s.iter().fold(0.0f64, |m, s| m.max(s.abs())) + h_plus,
    };
    let fingerprint = hash_parts(&[
        &f64_bytes(sample.s),
        &f64_bytes(sample.theta),
        format!("{:?}|{:?}|{h_star}|{h_plus}", sample.model, cfg).as_bytes(),
    ]);
    Ok(FittedDesign {
        s_extent,
        fingerprint,
        dim: d,
        n,
        model: sample.model,
        h_star,
        h_plus,
        floor_theta: 1.0 / ln,
        floor_joint: 1.0 / (ln * ln),
        theta,
        joint,
    })
}

impl FittedDesign {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn h_star(&self) -> f64 {
        self.h_star
    }

    pub fn h_plus(&self) -> f64 {
        self.h_plus
    }

    pub fn floor_theta(&self) -> f64 {
        self.floor_theta
    }

    pub fn floor_joint(&self) -> f64 {
        self.floor_joint
    }

    /// f̃_{S,Θ}(s, ·) sits at its floor level whenever |s| > s_extent.
    /// Hash of the estimation sample and settings behind this fit.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn s_extent(&self) -> f64 {
        self.s_extent
    }

    pub fn is_known(&self) -> bool {
        matches!(self.theta, ThetaModel::Known(_))
    }

    /// f̂_Θ before the cut-off (the closed form in known mode).
    pub fn f_theta_hat(&self, theta: &[f64]) -> f64 {
        match &self.theta {
            ThetaModel::Known(k) => k.eval(theta),
            ThetaModel::Sphere { cloud, pre } => {
                let mut acc = 0.0;
                cloud.for_each_in_cap(theta, self.h_star, |_, k| acc += k);
                acc * pre
            }
            ThetaModel::Hemisphere { cloud, table, pre } => {
                let (rep, _) = upper_rep(theta);
                let mut acc = 0.0;
                cloud.for_each_in_cap(&rep, self.h_star, |_, k| acc += k);
                0.5 * acc * pre * table.eval(rep[0])
            }
        }
    }

    /// f̃_Θ = max(f̂_Θ, 1/log n); closed forms are used as given.
    pub fn f_theta(&self, theta: &[f64]) -> f64 {
        let v = self.f_theta_hat(theta);
        if self.is_known() {
            v
        } else {
            v.max(self.floor_theta)
        }
    }

    /// s ↦ f̃_{S,Θ}(s, θ) for fixed θ.
    pub fn joint_slice(&self, theta: &[f64]) -> JointSlice {
        match &self.joint {
            JointModel::Constant(c) => JointSlice::constant(*c),
            JointModel::Sphere { cloud, pre } => {
                JointSlice::from_cloud(cloud, theta, self.h_plus, *pre, false, self.floor_joint)
            }
            JointModel::Hemisphere { cloud, table, pre } => {
                let (rep, flipped) = upper_rep(theta);
                let p = 0.5 * pre * table.eval(rep[0]);
                JointSlice::from_cloud(cloud, &rep, self.h_plus, p, flipped, self.floor_joint)
            }
        }
    }

    pub fn f_joint_hat(&self, s: f64, theta: &[f64]) -> f64 {
        self.joint_slice(theta).raw(s)
    }

    pub fn f_joint(&self, s: f64, theta: &[f64]) -> f64 {
        self.joint_slice(theta).eval(s)
    }
}

/// Spherical KDE f̂_Θ(θ) with normalizer C(h*).
pub fn spherical_kde(sample: SampleView<'_>, h_star: f64, theta: &[f64]) -> Result<f64> {
    if !(h_star > 0.0) {
        return Err(Error::config("h_star", format!("bandwidth must be positive, got {h_star}")));
    }
    let cloud = SortedCloud::new(sample.dim, sample.theta, sample.s);
    let mut acc = 0.0;
    cloud.for_each_in_cap(theta, h_star, |_, k| acc += k);
    let n = sample.len() as f64;
    Ok(acc * normalizer_c(h_star, sample.dim)? / (n * h_star.powi(sample.dim as i32 - 1)))
}

/// Joint KDE f̂_{S,Θ}(s, θ) with prefactor C(h₊)/(n h₊^d).
pub fn joint_kde(sample: SampleView<'_>, h_plus: f64, s: f64, theta: &[f64]) -> Result<f64> {
    if !(h_plus > 0.0) {
        return Err(Error::config("h_plus", format!("bandwidth must be positive, got {h_plus}")));
    }
    let cloud = SortedCloud::new(sample.dim, sample.theta, sample.s);
    let mut acc = 0.0;
    cloud.for_each_in_cap(theta, h_plus, |i, k| acc += k * smoothing_kernel((cloud.s[i] - s) / h_plus));
    let n = sample.len() as f64;
    Ok(acc * normalizer_c(h_plus, sample.dim)? / (n * h_plus.powi(sample.dim as i32)))
}
