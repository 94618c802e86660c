use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ModelKind;
use crate::quad;
use crate::special::{gamma_half, sphere_area};

/// Density of Θ under an intercept model whose non-constant regressors are
/// multivariate Cauchy(μ, Σ) on R^{d−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyTheta {
    d: usize,
    mu: Vec<f64>,
    sigma_inv: DMatrix<f64>,
    norm_const: f64,
}

impl CauchyTheta {
    /// `sigma` is the (d−1)×(d−1) scale matrix, row-major.
    pub fn new(mu: &[f64], sigma: &[f64]) -> Result<Self> {
        let k = mu.len();
        if k == 0 || sigma.len() != k * k {
            return Err(Error::config("sigma", "scale matrix must be (d-1)x(d-1) matching mu"));
        }
        let m = DMatrix::from_row_slice(k, k, sigma);
        if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
            return Err(Error::config("sigma", "scale matrix is not symmetric"));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::config("sigma", "scale matrix is not positive definite"))?;
        let det: f64 = chol.l().diagonal().iter().map(|x| x * x).product();
        let d = k + 1;
        let norm_const = gamma_half(d) / (2.0 * PI.powf(d as f64 / 2.0) * det.sqrt());
        Ok(Self { d, mu: mu.to_vec(), sigma_inv: chol.inverse(), norm_const })
    }

    pub fn standard(d: usize) -> Self {
        let k = d - 1;
        let mut eye = vec![0.0; k * k];
        for i in 0..k {
            eye[i * k + i] = 1.0;
        }
        Self::new(&vec![0.0; k], &eye).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Γ(d/2) / (2π^{d/2}|Σ|^{1/2}(θ₁² + qᵀΣ⁻¹q)^{d/2}), q_j = sgn(θ₁)θ_j − |θ₁|μ_j.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        let t1 = theta[0];
        let sg = if t1 < 0.0 { -1.0 } else { 1.0 };
        let q = DVector::from_iterator(
            self.d - 1,
            theta[1..].iter().zip(&self.mu).map(|(t, m)| sg * t - t1.abs() * m),
        );
        let quad_form = q.dot(&(&self.sigma_inv * &q));
        self.norm_const / (t1 * t1 + quad_form).powf(self.d as f64 / 2.0)
    }
}

pub fn cauchy_ftheta(theta: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    Ok(CauchyTheta::new(mu, sigma)?.eval(theta))
}

/// Density of the design regressors, evaluated pointwise.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// f_Θ from the design density f_X.
///
/// Without intercept f_X lives on R^d and f_Θ(θ) = ∫₀^∞ r^{d−1} f_X(rθ) dr.
/// With intercept f_X is the density of (X_2, …, X_d) and
/// f_Θ(θ) = f_X(θ_2/θ_1, …, θ_d/θ_1) / (2|θ_1|^d).
pub fn ftheta_from_fx(f_x: &dyn Fn(&[f64]) -> f64, theta: &[f64], model: ModelKind) -> Result<f64> {
    let d = theta.len();
    match model {
        ModelKind::Intercept => {
            let t1 = theta[0];
            if t1 == 0.0 {
                return Ok(0.0);
            }
            let x: Vec<f64> = theta[1..].iter().map(|t| t / t1).collect();
            Ok(f_x(&x) / (2.0 * t1.abs().powi(d as i32)))
        }
        ModelKind::NoIntercept => {
            let g = |r: f64| {
                let x: Vec<f64> = theta.iter().map(|t| r * t).collect();
                r.powi(d as i32 - 1) * f_x(&x)
            };
            let mut total = quad::integrate(g, 0.0, 1.0, 1e-12, 1e-10)?;
            let mut r = 1.0;
            while r < 1e8 {
                let piece = quad::integrate(g, r, 2.0 * r, 1e-13, 1e-10)?;
                total += piece;
                r *= 2.0;
                if piece.abs() <= 1e-10 * total.abs().max(1e-300) && r > 16.0 {
                    return Ok(total);
                }
            }
            Err(Error::Quadrature(format!(
                "radial integral of f_X along θ = {theta:?} did not settle by r = 1e8 (tail too heavy)"
            )))
        }
    }
}

/// A closed-form f_Θ declared by the user.
#[derive(Clone)]
pub enum KnownDensity {
    /// Uniform on S^{d−1}.
    Uniform(usize),
    Cauchy(CauchyTheta),
    Constant(f64),
    Custom(DensityFn),
}

impl fmt::Debug for KnownDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnownDensity::Uniform(d) => write!(f, "Uniform(d = {d})"),
            KnownDensity::Cauchy(c) => write!(f, "{c:?}"),
            KnownDensity::Constant(v) => write!(f, "Constant({v})"),
            KnownDensity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl KnownDensity {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            KnownDensity::Uniform(d) => 1.0 / sphere_area(d - 1),
            KnownDensity::Cauchy(c) => c.eval(theta),
            KnownDensity::Constant(v) => *v,
            KnownDensity::Custom(f) => f(theta),
        }
    }
}
