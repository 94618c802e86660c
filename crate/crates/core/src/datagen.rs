//! Synthetic data-generating processes: coefficient laws, design laws and a
//! catalogue of named simulation scenarios.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{uniform_on_sphere, ModelKind, RawDataset};
use crate::seeds;
use crate::special::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Univariate {
    Normal { mean: f64, sd: f64 },
    /// Exponential with the given rate; the mean is 1/rate.
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<f64>,
}

impl GaussianComponent {
    pub fn isotropic(weight: f64, mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = var;
        }
        Self { weight, mean, cov }
    }
}

/// Law of the random coefficients β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaLaw {
    Mixture { components: Vec<GaussianComponent> },
    /// Independent coordinates; one entry per coefficient, or a single entry
    /// followed by a shared law via `Product` with explicit list.
    Product { marginals: Vec<Univariate> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    PointMass { at: Vec<f64> },
}

/// Law of the regressors. For the intercept model it describes
/// (X_2, …, X_d); X_1 ≡ 1 is added by the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignLaw {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    Normal { mean: Vec<f64>, cov: Vec<f64> },
    /// Multivariate Cauchy μ + Σ^{1/2}Z/|W|.
    Cauchy { mean: Vec<f64>, scale: Vec<f64> },
    /// X uniform on the unit sphere, so Θ = X.
    UniformSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub dim: usize,
    pub beta: BetaLaw,
    pub design: DesignLaw,
    #[serde(default)]
    pub model: ModelKind,
    /// Half sample size; 2n rows are drawn.
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub retain_beta: bool,
}

fn check_square(name: &str, m: &[f64], k: usize, issues: &mut Vec<String>) -> Option<DMatrix<f64>> {
    if m.len() != k * k {
        issues.push(format!("{name}: expected {k}x{k} entries, got {}", m.len()));
        return None;
    }
    let mat = DMatrix::from_row_slice(k, k, m);
    if (&mat - mat.transpose()).abs().max() > 1e-12 * (1.0 + mat.abs().max()) {
        issues.push(format!("{name}: not symmetric"));
        return None;
    }
    match mat.cholesky() {
        Some(c) => Some(c.l()),
        None => {
            issues.push(format!("{name}: not positive definite"));
            None
        }
    }
}

fn check_box(name: &str, lo: &[f64], hi: &[f64], k: usize, issues: &mut Vec<String>) {
    if lo.len() != k || hi.len() != k {
        issues.push(format!("{name}: bounds need {k} entries"));
    } else if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        issues.push(format!("{name}: bounds must satisfy lo < hi"));
    }
}

enum BetaSampler {
    Mixture { cum: Vec<f64>, means: Vec<Vec<f64>>, chol: Vec<DMatrix<f64>> },
    Product(Vec<Univariate>),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Point(Vec<f64>),
}

enum DesignSampler {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Normal { mean: Vec<f64>, chol: DMatrix<f64> },
    Cauchy { mean: Vec<f64>, chol: DMatrix<f64> },
    Sphere,
}

fn gaussian(rng: &mut ChaCha8Rng, mean: &[f64], chol: &DMatrix<f64>, out: &mut [f64]) {
    let k = mean.len();
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..k {
        out[i] = mean[i] + (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>();
    }
}

impl Univariate {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Univariate::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            Univariate::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Univariate::Uniform { lo, hi } => rng.random_range(lo..hi),
            Univariate::Constant { value } => value,
        }
    }

    fn check(&self, name: &str, issues: &mut Vec<String>) {
        match *self {
            Univariate::Normal { sd, .. } if !(sd > 0.0) => issues.push(format!("{name}: sd must be positive")),
            Univariate::Exponential { rate } if !(rate > 0.0) => issues.push(format!("{name}: rate must be positive")),
            Univariate::Uniform { lo, hi } if !(lo < hi) => issues.push(format!("{name}: need lo < hi")),
            _ => {}
        }
    }
}

impl DgpSpec {
    fn design_dim(&self) -> usize {
        match self.model {
            ModelKind::Intercept => self.dim - 1,
            ModelKind::NoIntercept => self.dim,
        }
    }

    fn build(&self) -> Result<(BetaSampler, DesignSampler)> {
        let mut issues = Vec::new();
        let d = self.dim;
        if d < 2 {
            issues.push("dim: must be at least 2".to_string());
        }
        if self.n == 0 {
            issues.push("n: must be positive".to_string());
        }
        if !issues.is_empty() {
            return Err(Error::config("dgp", issues.join("; ")));
        }
        let beta = match &self.beta {
            BetaLaw::Mixture { components } => {
                if components.is_empty() {
                    issues.push("beta.components: empty mixture".into());
                }
                let wsum: f64 = components.iter().map(|c| c.weight).sum();
                if (wsum - 1.0).abs() > 1e-9 {
                    issues.push(format!("beta.components: weights sum to {wsum}, not 1"));
                }
                let mut cum = Vec::new();
                let mut acc = 0.0;
                let mut chol = Vec::new();
                for (i, c) in components.iter().enumerate() {
                    if c.weight < 0.0 {
                        issues.push(format!("beta.components[{i}].weight: negative"));
                    }
                    if c.mean.len() != d {
                        issues.push(format!("beta.components[{i}].mean: needs {d} entries"));
                    }
                    acc += c.weight;
                    cum.push(acc / wsum);
                    if let Some(l) = check_square(&format!("beta.components[{i}].cov"), &c.cov, d, &mut issues) {
                        chol.push(l);
                    }
                }
                BetaSampler::Mixture { cum, means: components.iter().map(|c| c.mean.clone()).collect(), chol }
            }
            BetaLaw::Product { marginals } => {
                if marginals.len() != d {
                    issues.push(format!("beta.marginals: needs {d} entries"));
                }
                for (i, m) in marginals.iter().enumerate() {
                    m.check(&format!("beta.marginals[{i}]"), &mut issues);
                }
                BetaSampler::Product(marginals.clone())
            }
            BetaLaw::UniformBox { lo, hi } => {
                check_box("beta", lo, hi, d, &mut issues);
                BetaSampler::Box { lo: lo.clone(), hi: hi.clone() }
            }
            BetaLaw::PointMass { at } => {
                if at.len() != d {
                    issues.push(format!("beta.at: needs {d} entries"));
                }
                BetaSampler::Point(at.clone())
            }
        };
        let k = self.design_dim();
        let design = match &self.design {
            DesignLaw::UniformBox { lo, hi } => {
                check_box("design", lo, hi, k, &mut issues);
                DesignSampler::Box { lo: lo.clone(), hi: hi.clone() }
            }
            DesignLaw::Normal { mean, cov } => {
                if mean.len() != k {
                    issues.push(format!("design.mean: needs {k} entries"));
                }
                let chol = check_square("design.cov", cov, k, &mut issues);
                DesignSampler::Normal { mean: mean.clone(), chol: chol.unwrap_or_else(|| DMatrix::identity(k, k)) }
            }
            DesignLaw::Cauchy { mean, scale } => {
                if mean.len() != k {
                    issues.push(format!("design.mean: needs {k} entries"));
                }
                let chol = check_square("design.scale", scale, k, &mut issues);
                DesignSampler::Cauchy { mean: mean.clone(), chol: chol.unwrap_or_else(|| DMatrix::identity(k, k)) }
            }
            DesignLaw::UniformSphere => {
                if self.model == ModelKind::Intercept {
                    issues.push("design: uniform-sphere design requires the no-intercept model".into());
                }
                DesignSampler::Sphere
            }
        };
        if issues.is_empty() {
            Ok((beta, design))
        } else {
            Err(Error::config("dgp", issues.join("; ")))
        }
    }
}

/// Draw 2n rows (X_i, Y_i = ⟨β_i, X_i⟩).
pub fn sample_dgp(spec: &DgpSpec) -> Result<RawDataset> {
    let (bs, ds) = spec.build()?;
    let d = spec.dim;
    let rows = 2 * spec.n;
    let mut rng = seeds::rng(spec.seed);
    let mut x = vec![0.0; rows * d];
    let mut y = Vec::with_capacity(rows);
    let mut betas = Vec::with_capacity(if spec.retain_beta { rows * d } else { 0 });
    let mut b = vec![0.0; d];
    let off = if spec.model == ModelKind::Intercept { 1 } else { 0 };
    for i in 0..rows {
        match &bs {
            BetaSampler::Mixture { cum, means, chol } => {
                let u: f64 = rng.random();
                let c = cum.iter().position(|&p| u < p).unwrap_or(cum.len() - 1);
                gaussian(&mut rng, &means[c], &chol[c], &mut b);
            }
            BetaSampler::Product(m) => {
                for (bj, law) in b.iter_mut().zip(m) {
                    *bj = law.sample(&mut rng);
                }
            }
            BetaSampler::Box { lo, hi } => {
                for j in 0..d {
                    b[j] = rng.random_range(lo[j]..hi[j]);
                }
            }
            BetaSampler::Point(p) => b.copy_from_slice(p),
        }
        let row = &mut x[i * d..(i + 1) * d];
        if off == 1 {
            row[0] = 1.0;
        }
        let xr = &mut row[off..];
        match &ds {
            DesignSampler::Box { lo, hi } => {
                for j in 0..xr.len() {
                    xr[j] = rng.random_range(lo[j]..hi[j]);
                }
            }
            DesignSampler::Normal { mean, chol } => gaussian(&mut rng, mean, chol, xr),
            DesignSampler::Cauchy { mean, chol } => {
                let zeros = vec![0.0; mean.len()];
                gaussian(&mut rng, &zeros, chol, xr);
                let w: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                for (v, m) in xr.iter_mut().zip(mean) {
                    *v = m + *v / w;
                }
            }
            DesignSampler::Sphere => uniform_on_sphere(&mut rng, xr),
        }
        y.push(dot(&b, row));
        if spec.retain_beta {
            betas.extend_from_slice(&b);
        }
    }
    Ok(RawDataset { dim: d, x, y, model: spec.model, beta: spec.retain_beta.then_some(betas) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: DgpSpec,
}

fn eye(k: usize, s: f64) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = s;
    }
    m
}

fn spec(dim: usize, beta: BetaLaw, design: DesignLaw, model: ModelKind) -> DgpSpec {
    DgpSpec { dim, beta, design, model, n: 500, seed: 0, retain_beta: false }
}

fn cube(d: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    (vec![-a; d], vec![a; d])
}

/// Named DGPs of the simulation studies. `n` and `seed` are placeholders.
pub fn builtin_scenarios() -> Vec<Scenario> {
    use ModelKind::*;
    let uni3 = || {
        let (lo, hi) = cube(3, 5.0);
        BetaLaw::UniformBox { lo, hi }
    };
    let norm3 = || BetaLaw::Mixture { components: vec![GaussianComponent::isotropic(1.0, vec![0.0; 3], 1.0)] };
    let xbox3 = || {
        let (lo, hi) = cube(3, 5.0);
        DesignLaw::UniformBox { lo, hi }
    };
    let xnorm3 = || DesignLaw::Normal { mean: vec![3.0, 0.0, 0.0], cov: eye(3, 2.0) };
    let cauchy2 = || DesignLaw::Cauchy { mean: vec![0.0; 2], scale: eye(2, 1.0) };
    let gauss2 = || DesignLaw::Normal { mean: vec![0.0; 2], cov: eye(2, 1.0) };
    let box2 = || {
        let (lo, hi) = cube(2, 5.0);
        DesignLaw::UniformBox { lo, hi }
    };
    let uni2 = || {
        let (lo, hi) = cube(2, 5.0);
        BetaLaw::UniformBox { lo, hi }
    };
    vec![
        Scenario {
            name: "trimodal-map",
            description: "d = 2, three-component normal mixture, directions uniform on the circle",
            spec: spec(
                2,
                BetaLaw::Mixture {
                    components: vec![
                        GaussianComponent::isotropic(1.0 / 3.0, vec![-0.4, -0.57], 0.2),
                        GaussianComponent::isotropic(1.0 / 3.0, vec![1.5, -0.52], 0.2),
                        GaussianComponent::isotropic(1.0 / 3.0, vec![0.45, 1.6], 0.15),
                    ],
                },
                DesignLaw::UniformSphere,
                NoIntercept,
            ),
        },
        Scenario {
            name: "trimodal-null",
            description: "d = 2, uniform coefficients on [-5, 5]^2, directions uniform on the circle",
            spec: spec(2, uni2(), DesignLaw::UniformSphere, NoIntercept),
        },
        Scenario {
            name: "cube-design-null",
            description: "d = 3 without intercept, X ~ Unif[-5,5]^3, beta ~ Unif[-5,5]^3",
            spec: spec(3, uni3(), xbox3(), NoIntercept),
        },
        Scenario {
            name: "cube-design-normal",
            description: "d = 3 without intercept, X ~ Unif[-5,5]^3, beta ~ N(0, I)",
            spec: spec(3, norm3(), xbox3(), NoIntercept),
        },
        Scenario {
            name: "shifted-design-null",
            description: "d = 3 without intercept, X ~ N((3,0,0), 2I), beta ~ Unif[-5,5]^3",
            spec: spec(3, uni3(), xnorm3(), NoIntercept),
        },
        Scenario {
            name: "shifted-design-normal",
            description: "d = 3 without intercept, X ~ N((3,0,0), 2I), beta ~ N(0, I)",
            spec: spec(3, norm3(), xnorm3(), NoIntercept),
        },
        Scenario {
            name: "cauchy-intercept-null",
            description: "d = 3 with intercept, (X2, X3) standard bivariate Cauchy, beta ~ Unif[-5,5]^3",
            spec: spec(3, uni3(), cauchy2(), Intercept),
        },
        Scenario {
            name: "cauchy-intercept-normal",
            description: "d = 3 with intercept, (X2, X3) standard bivariate Cauchy, beta ~ N(0, I)",
            spec: spec(3, norm3(), cauchy2(), Intercept),
        },
        Scenario {
            name: "gauss-intercept-null",
            description: "d = 3 with intercept, (X2, X3) ~ N(0, I), beta ~ Unif[-5,5]^3",
            spec: spec(3, uni3(), gauss2(), Intercept),
        },
        Scenario {
            name: "gauss-intercept-normal",
            description: "d = 3 with intercept, (X2, X3) ~ N(0, I), beta ~ N(0, I)",
            spec: spec(3, norm3(), gauss2(), Intercept),
        },
        Scenario {
            name: "box-intercept-null",
            description: "d = 3 with intercept, (X2, X3) ~ Unif[-5,5]^2, beta ~ Unif[-5,5]^3",
            spec: spec(3, uni3(), box2(), Intercept),
        },
        Scenario {
            name: "box-intercept-normal",
            description: "d = 3 with intercept, (X2, X3) ~ Unif[-5,5]^2, beta ~ N(0, I)",
            spec: spec(3, norm3(), box2(), Intercept),
        },
        Scenario {
            name: "bimodal-multiscale",
            description: "d = 2, 0.5 N(0, diag(0.05, 0.4)) + 0.5 N((2,0), 0.1 I), directions uniform on the circle",
            spec: spec(
                2,
                BetaLaw::Mixture {
                    components: vec![
                        GaussianComponent { weight: 0.5, mean: vec![0.0, 0.0], cov: vec![0.05, 0.0, 0.0, 0.4] },
                        GaussianComponent::isotropic(0.5, vec![2.0, 0.0], 0.1),
                    ],
                },
                DesignLaw::UniformSphere,
                NoIntercept,
            ),
        },
        Scenario {
            name: "ols-gaussian",
            description: "d = 3 with intercept, Cauchy design, beta ~ N(0, I)",
            spec: spec(3, norm3(), cauchy2(), Intercept),
        },
        Scenario {
            name: "ols-bimodal",
            description: "d = 3 with intercept, Cauchy design, beta ~ 0.5 N(0, 0.1 I) + 0.5 N((2,0,0), 0.1 I)",
            spec: spec(
                3,
                BetaLaw::Mixture {
                    components: vec![
                        GaussianComponent::isotropic(0.5, vec![0.0; 3], 0.1),
                        GaussianComponent::isotropic(0.5, vec![2.0, 0.0, 0.0], 0.1),
                    ],
                },
                cauchy2(),
                Intercept,
            ),
        },
        Scenario {
            name: "ols-exponential",
            description: "d = 3 with intercept, Cauchy design, beta1 exponential with mean 2, (beta2, beta3) ~ N(0, 0.1 I)",
            spec: spec(3, exp_product(0.5), cauchy2(), Intercept),
        },
        Scenario {
            name: "ols-exponential-rate2",
            description: "as ols-exponential but beta1 exponential with rate 2 (mean 1/2)",
            spec: spec(3, exp_product(2.0), cauchy2(), Intercept),
        },
    ]
}

fn exp_product(rate: f64) -> BetaLaw {
    let sd = 0.1f64.sqrt();
    BetaLaw::Product {
        marginals: vec![
            Univariate::Exponential { rate },
            Univariate::Normal { mean: 0.0, sd },
            Univariate::Normal { mean: 0.0, sd },
        ],
    }
}

/// Catalogue lookup with the sample size and seed filled in.
pub fn scenario(name: &str, n: usize, seed: u64) -> Result<DgpSpec> {
    let sc = builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = builtin_scenarios().iter().map(|s| s.name).collect();
            Error::config("scenario", format!("unknown scenario {name:?}; available: {}", names.join(", ")))
        })?;
    Ok(DgpSpec { n, seed, ..sc.spec })
}
