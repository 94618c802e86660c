use super::smoothing_kernel;
use crate::special::dot;

/// Sample points on the sphere sorted by their last coordinate, with the
/// matching S values, for cap queries of chordal radius √2·h.
#[derive(Debug, Clone)]
pub(crate) struct SortedCloud {
    pub dim: usize,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
    key: Vec<f64>,
}

impl SortedCloud {
    pub fn new(dim: usize, theta: &[f64], s: &[f64]) -> Self {
        let n = s.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| theta[a * dim + dim - 1].total_cmp(&theta[b * dim + dim - 1]));
        let mut t = Vec::with_capacity(n * dim);
        let mut ss = Vec::with_capacity(n);
        let mut key = Vec::with_capacity(n);
        for &i in &idx {
            t.extend_from_slice(&theta[i * dim..(i + 1) * dim]);
            ss.push(s[i]);
            key.push(theta[i * dim + dim - 1]);
        }
        Self { dim, theta: t, s: ss, key }
    }

    /// Calls `f(i, K((1 − ⟨Θ_i, θ⟩)/h²))` for every point inside the cap.
    #[inline]
    pub fn for_each_in_cap<F: FnMut(usize, f64)>(&self, theta: &[f64], h: f64, mut f: F) {
        let d = self.dim;
        let r = std::f64::consts::SQRT_2 * h;
        let z = theta[d - 1];
        let lo = self.key.partition_point(|&k| k < z - r);
        let hi = self.key.partition_point(|&k| k <= z + r);
        let h2 = h * h;
        for i in lo..hi {
            let u = (1.0 - dot(&self.theta[i * d..(i + 1) * d], theta)) / h2;
            if u < 1.0 {
                f(i, smoothing_kernel(u));
            }
        }
    }
}

/// Angular kernel weights of the points near a fixed θ, sorted by S, so that
/// s ↦ f̂_{S,Θ}(s, θ) can be evaluated by a short window scan.
#[derive(Debug, Clone)]
pub struct JointSlice {
    s: Vec<f64>,
    w: Vec<f64>,
    h: f64,
    inv_h: f64,
    negate: bool,
    floor: f64,
    constant: Option<f64>,
}

impl JointSlice {
    pub(crate) fn constant(value: f64) -> Self {
        Self { s: vec![], w: vec![], h: 1.0, inv_h: 1.0, negate: false, floor: 0.0, constant: Some(value) }
    }

    pub(crate) fn from_cloud(cloud: &SortedCloud, theta: &[f64], h: f64, prefactor: f64, negate: bool, floor: f64) -> Self {
        let mut pairs = Vec::new();
        cloud.for_each_in_cap(theta, h, |i, k| pairs.push((cloud.s[i], k * prefactor)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (s, w) = pairs.into_iter().unzip();
        Self { s, w, h, inv_h: 1.0 / h, negate, floor, constant: None }
    }

    /// Density before the cut-off.
    #[inline]
    pub fn raw(&self, s: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let s = if self.negate { -s } else { s };
        let lo = self.s.partition_point(|&x| x < s - self.h);
        let mut acc = 0.0;
        for i in lo..self.s.len() {
            let u = (self.s[i] - s) * self.inv_h;
            if u > 1.0 {
                break;
            }
            acc += self.w[i] * smoothing_kernel(u);
        }
        acc
    }

    /// Density with the cut-off floor applied.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.raw(s).max(self.floor)
    }

    /// Value the density takes away from all observations.
    pub fn floor_level(&self) -> f64 {
        self.constant.unwrap_or(self.floor)
    }

    pub fn neighbours(&self) -> usize {
        self.s.len()
    }
}
