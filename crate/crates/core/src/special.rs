use std::f64::consts::PI;

/// Γ(k/2) for a positive integer k, exact recursion from Γ(1/2) and Γ(1).
pub fn gamma_half(k: usize) -> f64 {
    assert!(k > 0, "gamma_half needs k >= 1");
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if k % 2 == 0 { 1.0 } else { 0.5 };
    while 2.0 * x < k as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface measure of the unit sphere S^k ⊂ R^{k+1}; |S^0| = 2.
pub fn sphere_area(k: usize) -> f64 {
    2.0 * PI.powf((k as f64 + 1.0) / 2.0) / gamma_half(k + 1)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
