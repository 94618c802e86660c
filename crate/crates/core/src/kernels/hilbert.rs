use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Principal-value Hilbert transform (1/π) p.v.∫ f(s)/(u − s) ds of samples on
/// a uniform grid, with f taken as zero off the grid.
///
/// Pairing the points u ± kΔ turns the singular integral into the trapezoid
/// rule for the even integrand (f(u−x) − f(u+x))/x on [0, ∞), whose value at
/// x = 0 is −2f′(u). The derivative comes from a central difference.
pub fn hilbert_transform(u: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let n = u.len();
    if n != f.len() {
        return Err(Error::config("grid", "abscissae and values differ in length"));
    }
    if n < 3 {
        return Err(Error::config("grid", "need at least three abscissae"));
    }
    let du = (u[n - 1] - u[0]) / (n - 1) as f64;
    if !(du > 0.0) {
        return Err(Error::config("grid", "abscissae must be increasing"));
    }
    for (i, x) in u.iter().enumerate() {
        if (x - (u[0] + i as f64 * du)).abs() > 1e-9 * du.max(x.abs()) {
            return Err(Error::config("grid", format!("non-uniform spacing at index {i}")));
        }
    }
    let nz: Vec<usize> = (0..n).filter(|&j| f[j] != 0.0).collect();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for &j in &nz {
            if j != i {
                s += f[j] / (i as f64 - j as f64);
            }
        }
        let fp = if i == 0 {
            f[1] - f[0]
        } else if i == n - 1 {
            f[n - 1] - f[n - 2]
        } else {
            0.5 * (f[i + 1] - f[i - 1])
        };
        *o = (s - fp) / PI;
    }
    Ok(out)
}
