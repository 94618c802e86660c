//! Robust least squares of S on Θ for three coefficient laws. The
//! regression recovers E β, which is a mode only for the symmetric
//! unimodal law.
//!
//! cargo run --release --example ols_baseline

use rcmode::datagen::{sample_dgp, scenario};
use rcmode::testing::{ols_baseline, HcType};

fn main() -> rcmode::Result<()> {
    for name in ["ols-gaussian", "ols-bimodal", "ols-exponential"] {
        let raw = sample_dgp(&scenario(name, 1000, 2024)?)?;
        let r = ols_baseline(&raw, HcType::Hc1)?;
        println!("{name:<16} gamma = [{}]", fmt(&r.gamma));
        println!("{:<16} se    = [{}]", "", fmt(&r.se));
    }
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>().join(", ")
}
