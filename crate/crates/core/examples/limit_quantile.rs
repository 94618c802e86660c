//! Monte Carlo quantile κ_n(α) of the Gaussian limit process for a
//! six-test family, and how it moves with α and the number of draws.
//!
//! cargo run --release --example limit_quantile

use rcmode::datagen::{sample_dgp, scenario};
use rcmode::design_density::{fit_design, DesignConfig};
use rcmode::geometry::normalize;
use rcmode::kernels::KernelTable;
use rcmode::limit_sim::{quantile_kappa, LimitConfig, Sampler};
use rcmode::testing::ModeFamilySpec;

fn main() -> rcmode::Result<()> {
    let kt = KernelTable::new(3)?;
    let sample = normalize(&sample_dgp(&scenario("cube-design-normal", 1000, 8)?)?, 8)?;
    let design = fit_design(sample.estimation_half(), &DesignConfig::default())?;
    let family = ModeFamilySpec::default().points(&[0.0; 3], &[1.0])?;

    for alpha in [0.1, 0.05, 0.01] {
        for n_mc in [1000, 5000] {
            let cfg = LimitConfig { n_mc, ..Default::default() };
            let q = quantile_kappa(&family, &design, &kt, alpha, &cfg, 7)?;
            println!("alpha = {alpha:<5} n_mc = {n_mc:<5} kappa = {:.3}", q.kappa);
        }
    }
    let noise = LimitConfig { n_mc: 1000, sampler: Sampler::NoiseField, ..Default::default() };
    let q = quantile_kappa(&family, &design, &kt, 0.05, &noise, 7)?;
    println!("explicit noise field, n_mc = 1000: kappa = {:.3}", q.kappa);
    Ok(())
}
