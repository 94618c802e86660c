//! Direction density of a bivariate Cauchy design with intercept: the
//! hemispherical kernel estimate against the closed form 1/(4π).
//!
//! cargo run --release --example spherical_kde

use rcmode::datagen::{sample_dgp, scenario};
use rcmode::design_density::{fit_design, CauchyTheta, DesignConfig};
use rcmode::geometry::{normalize, sphere_grid};

fn main() -> rcmode::Result<()> {
    let spec = scenario("cauchy-intercept-normal", 10_000, 1)?;
    let sample = normalize(&sample_dgp(&spec)?, 1)?;
    let fit = fit_design(sample.estimation_half(), &DesignConfig::default())?;
    let exact = CauchyTheta::standard(3);
    println!("h_star = {:.3}, h_plus = {:.3}, floor 1/ln n = {:.4}", fit.h_star(), fit.h_plus(), fit.floor_theta());

    let grid = sphere_grid(3, 200)?;
    let mut worst: f64 = 0.0;
    for th in grid.iter().filter(|th| th[0] > 0.05) {
        let rel = (fit.f_theta_hat(th) - exact.eval(th)).abs() / exact.eval(th);
        worst = worst.max(rel);
    }
    println!("closed form 1/(4 pi) = {:.5}", 1.0 / (4.0 * std::f64::consts::PI));
    println!("max relative error of f_hat on the upper hemisphere grid: {:.3}", worst);
    for th in [[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [0.3, 0.0, 0.954]] {
        println!("  theta = {th:?}: f_hat = {:.5}, floored f = {:.5}", fit.f_theta_hat(&th), fit.f_theta(&th));
    }
    Ok(())
}
