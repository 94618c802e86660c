//! Calibrated level and power of the mode test for the cube design at
//! n = 250, with binomial standard errors.
//!
//! cargo run --release --example calibration

use rcmode::kernels::KernelTable;
use rcmode::studies::{level_power, ModeStudy, StudySize};

fn main() -> rcmode::Result<()> {
    let kt = KernelTable::new(3)?;
    let study = ModeStudy::from_scenarios("cube-design-null", "cube-design-normal", 250)?;
    let size = StudySize { reps: 200, cal_reps: 200, n_mc: 0 };
    let q = study.calibrate(&kt, 0.05, size.cal_reps, 1)?;
    println!("calibrated threshold on min_j sgn(c_d) sqrt(n) T_j / sigma_j: {:.3}", q.kappa);
    let [level, power] = level_power(&study, &kt, 0.05, size, 2)?;
    println!("level: {level}");
    println!("power: {power}");
    Ok(())
}
