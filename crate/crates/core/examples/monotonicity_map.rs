//! Arrow map for a trimodal bivariate density: every arrow is a decrease
//! certified at level 0.05. Prints the arrows as CSV for plotting.
//!
//! cargo run --release --example monotonicity_map > arrows.csv

use rcmode::datagen::{sample_dgp, scenario};
use rcmode::geometry::normalize;
use rcmode::io::write_arrows;
use rcmode::kernels::KernelTable;
use rcmode::testing::{monotonicity_map, MapSpec, TestSettings, Verdict};

fn main() -> rcmode::Result<()> {
    let kt = KernelTable::new(2)?;
    let sample = normalize(&sample_dgp(&scenario("trimodal-map", 20_000, 11)?)?, 11)?;
    let out = monotonicity_map(&sample, &kt, &TestSettings::default(), &MapSpec::default())?;
    let Verdict::Arrows { arrows } = &out.verdict else { unreachable!() };
    eprintln!("{} of {} tests rejected", arrows.len(), out.family.len());
    write_arrows(std::io::stdout().lock(), arrows)
}
