//! Scan [-1.5, 2.5]^2 for modes of the trimodal density on two scales.
//!
//! cargo run --release --example global_scan    (about a minute)

use rcmode::datagen::{sample_dgp, scenario};
use rcmode::geometry::normalize;
use rcmode::kernels::KernelTable;
use rcmode::testing::{global_mode_scan, ModeFamilySpec, ScanSpec, TestSettings, Verdict};

fn main() -> rcmode::Result<()> {
    let kt = KernelTable::new(2)?;
    let sample = normalize(&sample_dgp(&scenario("trimodal-map", 100_000, 5)?)?, 5)?;
    let spec = ScanSpec {
        a1: vec![-1.5, -1.5],
        a2: vec![2.5, 2.5],
        scales: vec![0.5, 0.75],
        family: ModeFamilySpec::default(),
    };
    let out = global_mode_scan(&sample, &kt, &TestSettings::default(), &spec)?;
    println!("{} tests, joint kappa = {:.3}", out.family.len(), out.quantile.kappa);
    for d in &out.diagnostics {
        println!("note: {d}");
    }
    if let Verdict::Candidates { vertices, .. } = &out.verdict {
        println!("vertices with every outward decrease certified:");
        for v in vertices {
            println!("  {v:?}");
        }
    }
    Ok(())
}
