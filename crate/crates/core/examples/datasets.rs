//! The scenario catalogue and the CSV round trip.
//!
//! cargo run --release --example datasets

use rcmode::datagen::{builtin_scenarios, sample_dgp, scenario};
use rcmode::io::{read_dataset, write_dataset};

fn main() -> rcmode::Result<()> {
    for s in builtin_scenarios() {
        println!("{:<24} {}", s.name, s.description);
    }
    let mut spec = scenario("cauchy-intercept-normal", 5, 1)?;
    spec.retain_beta = true;
    let raw = sample_dgp(&spec)?;
    let mut csv = Vec::new();
    write_dataset(&mut csv, &raw)?;
    print!("\n{}", String::from_utf8_lossy(&csv));
    let back = read_dataset(csv.as_slice(), true)?;
    assert_eq!(back, raw);
    Ok(())
}
