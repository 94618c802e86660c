//! The transformed kernels ψ_d = H_d φ̃^{(d−1)} for d = 2 and d = 3.
//!
//! cargo run --release --example kernel_table

use rcmode::kernels::{c_d, default_test_function, KernelTable};

fn main() -> rcmode::Result<()> {
    let phi = default_test_function();
    println!("phi normalizing constant c = {}", phi.normalizing_constant());
    for d in [2, 3] {
        let kt = KernelTable::new(d)?;
        println!(
            "\nd = {d}: c_d = {:.4}, |psi|^2 = {:.4}, compact support: {}",
            c_d(d),
            kt.psi_norm_sq(),
            kt.is_compact()
        );
        for u in [0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0, 20.0] {
            println!("  psi({u:>5}) = {:+.6}", kt.psi(u));
        }
    }
    Ok(())
}
