//! Energy minimizers of the 2D log gas and the next-order term of min H_N.

use coulomb_lab::jellium::minimizer_expansion_check;

fn main() -> coulomb_lab::Result<()> {
    let check = minimizer_expansion_check(&[16, 32, 64])?;
    for row in &check.rows {
        println!("N = {:>3}: min H_N = {:.6}, scaled remainder {:.5}", row.n, row.h_min, row.scaled);
    }
    println!("target {:.5}, trending {}, within 10% {}", check.target, check.trending, check.within_10pct);
    Ok(())
}
