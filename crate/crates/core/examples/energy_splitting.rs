//! Splits H_N into N² I_V + 2N Σ ζ(x_i) + F_N for a random configuration
//! of each kernel family and prints the residual.

use coulomb_lab::energy::{splitting_terms, Configuration};
use coulomb_lab::equilibrium::{equilibrium_measure, PotentialSpec};
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::chain_rng;
use rand::Rng;

fn main() -> coulomb_lab::Result<()> {
    let mut rng = chain_rng(7, 0);
    let cases = [
        ("log1", KernelSpec::log1(), 0.5),
        ("log2", KernelSpec::log2(), 1.0),
        ("coul d=3", KernelSpec::coulomb(3)?, 1.0),
    ];
    println!("{:<14} {:>4} {:>14} {:>14} {:>12}", "kernel", "N", "H_N", "F_N", "residual");
    for (name, kernel, a) in cases {
        let v = PotentialSpec::quadratic(a)?;
        let eqm = equilibrium_measure(&v, kernel)?;
        let n = 50;
        let d = kernel.dim();
        let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let config = Configuration::new(d, coords)?;
        let t = splitting_terms(&config, &v, &eqm, &kernel)?;
        println!("{name:<14} {n:>4} {:>14.6} {:>14.6} {:>12.3e}", t.h_n, t.f_n, t.residual);
    }
    Ok(())
}
