//! Compares F_N with the renormalized energy of the truncated electric
//! field for ten charges in the unit disk.

use coulomb_lab::energy::field::{electric_energy, truncated_field_grid, truncation_correction, GridParams};
use coulomb_lab::energy::{next_order_energy, Configuration, TruncationVector};
use coulomb_lab::equilibrium::{equilibrium_measure, PotentialSpec};
use coulomb_lab::kernel::KernelSpec;

fn main() -> coulomb_lab::Result<()> {
    let kernel = KernelSpec::log2();
    let eqm = equilibrium_measure(&PotentialSpec::quadratic(1.0)?, kernel)?;
    let points: Vec<Vec<f64>> = (0..10)
        .map(|k| {
            let t = k as f64 * 2.399963;
            let r = 0.8 * ((k as f64 + 0.5) / 10.0).sqrt();
            vec![r * t.cos(), r * t.sin()]
        })
        .collect();
    let config = Configuration::from_points(&points)?;
    let f_n = next_order_energy(&config, &eqm, &kernel)?;
    println!("F_N = {f_n:.6}");
    for eta in [4e-2, 2e-2, 1e-2] {
        let trunc = TruncationVector::uniform(config.n(), eta)?;
        let field = truncated_field_grid(&config, &eqm, &trunc, GridParams::default())?;
        let e = electric_energy(&field, 1e-2)?;
        let corr = truncation_correction(&config, &eqm, &trunc);
        println!(
            "eta = {eta:.0e}: electric = {:.6} ± {:.1e}, correction = {corr:.3e}, electric - correction - F_N = {:.1e}",
            e.value,
            e.error,
            e.value - corr - f_n
        );
    }
    Ok(())
}
