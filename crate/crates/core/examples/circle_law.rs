//! Samples the two-dimensional log gas at β = 2 and compares the radial
//! empirical law with the circle law and with exact Ginibre draws.

use coulomb_lab::equilibrium::PotentialSpec;
use coulomb_lab::fluctstats::stats::{ks_two_sample, sup_distance};
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::{chain_rng, mcmc_run, sample_ginibre, GibbsParams, Schedule};

fn radii(points: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    points.map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

fn main() -> coulomb_lab::Result<()> {
    let n = 64;
    let params = GibbsParams::new(2.0, n, KernelSpec::log2(), PotentialSpec::quadratic(1.0)?)?;
    let (samples, report) = mcmc_run(&params, Schedule::new(20_000, 100), 3, 0)?;
    let mcmc = radii(samples.iter().flat_map(|c| c.points().map(<[f64]>::to_vec).collect::<Vec<_>>()));

    let mut rng = chain_rng(3, 1);
    let mut ginibre = Vec::new();
    for _ in 0..samples.len() {
        let c = sample_ginibre(n, &mut rng)?;
        ginibre.extend(radii(c.points().map(<[f64]>::to_vec)));
    }
    let law = |r: f64| (r * r).min(1.0);
    println!("acceptance {:.3}, {} configurations", report.acceptance, samples.len());
    println!("MCMC    sup |F - r²| = {:.4}", sup_distance(&mcmc, law)?);
    println!("Ginibre sup |F - r²| = {:.4}", sup_distance(&ginibre, law)?);
    let (d, p) = ks_two_sample(&mcmc, &ginibre)?;
    println!("two-sample KS D = {d:.4} (p = {p:.3}, points are correlated)");
    Ok(())
}
