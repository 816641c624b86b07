//! Semicircle law from the β-Hermite tridiagonal model and from the
//! one-dimensional log gas with V = x²/2.

use coulomb_lab::equilibrium::{equilibrium_measure, semicircle_cdf, PotentialSpec};
use coulomb_lab::fluctstats::stats::sup_distance;
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::{chain_rng, mcmc_run, sample_beta_tridiag, GibbsParams, Schedule};

fn main() -> coulomb_lab::Result<()> {
    let mut rng = chain_rng(5, 0);
    for beta in [1.0, 2.0, 4.0] {
        let mut eig = Vec::new();
        for _ in 0..50 {
            eig.extend(sample_beta_tridiag(200, beta, &mut rng)?);
        }
        println!("tridiagonal β = {beta}: sup distance {:.4}", sup_distance(&eig, |x| semicircle_cdf(2.0, x))?);
    }

    let v = PotentialSpec::quadratic(0.5)?;
    let eqm = equilibrium_measure(&v, KernelSpec::log1())?;
    let params = GibbsParams::new(2.0, 48, KernelSpec::log1(), v)?;
    let (samples, _) = mcmc_run(&params, Schedule::new(10_000, 20), 5, 0)?;
    let xs: Vec<f64> = samples.iter().flat_map(|c| c.coords().to_vec()).collect();
    println!("log gas N = 48: support {:?}", eqm.support);
    println!("log gas N = 48: sup distance {:.4}", sup_distance(&xs, |x| eqm.cdf_1d(x).unwrap_or(f64::NAN))?);
    Ok(())
}
