//! Blown-up nearest-neighbour and pair-correlation statistics in small
//! windows, compared with a Poisson process of the same intensity.

use coulomb_lab::equilibrium::{equilibrium_measure, PotentialSpec};
use coulomb_lab::fluctstats::{local_statistics, poisson_nn_cdf};
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::{mcmc_run, GibbsParams, Schedule};

fn main() -> coulomb_lab::Result<()> {
    let v = PotentialSpec::quadratic(1.0)?;
    let kernel = KernelSpec::log2();
    let eqm = equilibrium_measure(&v, kernel)?;
    let params = GibbsParams::new(2.0, 100, kernel, v)?;
    let (samples, _) = mcmc_run(&params, Schedule::new(6000, 20), 17, 0)?;
    let tags = vec![vec![0.0, 0.0], vec![0.3, 0.0], vec![0.0, -0.3]];
    let r = local_statistics(&samples, &eqm, &tags, 3.0, 12)?;
    let below = |x: f64| r.nn_distances.iter().filter(|&&d| d <= x).count() as f64 / r.nn_distances.len() as f64;
    println!("{} tags, intensity {:.3}, {} distances", r.tags_used, r.intensity, r.nn_distances.len());
    for x in [0.2, 0.4, 0.6, 0.8] {
        println!("P(nn <= {x}) = {:.3}, Poisson {:.3}", below(x), poisson_nn_cdf(2, r.intensity, x));
    }
    for (x, g) in r.pair_correlation.iter().take(6) {
        println!("g({x:.2}) = {g:.3}");
    }
    Ok(())
}
