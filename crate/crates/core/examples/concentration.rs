//! Exponential moments of F_N and growth of the fluctuation variance with N.

use coulomb_lab::equilibrium::{equilibrium_measure, PotentialSpec};
use coulomb_lab::fluctstats::{concentration_check, TestFunction};
use coulomb_lab::kernel::KernelSpec;
use coulomb_lab::sampler::{mcmc_run, GibbsParams, Schedule};

fn main() -> coulomb_lab::Result<()> {
    let v = PotentialSpec::quadratic(1.0)?;
    let kernel = KernelSpec::log2();
    let eqm = equilibrium_measure(&v, kernel)?;
    let xi = TestFunction::radial_bump(vec![0.2, 0.1], 0.1, 0.5)?;
    let beta = 2.0;
    let groups = [16, 32, 64]
        .iter()
        .map(|&n| {
            let params = GibbsParams::new(beta, n, kernel, v.clone())?;
            Ok(mcmc_run(&params, Schedule::new(8000, 10), 13, 0)?.0)
        })
        .collect::<coulomb_lab::Result<Vec<_>>>()?;
    let report = concentration_check(&groups, &eqm, beta, &xi)?;
    for row in &report.rows {
        println!(
            "N = {:>3}: (1/N) log E exp = {:>8.4}, Var fluct = {:.4} ± {:.4}",
            row.n, row.log_moment, row.fluct_var, row.fluct_var_se
        );
    }
    println!("max |log moment| {:.4}, variance growth {:.3}", report.max_log_moment, report.variance_growth);
    Ok(())
}
