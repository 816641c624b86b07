//! Exponential moments of the next-order energy and fluctuation variance
//! across system sizes.

use rayon::prelude::*;
use serde::Serialize;

use super::clt::LinearStatistic;
use super::stats::{mean_var, variance_with_se, MIN_BATCHES};
use super::TestFunction;
use crate::energy::{next_order_energy, Configuration};
use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub samples: usize,
    /// `(1/N) log E[exp((β/4)(F_N + (N/d) log N · 1_log))]`.
    pub log_moment: f64,
    pub fluct_var: f64,
    pub fluct_var_se: f64,
    pub insufficient_data: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub beta: f64,
    pub rows: Vec<ConcentrationRow>,
    /// Largest `|log_moment|` over rows with enough data.
    pub max_log_moment: f64,
    /// Ratio of fluctuation variances at the largest and smallest `N`.
    pub variance_growth: f64,
}

/// One row per sample group (each group shares `N`).
pub fn concentration_check(
    groups: &[Vec<Configuration>],
    eqm: &EquilibriumMeasure,
    beta: f64,
    xi: &TestFunction,
) -> Result<ConcentrationReport> {
    let kernel = eqm.kernel();
    let stat = LinearStatistic::new(xi.clone(), eqm)?;
    let mut rows = Vec::new();
    for group in groups {
        let Some(first) = group.first() else {
            continue;
        };
        let n = first.n();
        if group.iter().any(|c| c.n() != n) {
            return Err(Error::Consistency("a sample group mixes particle numbers".into()));
        }
        let nf = n as f64;
        let shift = if kernel.is_log() { nf / kernel.dim() as f64 * nf.ln() } else { 0.0 };
        let energies: Vec<f64> = group
            .par_iter()
            .map(|c| next_order_energy(c, eqm, &kernel))
            .collect::<Result<_>>()?;
        let exps: Vec<f64> = energies.iter().map(|f| 0.25 * beta * (f + shift)).collect();
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_mean = top + (exps.iter().map(|e| (e - top).exp()).sum::<f64>() / exps.len() as f64).ln();
        let fl = stat.eval_all(group);
        let insufficient = group.len() < 2 * MIN_BATCHES;
        let (var, se) = if insufficient {
            (mean_var(&fl).1, f64::NAN)
        } else {
            variance_with_se(&fl, MIN_BATCHES)?
        };
        rows.push(ConcentrationRow {
            n,
            samples: group.len(),
            log_moment: log_mean / nf,
            fluct_var: var,
            fluct_var_se: se,
            insufficient_data: insufficient,
        });
    }
    let good: Vec<&ConcentrationRow> = rows.iter().filter(|r| !r.insufficient_data).collect();
    let max_log_moment = good.iter().map(|r| r.log_moment.abs()).fold(f64::NAN, f64::max);
    let variance_growth = match (good.iter().min_by_key(|r| r.n), good.iter().max_by_key(|r| r.n)) {
        (Some(a), Some(b)) if a.n != b.n => b.fluct_var / a.fluct_var,
        _ => f64::NAN,
    };
    Ok(ConcentrationReport { beta, rows, max_log_moment, variance_growth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};
    use crate::kernel::KernelSpec;
    use crate::sampler::{chain_rng, sample_ginibre};

    #[test]
    fn degenerate_input_is_flagged() {
        let eqm = equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap();
        let xi = TestFunction::radial_bump(vec![0.0, 0.0], 0.2, 0.6).unwrap();
        let mut rng = chain_rng(1, 0);
        let one = vec![sample_ginibre(16, &mut rng).unwrap()];
        let rep = concentration_check(&[one], &eqm, 2.0, &xi).unwrap();
        assert!(rep.rows[0].insufficient_data);
        assert!(rep.max_log_moment.is_nan());
    }

    #[test]
    fn ginibre_moments_stay_bounded() {
        let eqm = equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap();
        let xi = TestFunction::radial_bump(vec![0.0, 0.0], 0.2, 0.6).unwrap();
        let mut rng = chain_rng(2, 0);
        let groups: Vec<Vec<Configuration>> = [16, 32]
            .iter()
            .map(|&n| (0..60).map(|_| sample_ginibre(n, &mut rng).unwrap()).collect())
            .collect();
        let rep = concentration_check(&groups, &eqm, 2.0, &xi).unwrap();
        assert!(rep.max_log_moment < 10.0, "{rep:?}");
        assert!(rep.variance_growth < 3.0, "{rep:?}");
    }
}
