//! Partition functions: closed forms, thermodynamic integration, and fits
//! of the large-`N` expansion of `log Z_{N,β}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::energy::{hamiltonian, Configuration};
use crate::equilibrium::{equilibrium_measure, PotentialSpec};
use crate::error::{Error, Result};
use crate::fluctstats::stats::{batch_means, ess, MIN_BATCHES};
use crate::kernel::{KernelCase, KernelSpec};
use crate::sampler::{run_chains, GibbsParams, Schedule};

/// Exact `log Z_{N,β}` where available:
/// `N = 1` with any quadratic `V`; the 1D log gas with `V = x²/2` (Mehta's
/// integral); the 2D log gas with `V = |x|²` at `β = 2` (Ginibre).
pub fn logz_closed_form(n: usize, beta: f64, kernel: &KernelSpec, potential: &PotentialSpec) -> Result<f64> {
    if n == 0 || !(beta > 0.0) {
        return Err(Error::Domain("need N >= 1 and β > 0".into()));
    }
    if !potential.is_quadratic() {
        return Err(Error::Capability("closed forms need a quadratic potential".into()));
    }
    let a = potential.a();
    let d = kernel.dim() as f64;
    if n == 1 {
        // ∫ exp(-(β/2) a|x|²) dx.
        return Ok(0.5 * d * (2.0 * PI / (a * beta)).ln());
    }
    let nf = n as f64;
    match kernel.case() {
        KernelCase::Log1 if (a - 0.5).abs() < 1e-15 => {
            // x = σ y with σ² = 2/(βN) turns the weight into exp(-y²/2).
            let b = 0.5 * beta;
            let power = nf + beta * nf * (nf - 1.0) / 2.0;
            let lg: f64 = (1..=n).map(|j| ln_gamma(1.0 + j as f64 * b) - ln_gamma(1.0 + b)).sum();
            Ok(0.5 * power * (2.0 / (beta * nf)).ln() + 0.5 * nf * (2.0 * PI).ln() + lg)
        }
        KernelCase::Log2 if (a - 1.0).abs() < 1e-15 && beta == 2.0 => {
            let lf: f64 = (1..=n).map(|k| ln_gamma(k as f64 + 1.0)).sum();
            Ok(-0.5 * nf * (nf + 1.0) * nf.ln() + nf * PI.ln() + lf)
        }
        _ => Err(Error::Capability(format!(
            "no closed form for {:?} with a = {a}, β = {beta}",
            kernel.case()
        ))),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Batch-means estimate of `E_β[H_N]` over decorrelated samples.
pub fn mean_energy_estimate(params: &GibbsParams, samples: &[Configuration]) -> Result<Estimate> {
    let hs: Vec<f64> = samples
        .par_iter()
        .map(|c| hamiltonian(c, &params.potential, &params.kernel))
        .collect::<Result<_>>()?;
    mean_energy_of(&hs)
}

/// Same, from precomputed energies.
pub fn mean_energy_of(hs: &[f64]) -> Result<Estimate> {
    let e = ess(hs);
    if e < 20.0 || hs.len() < MIN_BATCHES {
        return Err(Error::InsufficientData(format!("effective sample size {e:.1} < 20")));
    }
    let (value, se) = batch_means(hs, MIN_BATCHES)?;
    Ok(Estimate { value, se })
}

/// Settings for thermodynamic integration.
#[derive(Clone, Copy, Debug)]
pub struct TiSettings {
    pub schedule: Schedule,
    pub chains: u64,
    pub seed: u64,
    /// Initial number of trapezoid intervals.
    pub intervals: usize,
    pub max_intervals: usize,
    /// Required bound on the combined (statistical + quadrature) error.
    pub tol: f64,
}

impl Default for TiSettings {
    fn default() -> Self {
        Self {
            schedule: Schedule::new(2000, 2),
            chains: 2,
            seed: 1,
            intervals: 4,
            max_intervals: 32,
            tol: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TiNode {
    pub beta: f64,
    pub mean_energy: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TiEstimate {
    pub anchor: f64,
    pub value: f64,
    pub statistical_error: f64,
    pub quadrature_error: f64,
    pub nodes: Vec<TiNode>,
}

impl TiEstimate {
    pub fn error(&self) -> f64 {
        self.statistical_error + self.quadrature_error
    }
}

fn node_estimate(base: &GibbsParams, beta: f64, s: &TiSettings, index: u64) -> Result<TiNode> {
    let params = GibbsParams::new(beta, base.n, base.kernel, base.potential.clone())?;
    // Node streams are disjoint from each other: seed offset by the node index.
    let seed = s.seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let runs = run_chains(&params, s.schedule, seed, s.chains, |st| {
        hamiltonian(&st.config, &params.potential, &params.kernel).unwrap_or(f64::NAN)
    })?;
    let mut all = Vec::new();
    for (hs, _) in runs {
        all.extend(hs);
    }
    let est = mean_energy_of(&all)?;
    Ok(TiNode { beta, mean_energy: est.value, se: est.se })
}

/// `log Z(β_target) = log Z(β_anchor) - ∫ ½ N^{min(2/d-1,0)} E_β'[H_N] dβ'`
/// by a trapezoid rule refined by interval doubling until the quadrature
/// error estimate (difference of successive refinements over 3) is below
/// half the tolerance.
pub fn logz_estimate_ti(params: &GibbsParams, beta_anchor: f64, beta_target: f64, settings: &TiSettings) -> Result<TiEstimate> {
    let anchor = logz_closed_form(params.n, beta_anchor, &params.kernel, &params.potential)?;
    if beta_anchor == beta_target {
        return Ok(TiEstimate {
            anchor,
            value: anchor,
            statistical_error: 0.0,
            quadrature_error: 0.0,
            nodes: Vec::new(),
        });
    }
    if !(beta_target > 0.0) || settings.intervals == 0 {
        return Err(Error::Domain("target β must be positive and the grid non-empty".into()));
    }
    let norm = params.normalization();
    let span = beta_target - beta_anchor;
    let mut intervals = settings.intervals;
    let mut nodes: Vec<Option<TiNode>> = Vec::new();
    let mut previous: Option<f64> = None;
    loop {
        let betas: Vec<f64> = (0..=intervals)
            .map(|i| beta_anchor + span * i as f64 / intervals as f64)
            .collect();
        // Reuse nodes of the coarser grid (every other node).
        let mut next: Vec<Option<TiNode>> = vec![None; intervals + 1];
        if !nodes.is_empty() {
            for (i, n) in nodes.into_iter().enumerate() {
                next[2 * i] = n;
            }
        }
        let missing: Vec<usize> = (0..=intervals).filter(|&i| next[i].is_none()).collect();
        let fresh: Vec<(usize, TiNode)> = missing
            .par_iter()
            .map(|&i| node_estimate(params, betas[i], settings, (intervals * 1000 + i) as u64).map(|n| (i, n)))
            .collect::<Result<_>>()?;
        for (i, n) in fresh {
            next[i] = Some(n);
        }
        nodes = next;
        let h = span / intervals as f64;
        let mut integral = 0.0;
        let mut var = 0.0;
        for (i, n) in nodes.iter().enumerate() {
            let n = n.as_ref().expect("filled");
            let w = if i == 0 || i == intervals { 0.5 * h } else { h };
            integral += w * 0.5 * norm * n.mean_energy;
            var += (w * 0.5 * norm * n.se).powi(2);
        }
        let value = anchor - integral;
        let quad_err = previous.map(|p| (value - p).abs() / 3.0).unwrap_or(f64::INFINITY);
        let stat_err = var.sqrt();
        let done = quad_err <= 0.5 * settings.tol.min(f64::MAX) || intervals * 2 > settings.max_intervals;
        if done && previous.is_some() {
            let est = TiEstimate {
                anchor,
                value,
                statistical_error: stat_err,
                quadrature_error: quad_err,
                nodes: nodes.into_iter().map(|n| n.expect("filled")).collect(),
            };
            if est.error() > settings.tol {
                return Err(Error::Tolerance {
                    what: "thermodynamic integration".into(),
                    achieved: est.error(),
                    requested: settings.tol,
                });
            }
            return Ok(est);
        }
        previous = Some(value);
        intervals *= 2;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LogZEntry {
    pub n: usize,
    pub value: f64,
    pub se: f64,
    /// Closed-form anchor rather than an estimate.
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyReport {
    pub beta: f64,
    pub entries: Vec<LogZEntry>,
    /// Exponent of the leading term, `min(2, 2/d + 1)`.
    pub leading_power: f64,
    pub fit_leading: f64,
    pub fit_nlogn: Option<f64>,
    pub fit_linear: f64,
    pub predicted_leading: f64,
    /// `β/(2d)` in the log cases.
    pub predicted_nlogn: Option<f64>,
    pub residuals: Vec<f64>,
    /// Smallest `C` with `log Z <= lead + (β/(2d)) N log N + C(1+β)N` on the inputs.
    pub upper_bound_constant: f64,
}

/// Least-squares fit of `log Z ≈ A N^p + B N log N · 1_log + C N`.
pub fn expansion_fit(entries: &[LogZEntry], beta: f64, kernel: &KernelSpec, potential: &PotentialSpec) -> Result<FreeEnergyReport> {
    if entries.len() < 4 {
        return Err(Error::InsufficientData("expansion fit needs at least 4 values of N".into()));
    }
    let eqm = equilibrium_measure(potential, *kernel)?;
    let (iv, _) = eqm.iv_and_c();
    let d = kernel.dim() as f64;
    let p = (2.0f64).min(2.0 / d + 1.0);
    let log = kernel.is_log();
    let cols = if log { 3 } else { 2 };
    let design: Vec<Vec<f64>> = entries
        .iter()
        .map(|e| {
            let nf = e.n as f64;
            let mut row = vec![nf.powf(p)];
            if log {
                row.push(nf * nf.ln());
            }
            row.push(nf);
            row
        })
        .collect();
    let x = nalgebra::DMatrix::from_fn(entries.len(), cols, |i, j| design[i][j]);
    let y = nalgebra::DVector::from_iterator(entries.len(), entries.iter().map(|e| e.value));
    // Column scaling keeps the normal equations well conditioned.
    let scale: Vec<f64> = (0..cols).map(|j| x.column(j).norm()).collect();
    let xs = nalgebra::DMatrix::from_fn(entries.len(), cols, |i, j| x[(i, j)] / scale[j]);
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Consistency("rank-deficient expansion fit".into()));
    }
    let coef = svd.solve(&y, 1e-14 * smax).map_err(|e| Error::Consistency(e.to_string()))?;
    let coef: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c / s).collect();
    let fitted = &x * nalgebra::DVector::from_vec(coef.clone());
    let residuals: Vec<f64> = (0..entries.len()).map(|i| y[i] - fitted[i]).collect();
    let predicted_leading = -0.5 * beta * iv;
    let predicted_nlogn = log.then(|| beta / (2.0 * d));
    let upper_bound_constant = entries
        .iter()
        .map(|e| {
            let nf = e.n as f64;
            let lead = predicted_leading * nf.powf(p) + predicted_nlogn.unwrap_or(0.0) * nf * nf.ln();
            (e.value - lead) / ((1.0 + beta) * nf)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FreeEnergyReport {
        beta,
        entries: entries.to_vec(),
        leading_power: p,
        fit_leading: coef[0],
        fit_nlogn: log.then(|| coef[1]),
        fit_linear: coef[cols - 1],
        predicted_leading,
        predicted_nlogn,
        residuals,
        upper_bound_constant,
    })
}

/// Closed-form entries for a list of `N`.
pub fn closed_form_entries(ns: &[usize], beta: f64, kernel: &KernelSpec, potential: &PotentialSpec) -> Result<Vec<LogZEntry>> {
    ns.iter()
        .map(|&n| {
            Ok(LogZEntry {
                n,
                value: logz_closed_form(n, beta, kernel, potential)?,
                se: 0.0,
                exact: true,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use crate::sampler::{chain_rng, mcmc_run};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn line() -> (KernelSpec, PotentialSpec) {
        (KernelSpec::log1(), PotentialSpec::quadratic(0.5).unwrap())
    }

    #[test]
    fn one_particle() {
        for (k, a) in [(KernelSpec::log1(), 0.5), (KernelSpec::log2(), 1.0), (KernelSpec::coulomb(3).unwrap(), 0.7)] {
            for beta in [0.5, 2.0, 3.0] {
                let d = k.dim() as f64;
                let want = 0.5 * d * (2.0 * PI / (a * beta)).ln();
                let got = logz_closed_form(1, beta, &k, &PotentialSpec::quadratic(a).unwrap()).unwrap();
                assert!((got - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_particles_on_the_line_match_quadrature() {
        let (k, v) = line();
        for beta in [1.0f64, 2.0, 4.0] {
            // ∫∫ |x-y|^β exp(-(β/2)·2·(x² + y²)/2) dx dy over a box holding all mass.
            let l = 12.0 / beta.sqrt();
            let inner = |x: f64| {
                integrate(
                    |y: f64| (x - y).abs().powf(beta) * (-0.5 * beta * (x * x + y * y)).exp(),
                    -l,
                    x,
                    1e-15,
                    1e-13,
                )
                .value
                    + integrate(
                        |y: f64| (x - y).abs().powf(beta) * (-0.5 * beta * (x * x + y * y)).exp(),
                        x,
                        l,
                        1e-15,
                        1e-13,
                    )
                    .value
            };
            let z = integrate(inner, -l, l, 1e-15, 1e-12).value;
            let want = logz_closed_form(2, beta, &k, &v).unwrap();
            assert!((z.ln() - want).abs() < 1e-6, "β={beta}: {} vs {want}", z.ln());
        }
    }

    #[test]
    fn ginibre_two_particles_match_monte_carlo() {
        // Importance sampling from the Gaussian exp(-N|z|²) per point.
        let k = KernelSpec::log2();
        let v = PotentialSpec::quadratic(1.0).unwrap();
        let mut rng = chain_rng(3, 0);
        let m = 400_000;
        let s = (1.0f64 / 4.0).sqrt();
        let vals: Vec<f64> = (0..m)
            .map(|_| {
                let z: Vec<f64> = (0..4).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
                (z[0] - z[2]).powi(2) + (z[1] - z[3]).powi(2)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        let zhat = (PI / 2.0).powi(2) * mean;
        let se = (PI / 2.0).powi(2) * sd / (m as f64).sqrt();
        let want = logz_closed_form(2, 2.0, &k, &v).unwrap().exp();
        assert!((zhat - want).abs() < 3.0 * se, "{zhat} vs {want} ± {se}");
    }

    #[test]
    fn unsupported_cases() {
        let v = PotentialSpec::quadratic(1.0).unwrap();
        assert!(matches!(logz_closed_form(4, 1.0, &KernelSpec::log2(), &v), Err(Error::Capability(_))));
        assert!(matches!(logz_closed_form(4, 2.0, &KernelSpec::log1(), &v), Err(Error::Capability(_))));
    }

    #[test]
    fn mean_energy_one_particle() {
        let (k, v) = line();
        for beta in [1.0, 2.0] {
            let p = GibbsParams::new(beta, 1, k, v.clone()).unwrap();
            let (samples, _) = mcmc_run(&p, Schedule::new(60_000, 3), 9, 0).unwrap();
            let e = mean_energy_estimate(&p, &samples).unwrap();
            assert!((e.value - 1.0 / beta).abs() < 3.5 * e.se, "{e:?}");
            let (thin, _) = mcmc_run(&p, Schedule::new(60_000, 7), 10, 0).unwrap();
            let e2 = mean_energy_estimate(&p, &thin).unwrap();
            assert!((e.value - e2.value).abs() < 3.5 * (e.se.hypot(e2.se)));
        }
        let p = GibbsParams::new(2.0, 1, k, v).unwrap();
        let (few, _) = mcmc_run(&p, Schedule::new(20, 1), 9, 0).unwrap();
        assert!(matches!(mean_energy_estimate(&p, &few), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn mean_energy_two_particles_match_quadrature() {
        // E[H] = ∫∫ H e^{-H} / Z at β = 2 with H = -2 log|x-y| + (x² + y²).
        let (k, v) = line();
        let l = 10.0;
        let h = |x: f64, y: f64| -2.0 * (x - y).abs().ln() + x * x + y * y;
        let w = |x: f64, y: f64| (x - y).powi(2) * (-(x * x + y * y)).exp();
        let nested = |f: &dyn Fn(f64, f64) -> f64| {
            integrate(
                |x| integrate(|y| f(x, y), -l, x, 1e-14, 1e-12).value + integrate(|y| f(x, y), x, l, 1e-14, 1e-12).value,
                -l,
                l,
                1e-14,
                1e-12,
            )
            .value
        };
        let z = nested(&|x, y| w(x, y));
        let eh = nested(&|x, y| if x == y { 0.0 } else { h(x, y) * w(x, y) }) / z;
        let p = GibbsParams::new(2.0, 2, k, v).unwrap();
        let (samples, _) = mcmc_run(&p, Schedule::new(80_000, 2), 4, 0).unwrap();
        let e = mean_energy_estimate(&p, &samples).unwrap();
        assert!((e.value - eh).abs() < 3.5 * e.se, "{e:?} vs {eh}");
    }

    #[test]
    fn ti_trivial_and_short() {
        let (k, v) = line();
        let p = GibbsParams::new(2.0, 4, k, v).unwrap();
        let s = TiSettings { schedule: Schedule::new(3000, 2), ..TiSettings::default() };
        let same = logz_estimate_ti(&p, 2.0, 2.0, &s).unwrap();
        assert_eq!(same.value, logz_closed_form(4, 2.0, &k, &p.potential).unwrap());
        let est = logz_estimate_ti(&p, 2.0, 3.0, &s).unwrap();
        let want = logz_closed_form(4, 3.0, &k, &p.potential).unwrap();
        assert!((est.value - want).abs() < 3.0 * est.error() + 0.02, "{est:?} vs {want}");
    }

    #[test]
    fn leading_coefficient_from_closed_forms() {
        let (k, v) = line();
        let entries = closed_form_entries(&[8, 16, 32, 64], 2.0, &k, &v).unwrap();
        let rep = expansion_fit(&entries, 2.0, &k, &v).unwrap();
        assert!((rep.fit_leading / rep.predicted_leading - 1.0).abs() < 0.05);
        assert!((rep.fit_nlogn.unwrap() / rep.predicted_nlogn.unwrap() - 1.0).abs() < 0.15);
        assert!(rep.upper_bound_constant <= 10.0 * 3.0);
        // log Z / N² decreases monotonically toward -(β/2) I_V.
        let ratios: Vec<f64> = entries.iter().map(|e| e.value / (e.n * e.n) as f64).collect();
        for w in ratios.windows(2) {
            assert!((w[1] - rep.predicted_leading).abs() < (w[0] - rep.predicted_leading).abs());
        }
        assert!(expansion_fit(&entries[..3], 2.0, &k, &v).is_err());
    }
}
