//! The acceptance suite: each criterion runs its experiment at the stated
//! size and tolerance and reports named checks.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::energy::field::{electric_energy, truncated_field_grid, truncation_correction, GridParams};
use crate::energy::{next_order_energy, splitting_terms, Configuration, TruncationVector};
use crate::equilibrium::{equilibrium_measure, semicircle_cdf, PotentialSpec};
use crate::error::{Error, Result};
use crate::fluctstats::stats::{ks_two_sample, mean_var, sup_distance, variance_with_se, MIN_BATCHES};
use crate::fluctstats::{clt_report, LinearStatistic, TestFunction};
use crate::jellium::{
    default_etas, lattice_scan_2d, renorm_energy_direct, renorm_energy_periodic, scale_renorm, LatticeSpec,
    PeriodicConfig,
};
use crate::kernel::KernelSpec;
use crate::quad::integrate_pieces;
use crate::sampler::{chain_rng, kostlan_radii, run_chains, sample_beta_tridiag, sample_ginibre, GibbsParams, Schedule};
use crate::thermo::{closed_form_entries, expansion_fit, logz_closed_form, logz_estimate_ti, TiSettings};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable bound, e.g. `< 0.05`.
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, bound: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), value, bound: bound.into(), passed }
    }

    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, format!("< {limit}"), value < limit)
    }

    fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, format!("> {limit}"), value > limit)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    /// Recorded values that carry no pass/fail meaning.
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed) && self.seconds <= self.budget_seconds
    }

    /// One summary line.
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {} ({}): {}/{} checks, {:.1} s of {:.0} s{}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
            self.seconds,
            self.budget_seconds,
            self.error.as_ref().map(|e| format!(", error: {e}")).unwrap_or_default()
        )
    }

    /// Summary line followed by one indented line per check and note.
    pub fn detail(&self) -> String {
        let mut s = self.line();
        for c in &self.checks {
            s.push_str(&format!(
                "\n    {} {}: {:.6e} {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.value,
                c.bound
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("\n    note: {n}"));
        }
        s
    }
}

struct Recorder {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Recorder {
    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn note(&mut self, s: String) {
        self.notes.push(s);
    }
}

fn run<F: FnOnce(&mut Recorder) -> Result<()>>(id: u8, title: &'static str, budget_seconds: f64, body: F) -> CriterionOutcome {
    let start = Instant::now();
    let mut rec = Recorder { checks: Vec::new(), notes: Vec::new() };
    let error = body(&mut rec).err().map(|e| e.to_string());
    let outcome = CriterionOutcome {
        id,
        title,
        checks: rec.checks,
        notes: rec.notes,
        error,
        seconds: start.elapsed().as_secs_f64(),
        budget_seconds,
    };
    log::info!("{}", outcome.line());
    outcome
}

pub const CRITERIA: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionOutcome> {
    Ok(match id {
        1 => criterion_splitting(seed),
        2 => criterion_electric(seed),
        3 => criterion_circle_law(seed),
        4 => criterion_semicircle(seed),
        5 => criterion_clt(seed),
        6 => criterion_concentration(seed),
        7 => criterion_jellium(),
        8 => criterion_partition_function(seed),
        9 => criterion_oracles(seed),
        _ => return Err(Error::Domain(format!("no acceptance criterion {id}"))),
    })
}

pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|&id| run_criterion(id, seed).expect("known id")).collect()
}

fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return p;
        }
    }
}

fn gas(d: usize) -> Result<(KernelSpec, PotentialSpec)> {
    Ok(match d {
        1 => (KernelSpec::log1(), PotentialSpec::quadratic(0.5)?),
        2 => (KernelSpec::log2(), PotentialSpec::quadratic(1.0)?),
        _ => (KernelSpec::coulomb(d)?, PotentialSpec::quadratic(1.0)?),
    })
}

/// Criterion 1: the splitting identity on random configurations.
pub fn criterion_splitting(seed: u64) -> CriterionOutcome {
    run(1, "splitting identity", 5.0, |rec| {
        for d in 1..=3 {
            let (kernel, v) = gas(d)?;
            let eqm = equilibrium_measure(&v, kernel)?;
            for n in [2usize, 8, 32] {
                let mut rng = chain_rng(seed, (d * 1000 + n) as u64);
                let configs: Vec<Configuration> = (0..100)
                    .map(|_| {
                        let coords: Vec<f64> = (0..n).flat_map(|_| uniform_in_ball(&mut rng, d, 1.5 * eqm.radius())).collect();
                        Configuration::new(d, coords)
                    })
                    .collect::<Result<_>>()?;
                let worst = configs
                    .par_iter()
                    .map(|c| {
                        let t = splitting_terms(c, &v, &eqm, &kernel)?;
                        let scale = [t.h_n, t.iv_term, t.zeta_term, t.f_n, 1.0]
                            .iter()
                            .fold(0.0f64, |m, x| m.max(x.abs()));
                        Ok(t.residual.abs() / scale)
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                rec.check(Check::new(
                    format!("max relative residual d={d} N={n}"),
                    worst,
                    "<= 1e-8",
                    worst <= 1e-8,
                ));
            }
        }
        Ok(())
    })
}

/// Criterion 2: the electric representation of `F_N` with truncated charges.
pub fn criterion_electric(seed: u64) -> CriterionOutcome {
    run(2, "electric identity", 120.0, |rec| {
        let (kernel, v) = gas(2)?;
        let eqm = equilibrium_measure(&v, kernel)?;
        let eta = 1e-2;
        let n = 10;
        let mut rng = chain_rng(seed, 2);
        let mut pts: Vec<Vec<f64>> = Vec::new();
        while pts.len() < n {
            let p = uniform_in_ball(&mut rng, 2, 0.9);
            let far = pts.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > 4.0 * eta);
            if far {
                pts.push(p);
            }
        }
        let disjoint = Configuration::from_points(&pts)?;
        let trunc = TruncationVector::uniform(n, eta)?;
        if !trunc.disjoint_for(&disjoint) {
            return Err(Error::Consistency("sampled truncation balls overlap".into()));
        }
        let field = truncated_field_grid(&disjoint, &eqm, &trunc, GridParams::default())?;
        let e = electric_energy(&field, 1e-2)?;
        let f_n = next_order_energy(&disjoint, &eqm, &kernel)?;
        let corr = truncation_correction(&disjoint, &eqm, &trunc);
        let c = 10.0;
        let allowed = (0.01 * f_n.abs()).max(c * n as f64 * eta * eta + e.error);
        rec.check(Check::new(
            "|electric - F_N| (disjoint balls)",
            (e.value - f_n).abs(),
            format!("<= {allowed:.3e}"),
            (e.value - f_n).abs() <= allowed,
        ));
        let identity = (e.value - corr - f_n).abs();
        rec.check(Check::new(
            "|electric - correction - F_N| (disjoint balls)",
            identity,
            format!("<= 3 x grid error {:.3e}", 3.0 * e.error),
            identity <= 3.0 * e.error.max(1e-9),
        ));
        rec.note(format!("F_N = {f_n:.8}, electric = {:.8} ± {:.2e}, correction = {corr:.3e}", e.value, e.error));

        // Two charges well inside each other's truncation ball.
        let mut close = pts.clone();
        close[1] = vec![close[0][0] + 0.5 * eta, close[0][1]];
        let overlapping = Configuration::from_points(&close)?;
        let field = truncated_field_grid(&overlapping, &eqm, &trunc, GridParams::default())?;
        let e = electric_energy(&field, 1e-2)?;
        let f_n = next_order_energy(&overlapping, &eqm, &kernel)?;
        let corr = truncation_correction(&overlapping, &eqm, &trunc);
        let gap = f_n - (e.value - corr);
        rec.check(Check::new(
            "F_N - (electric - correction) (overlapping balls)",
            gap,
            format!(">= -{:.3e}", 3.0 * e.error),
            gap >= -3.0 * e.error,
        ));
        Ok(())
    })
}

fn radii(c: &Configuration) -> impl Iterator<Item = f64> + '_ {
    c.points().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Criterion 3: the circle law from the Metropolis sampler and from Ginibre matrices.
pub fn criterion_circle_law(seed: u64) -> CriterionOutcome {
    run(3, "circle law", 600.0, |rec| {
        let (kernel, v) = gas(2)?;
        let eqm = equilibrium_measure(&v, kernel)?;
        let n = 128;
        let params = GibbsParams::new(2.0, n, kernel, v)?;
        let schedule = Schedule::new(200_000, 200);
        let runs = run_chains(&params, schedule, seed, 1, |st| radii(&st.config).collect::<Vec<f64>>())?;
        let mut mcmc: Vec<f64> = Vec::new();
        for (rs, report) in runs {
            rec.note(format!(
                "chain {}: {} sweeps, acceptance {:.3}, {} states",
                report.chain, report.sweeps, report.acceptance, report.emitted
            ));
            mcmc.extend(rs.into_iter().flatten());
        }
        let law = |r: f64| eqm.radial_cdf(r);
        rec.check(Check::below("MCMC radial sup-distance", sup_distance(&mcmc, law)?, 0.05));
        let mut rng = chain_rng(seed, 3);
        let mut oracle = Vec::new();
        for _ in 0..100 {
            oracle.extend(radii(&sample_ginibre(n, &mut rng)?));
        }
        let d_oracle = sup_distance(&oracle, law)?;
        rec.check(Check::below("Ginibre radial sup-distance", d_oracle, 0.03));
        let (d, _) = ks_two_sample(&mcmc, &oracle)?;
        rec.check(Check::below("MCMC vs Ginibre radial CDF distance", d, 0.05));
        // The exact N-point radial law differs from r² near the edge by an
        // amount no sample size removes.
        let bias = ginibre_radial_bias(n);
        rec.note(format!(
            "exact sup |F_N(r) - r²| for Ginibre at N={n}: {bias:.4}; at N=256: {:.4}",
            ginibre_radial_bias(256)
        ));
        rec.check(Check::new(
            "|Ginibre sup-distance - exact finite-N deviation|",
            (d_oracle - bias).abs(),
            "< 0.005",
            (d_oracle - bias).abs() < 0.005,
        ));
        Ok(())
    })
}

/// `sup_r |F_N(r) - min(r², 1)|` for the Ginibre one-point radial law
/// `F_N(r) = (1/N) Σ_k P(Gamma(k, 1) <= N r²)`.
pub fn ginibre_radial_bias(n: usize) -> f64 {
    let nf = n as f64;
    // F_N(0) = 0 = r², and the incomplete gamma needs x > 0.
    (1..=6000)
        .map(|i| {
            let r = 1.5 * i as f64 / 6000.0;
            let f = (1..=n).map(|k| gamma_lr(k as f64, nf * r * r)).sum::<f64>() / nf;
            (f - (r * r).min(1.0)).abs()
        })
        .fold(0.0, f64::max)
}

/// One uniformly chosen point per configuration: independent draws from the
/// one-point marginal when the configurations are independent.
fn one_point<R: Rng + ?Sized>(rng: &mut R, xs: &[f64]) -> f64 {
    xs[rng.random_range(0..xs.len())]
}

/// Criterion 4: the semicircle law and the potential normalization.
pub fn criterion_semicircle(seed: u64) -> CriterionOutcome {
    run(4, "semicircle law and V normalization", 300.0, |rec| {
        let mut rng = chain_rng(seed, 4);
        let mut eig = Vec::new();
        for _ in 0..200 {
            eig.extend(sample_beta_tridiag(256, 2.0, &mut rng)?);
        }
        rec.check(Check::below(
            "tridiagonal N=256 sup-distance to semicircle on [-2,2]",
            sup_distance(&eig, |x| semicircle_cdf(2.0, x))?,
            0.02,
        ));
        let n = 64;
        let samples = 1000;
        let schedule = Schedule::new(samples * 20 * 5 / 4, 20);
        let mut hits = 0;
        let mut control_rejected = 0;
        for r in 0..4u64 {
            let mut pick = chain_rng(seed ^ 0x5eed, 100 + r);
            let oracle: Vec<f64> = (0..samples)
                .map(|_| sample_beta_tridiag(n, 2.0, &mut rng).map(|e| one_point(&mut pick, &e)))
                .collect::<Result<_>>()?;
            let mut p_values = Vec::new();
            for a in [0.5, 1.0] {
                let params = GibbsParams::new(2.0, n, KernelSpec::log1(), PotentialSpec::quadratic(a)?)?;
                let runs = run_chains(&params, schedule, seed.wrapping_add(r), 1, |st| st.config.coords().to_vec())?;
                let pts: Vec<f64> = runs
                    .into_iter()
                    .flat_map(|(cs, _)| cs)
                    .map(|c| one_point(&mut pick, &c))
                    .collect();
                p_values.push(ks_two_sample(&pts, &oracle)?.1);
            }
            rec.note(format!("repeat {r}: KS p (V = x²/2) = {:.4}, KS p (V = x²) = {:.2e}", p_values[0], p_values[1]));
            if p_values[0] > 0.01 {
                hits += 1;
            }
            if p_values[1] < 0.01 {
                control_rejected += 1;
            }
        }
        rec.check(Check::new("repeats with KS p > 0.01 for V = x²/2", hits as f64, ">= 3 of 4", hits >= 3));
        rec.check(Check::new(
            "repeats rejecting V = x² at p < 0.01",
            control_rejected as f64,
            ">= 3 of 4",
            control_rejected >= 3,
        ));
        Ok(())
    })
}

fn interior_bump() -> Result<TestFunction> {
    TestFunction::radial_bump(vec![0.0, 0.0], 0.2, 0.6)
}

/// Criterion 5: Gaussian fluctuations of a smooth linear statistic in 2D.
pub fn criterion_clt(seed: u64) -> CriterionOutcome {
    run(5, "CLT for linear statistics", 1800.0, |rec| {
        let (kernel, v) = gas(2)?;
        let eqm = equilibrium_measure(&v, kernel)?;
        let n = 256;
        let xi = interior_bump()?;
        let stat = LinearStatistic::new(xi.clone(), &eqm)?;
        let dirichlet = xi.dirichlet(2)?;
        let betas = [1.0, 2.0, 4.0];
        let mut reports = Vec::new();
        for (k, &beta) in betas.iter().enumerate() {
            let params = GibbsParams::new(beta, n, kernel, v.clone())?;
            let runs = run_chains(&params, Schedule::new(25_000, 1), seed.wrapping_add(k as u64), 1, |st| stat.eval(&st.config))?;
            let values: Vec<f64> = runs.into_iter().flat_map(|(vs, _)| vs).collect();
            let rep = clt_report(&values, n, beta, None)?;
            // Normality on a thinned subsequence, nearly independent draws.
            let thin: Vec<f64> = values.iter().step_by(5).copied().collect();
            let p = crate::fluctstats::stats::dagostino_k2(&thin)?.1;
            rec.check(Check::above(format!("normality p at β={beta}"), p, 0.01));
            let reference = dirichlet / (PI * beta);
            rec.note(format!(
                "β={beta}: Var = {:.4} ± {:.4}, ESS {:.0}; Var / ((1/(πβ))∫|∇ξ|²) = {:.3} ± {:.3}",
                rep.variance,
                rep.variance_se,
                rep.ess,
                rep.variance / reference,
                rep.variance_se / reference
            ));
            reports.push(rep);
        }
        for w in reports.windows(2) {
            let ratio = w[0].variance / w[1].variance;
            rec.check(Check::new(
                format!("Var(β={}) / Var(β={})", w[0].beta, w[1].beta),
                ratio,
                "in [1.6, 2.4]",
                (1.6..=2.4).contains(&ratio),
            ));
        }
        let mut rng = chain_rng(seed, 5);
        let mean_term = n as f64 * stat.mean_integral;
        let oracle: Vec<f64> = (0..20_000)
            .map(|_| kostlan_radii(n, &mut rng).map(|rs| rs.iter().map(|&r| xi.value(&[r, 0.0])).sum::<f64>() - mean_term))
            .collect::<Result<_>>()?;
        let (oracle_var, oracle_se) = variance_with_se(&oracle, MIN_BATCHES)?;
        let rel = (reports[1].variance / oracle_var - 1.0).abs();
        rec.check(Check::below("|Var_MCMC / Var_Ginibre - 1| at β=2", rel, 0.15));
        rec.note(format!(
            "Ginibre oracle Var = {oracle_var:.4} ± {oracle_se:.4}; (1/(πβ))∫|∇ξ|² at β=2 = {:.4}",
            dirichlet / (2.0 * PI)
        ));
        Ok(())
    })
}

/// Criterion 6: fluctuation variance stays bounded as `N` grows.
pub fn criterion_concentration(seed: u64) -> CriterionOutcome {
    run(6, "concentration of fluctuations", 900.0, |rec| {
        let (kernel, v) = gas(2)?;
        let eqm = equilibrium_measure(&v, kernel)?;
        let xi = TestFunction::radial_bump(vec![0.2, 0.1], 0.1, 0.5)?;
        let stat = LinearStatistic::new(xi, &eqm)?;
        let mut vars = Vec::new();
        let mut iid = Vec::new();
        for (k, n) in [64usize, 256].into_iter().enumerate() {
            let params = GibbsParams::new(2.0, n, kernel, v.clone())?;
            let runs = run_chains(&params, Schedule::new(12_000, 1), seed.wrapping_add(10 + k as u64), 1, |st| stat.eval(&st.config))?;
            let values: Vec<f64> = runs.into_iter().flat_map(|(vs, _)| vs).collect();
            let (var, se) = variance_with_se(&values, MIN_BATCHES)?;
            rec.note(format!("N={n}: Var(Fluct) = {var:.4} ± {se:.4}"));
            vars.push(var);
            let mut rng = chain_rng(seed, 60 + k as u64);
            let control: Vec<f64> = (0..4000)
                .map(|_| {
                    let mut c = vec![0.0; 2 * n];
                    for p in c.chunks_exact_mut(2) {
                        eqm.sample_into(&mut rng, p);
                    }
                    Configuration::new(2, c).map(|c| stat.eval(&c))
                })
                .collect::<Result<_>>()?;
            iid.push(mean_var(&control).1);
        }
        rec.check(Check::below("Var ratio N=256 / N=64", vars[1] / vars[0], 2.0));
        rec.note(format!("independent points, same statistic: Var ratio {:.2} (∝ N predicts 4)", iid[1] / iid[0]));
        Ok(())
    })
}

/// Criterion 7: lattice energies and the optimality of the triangular lattice.
pub fn criterion_jellium() -> CriterionOutcome {
    run(7, "jellium ordering", 300.0, |rec| {
        let log2 = KernelSpec::log2();
        let tri = LatticeSpec::triangular().as_periodic();
        let sq = LatticeSpec::square().as_periodic();
        let wt = renorm_energy_periodic(&tri, &log2, &default_etas(&tri))?;
        let ws = renorm_energy_periodic(&sq, &log2, &default_etas(&sq))?;
        let gap = ws.value - wt.value;
        let err = wt.error + ws.error;
        rec.check(Check::new(
            "W(square) - W(triangular)",
            gap,
            format!("> 10 x error = {:.3e}", 10.0 * err),
            gap > 10.0 * err,
        ));
        rec.note(format!("W(triangular) = {:.10}, W(square) = {:.10}", wt.value, ws.value));
        let (n_re, n_im, im_max) = (21, 41, 2.0);
        let scan = lattice_scan_2d(n_re, n_im, im_max)?;
        let d_re = 0.5 / (n_re - 1) as f64;
        let d_im = (im_max - 0.75f64.sqrt()) / (n_im - 1) as f64;
        let off = ((scan.argmin.0 - 0.5) / d_re).abs().max(((scan.argmin.1 - 0.75f64.sqrt()) / d_im).abs());
        rec.check(Check::new("scan argmin distance to e^{iπ/3} in grid steps", off, "<= 1", off <= 1.0));

        let log1 = KernelSpec::log1();
        let z = LatticeSpec::integer().as_periodic();
        let wz = renorm_energy_periodic(&z, &log1, &default_etas(&z))?;
        let dimer = PeriodicConfig::on_circle(2.0, vec![0.0, 1.1], 1.0)?;
        let wd = renorm_energy_periodic(&dimer, &log1, &default_etas(&dimer))?;
        rec.check(Check::new(
            "W(dimerized, δ=0.1) - W(Z)",
            wd.value - wz.value,
            format!("> error = {:.3e}", wd.error + wz.error),
            wd.value - wz.value > wd.error + wz.error,
        ));

        let mut worst = 0.0f64;
        for (cell, kernel, m) in [
            (LatticeSpec::triangular(), log2, 2.5),
            (LatticeSpec::integer(), log1, 3.0),
            (LatticeSpec::bcc(), KernelSpec::coulomb(3)?, 8.0),
        ] {
            let w1 = renorm_energy_direct(&cell.as_periodic(), &kernel, 1.0)?;
            let wm = renorm_energy_direct(&cell.with_density(m)?.as_periodic(), &kernel, 1.0)?;
            worst = worst.max((wm - scale_renorm(w1, m, &kernel)?).abs() / wm.abs().max(1.0));
        }
        rec.check(Check::new("scaling relation relative residual", worst, "<= 1e-8", worst <= 1e-8));
        Ok(())
    })
}

/// Criterion 8: the expansion of `log Z` and thermodynamic integration.
pub fn criterion_partition_function(seed: u64) -> CriterionOutcome {
    run(8, "partition function expansion", 1200.0, |rec| {
        let (kernel, v) = gas(1)?;
        let beta = 2.0;
        let entries = closed_form_entries(&[8, 16, 32, 64], beta, &kernel, &v)?;
        let rep = expansion_fit(&entries, beta, &kernel, &v)?;
        let lead = (rep.fit_leading / rep.predicted_leading - 1.0).abs();
        rec.check(Check::below("relative error of fitted N² coefficient", lead, 0.05));
        let nlogn = rep.fit_nlogn.unwrap_or(f64::NAN);
        let target = rep.predicted_nlogn.unwrap_or(f64::NAN);
        rec.check(Check::below("relative error of fitted N log N coefficient vs β/(2d)", (nlogn / target - 1.0).abs(), 0.15));
        rec.note(format!(
            "fit: N² {:.5} (predicted {:.5}), N log N {:.4} (β/(2d) = {target}), N {:.4}; relative to 1/2 the N log N coefficient is off by {:.0}%",
            rep.fit_leading,
            rep.predicted_leading,
            nlogn,
            rep.fit_linear,
            100.0 * (nlogn / 0.5 - 1.0).abs()
        ));
        let wider = closed_form_entries(&[8, 16, 32, 64, 128], beta, &kernel, &v)?;
        let rep2 = expansion_fit(&wider, beta, &kernel, &v)?;
        let drift = (rep2.fit_linear / rep.fit_linear - 1.0).abs();
        rec.check(Check::below("relative change of the N coefficient when adding N=128", drift, 0.2));
        let gaps: Vec<f64> = entries
            .iter()
            .map(|e| (e.value / (e.n * e.n) as f64 - rep.predicted_leading).abs())
            .collect();
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        rec.check(Check::new("log Z / N² approaches -(β/2) I_V monotonically", gaps[gaps.len() - 1], "decreasing", monotone));

        let n = 16;
        let params = GibbsParams::new(2.0, n, kernel, v.clone())?;
        let settings = TiSettings {
            schedule: Schedule::new(20_000, 5),
            chains: 2,
            seed,
            intervals: 4,
            max_intervals: 16,
            tol: f64::INFINITY,
        };
        let ti = logz_estimate_ti(&params, 2.0, 4.0, &settings)?;
        let exact = logz_closed_form(n, 4.0, &kernel, &v)?;
        rec.check(Check::below("TI relative error at N=16, β=4", (ti.value / exact - 1.0).abs(), 0.02));
        rec.check(Check::new(
            "|TI - closed form| / combined error",
            (ti.value - exact).abs() / ti.error(),
            "<= 3",
            (ti.value - exact).abs() <= 3.0 * ti.error(),
        ));
        rec.note(format!(
            "TI log Z = {:.4} ± {:.4} (stat) ± {:.4} (quad), closed form {exact:.4}, {} nodes",
            ti.value,
            ti.statistical_error,
            ti.quadrature_error,
            ti.nodes.len()
        ));
        let mut all = wider.clone();
        all.push(crate::thermo::LogZEntry { n, value: ti.value, se: ti.error(), exact: false });
        let mut worst_c = f64::NEG_INFINITY;
        for b in [2.0, 4.0] {
            let es: Vec<_> = all
                .iter()
                .filter(|e| if b == 2.0 { e.exact } else { !e.exact })
                .cloned()
                .chain(if b == 4.0 { closed_form_entries(&[8, 16, 32, 64], 4.0, &kernel, &v)? } else { Vec::new() })
                .collect();
            let r = expansion_fit(&es, b, &kernel, &v)?;
            worst_c = worst_c.max(r.upper_bound_constant / (1.0 + b));
        }
        rec.check(Check::new("upper-bound constant C / (1+β)", worst_c, "<= 10", worst_c <= 10.0));
        Ok(())
    })
}

/// `log Z` for two particles on the line by nested adaptive quadrature.
pub fn logz_two_particles_line(beta: f64) -> f64 {
    let l = 12.0 / beta.sqrt();
    let w = |x: f64, y: f64| (x - y).abs().powf(beta) * (-0.5 * beta * (x * x + y * y)).exp();
    integrate_pieces(
        |x| integrate_pieces(|y| w(x, y), &[-l, x, l], 1e-15, 1e-13).value,
        &[-l, 0.0, l],
        1e-15,
        1e-12,
    )
    .value
    .ln()
}

/// `Z` for two particles in the plane at `β = 2` by importance sampling from
/// `exp(-2|z|²)` per point; returns `(estimate, standard error)`.
pub fn z_two_particles_plane(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = chain_rng(seed, 9);
    let s = 0.5;
    let vals: Vec<f64> = (0..samples)
        .map(|_| {
            let z: Vec<f64> = (0..4).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
            (z[0] - z[2]).powi(2) + (z[1] - z[3]).powi(2)
        })
        .collect();
    let (m, var) = mean_var(&vals);
    let c = (PI / 2.0).powi(2);
    (c * m, c * (var / samples as f64).sqrt())
}

/// Criterion 9: closed forms against brute-force integration at `N = 2`.
pub fn criterion_oracles(seed: u64) -> CriterionOutcome {
    run(9, "closed-form oracles at N=2", 60.0, |rec| {
        let (k1, v1) = gas(1)?;
        for beta in [1.0, 2.0, 4.0] {
            let diff = (logz_two_particles_line(beta) - logz_closed_form(2, beta, &k1, &v1)?).abs();
            rec.check(Check::new(format!("|log Z quadrature - closed form| d=1 β={beta}"), diff, "<= 1e-6", diff <= 1e-6));
        }
        let (k2, v2) = gas(2)?;
        let (z, se) = z_two_particles_plane(1_000_000, seed);
        let exact = logz_closed_form(2, 2.0, &k2, &v2)?.exp();
        rec.check(Check::new(
            "|Z Monte Carlo - closed form| / SE, d=2 β=2",
            (z - exact).abs() / se,
            "<= 3",
            (z - exact).abs() <= 3.0 * se,
        ));
        Ok(())
    })
}
