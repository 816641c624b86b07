//! Linear statistics and the Gaussian limit of their fluctuations.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{batch_means, dagostino_k2, ess, mean_var, variance_with_se, MIN_BATCHES};
use super::TestFunction;
use crate::energy::Configuration;
use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};
use crate::kernel::KernelCase;

/// `ξ` together with its precomputed background integral `∫ξ dμ`.
#[derive(Clone, Debug)]
pub struct LinearStatistic {
    pub xi: TestFunction,
    pub mean_integral: f64,
}

impl LinearStatistic {
    pub fn new(xi: TestFunction, eqm: &EquilibriumMeasure) -> Result<Self> {
        let mean_integral = xi.integral_against(eqm)?;
        Ok(Self { xi, mean_integral })
    }

    /// `Σ ξ(x_i) - N ∫ξ dμ`.
    pub fn eval(&self, config: &Configuration) -> f64 {
        let s: f64 = config.points().map(|p| self.xi.value(p)).sum();
        s - config.n() as f64 * self.mean_integral
    }

    /// Values over a sample set, in input order.
    pub fn eval_all(&self, samples: &[Configuration]) -> Vec<f64> {
        samples.par_iter().map(|c| self.eval(c)).collect()
    }
}

/// `Fluct_N(ξ) = Σ ξ(x_i) - N ∫ξ dμ`.
pub fn fluct_linear(config: &Configuration, eqm: &EquilibriumMeasure, xi: &TestFunction) -> Result<f64> {
    if config.dim() != eqm.dim() {
        return Err(Error::Consistency("configuration and measure dimensions differ".into()));
    }
    Ok(LinearStatistic::new(xi.clone(), eqm)?.eval(config))
}

/// Limiting variance data for the two-dimensional log gas.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VariancePrediction {
    /// `∫|∇ξ|²`.
    pub dirichlet: f64,
    /// `(1/(2πβ)) ∫|∇ξ|²`, the `s²` coefficient of the limiting log-Laplace transform.
    pub v_xi: f64,
    /// `2 v_ξ`, the variance of the Gaussian with that log-Laplace transform.
    pub predicted_variance: f64,
}

pub fn variance_prediction(xi: &TestFunction, beta: f64, eqm: &EquilibriumMeasure) -> Result<VariancePrediction> {
    if eqm.kernel().case() != KernelCase::Log2 {
        return Err(Error::Capability("variance prediction is implemented for the 2D log gas only".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("β must be positive, got {beta}")));
    }
    if !xi.supported_inside(eqm) {
        return Err(Error::Capability(
            "ξ must be supported in the interior of Σ (harmonic extension not implemented)".into(),
        ));
    }
    let dirichlet = xi.dirichlet(2)?;
    let v_xi = dirichlet / (2.0 * std::f64::consts::PI * beta);
    Ok(VariancePrediction { dirichlet, v_xi, predicted_variance: 2.0 * v_xi })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub beta: f64,
    pub samples: usize,
    pub ess: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub predicted_variance: Option<f64>,
    pub v_xi: Option<f64>,
    /// D'Agostino K² p-value.
    pub normality_p: f64,
}

/// Summarizes fluctuation values; standard errors use batch means over
/// `MIN_BATCHES` batches.
pub fn clt_report(values: &[f64], n: usize, beta: f64, prediction: Option<VariancePrediction>) -> Result<CltReport> {
    if values.len() < 2 * MIN_BATCHES {
        return Err(Error::InsufficientData(format!("{} fluctuation samples", values.len())));
    }
    let (mean, mean_se) = batch_means(values, MIN_BATCHES)?;
    let (variance, variance_se) = variance_with_se(values, MIN_BATCHES)?;
    let (_, p) = dagostino_k2(values)?;
    Ok(CltReport {
        n,
        beta,
        samples: values.len(),
        ess: ess(values),
        mean,
        mean_se,
        variance,
        variance_se,
        predicted_variance: prediction.map(|p| p.predicted_variance),
        v_xi: prediction.map(|p| p.v_xi),
        normality_p: p,
    })
}

/// Empirical `log E[exp(s X)]` with a jackknife standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LaplacePoint {
    pub s: f64,
    pub value: f64,
    pub se: f64,
}

pub const MIN_LAPLACE_SAMPLES: usize = 1000;

/// `log` of the empirical mean of `exp(s·Fluct_N(ξ))` over `samples`.
pub fn empirical_log_laplace(samples: &[Configuration], eqm: &EquilibriumMeasure, xi: &TestFunction, s: f64) -> Result<LaplacePoint> {
    let stat = LinearStatistic::new(xi.clone(), eqm)?;
    log_laplace_of(&stat.eval_all(samples), s)
}

/// Same, from precomputed fluctuation values.
pub fn log_laplace_of(values: &[f64], s: f64) -> Result<LaplacePoint> {
    if values.len() < MIN_LAPLACE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples; at least {MIN_LAPLACE_SAMPLES} are needed",
            values.len()
        )));
    }
    if s == 0.0 {
        return Ok(LaplacePoint { s, value: 0.0, se: 0.0 });
    }
    let top = values.iter().map(|v| s * v).fold(f64::NEG_INFINITY, f64::max);
    if top > 700.0 {
        return Err(Error::Range(format!("exp(s·X) overflows at s = {s}; use a smaller s")));
    }
    let lme = |xs: &[f64]| {
        let m = xs.iter().map(|v| s * v).fold(f64::NEG_INFINITY, f64::max);
        m + (xs.iter().map(|v| (s * v - m).exp()).sum::<f64>() / xs.len() as f64).ln()
    };
    let (value, se) = super::stats::jackknife(values, 50, lme)?;
    Ok(LaplacePoint { s, value, se })
}

/// Least-squares fit of `log L(s) ≈ m s + v s²` through the origin;
/// returns `(m, v)`, whose cumulant reading is mean `m` and variance `2v`.
pub fn laplace_quadratic_fit(points: &[LaplacePoint]) -> Result<(f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x1, x2) = (p.s, p.s * p.s);
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        b1 += x1 * p.value;
        b2 += x2 * p.value;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-300) {
        return Err(Error::Consistency("Laplace fit needs two distinct nonzero s values".into()));
    }
    Ok(((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

/// Sample mean and variance, for comparison with the Laplace fit.
pub fn moments(values: &[f64]) -> (f64, f64) {
    mean_var(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};
    use crate::kernel::KernelSpec;
    use crate::sampler::{chain_rng, sample_ginibre};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn disk() -> EquilibriumMeasure {
        equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap()
    }

    #[test]
    fn spec_examples() {
        let eqm = disk();
        let cfg = Configuration::new(2, vec![0.3, 0.1, -0.5, 0.2]).unwrap();
        let one = TestFunction::radial_bump(vec![0.0, 0.0], 3.0, 4.0).unwrap();
        assert!(fluct_linear(&cfg, &eqm, &one).unwrap().abs() < 1e-12);
        let sq = TestFunction::custom(
            |x| x[0] * x[0] + x[1] * x[1],
            |x| vec![2.0 * x[0], 2.0 * x[1]],
            vec![0.0, 0.0],
            2.0,
        );
        let origin = Configuration::new(2, vec![0.0, 0.0]).unwrap();
        assert!((fluct_linear(&origin, &eqm, &sq).unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_sum() {
        let eqm = disk();
        let xi = TestFunction::radial_bump(vec![0.1, 0.0], 0.2, 0.6).unwrap();
        let mut rng = chain_rng(8, 0);
        let cfg = sample_ginibre(40, &mut rng).unwrap();
        // Oracle: polar midpoint rule for ∫ξ dμ, μ = 1/π on the unit disk.
        let (nr, nt) = (2000, 2000);
        let mut integral = 0.0;
        for i in 0..nr {
            let r = (i as f64 + 0.5) / nr as f64;
            for j in 0..nt {
                let t = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nt as f64;
                integral += xi.value(&[r * t.cos(), r * t.sin()]) * r;
            }
        }
        integral *= (1.0 / nr as f64) * (2.0 * std::f64::consts::PI / nt as f64) / std::f64::consts::PI;
        let direct: f64 = (0..40).map(|i| xi.value(cfg.point(i))).sum::<f64>() - 40.0 * integral;
        assert!((fluct_linear(&cfg, &eqm, &xi).unwrap() - direct).abs() < 1e-5);
    }

    #[test]
    fn prediction_scaling() {
        let eqm = disk();
        let xi = TestFunction::radial_bump(vec![0.0, 0.0], 0.2, 0.6).unwrap();
        let p = variance_prediction(&xi, 2.0, &eqm).unwrap();
        let p2 = variance_prediction(&xi.scaled(2.0), 2.0, &eqm).unwrap();
        let pb = variance_prediction(&xi, 4.0, &eqm).unwrap();
        assert!((p2.v_xi - 4.0 * p.v_xi).abs() < 1e-12 * p.v_xi);
        assert!((pb.v_xi - 0.5 * p.v_xi).abs() < 1e-12 * p.v_xi);
        // Finite-difference oracle of ∫|∇ξ|² on a Cartesian grid.
        let h = 1e-3;
        let mut dir = 0.0;
        let m = (1.3 / h) as i64;
        for i in -m..m {
            for j in -m..m {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let gx = (xi.value(&[x + h, y]) - xi.value(&[x, y])) / h;
                let gy = (xi.value(&[x, y + h]) - xi.value(&[x, y])) / h;
                dir += (gx * gx + gy * gy) * h * h;
            }
        }
        assert!((p.dirichlet - dir).abs() < 2e-3 * dir, "{} vs {dir}", p.dirichlet);
        let touching = TestFunction::radial_bump(vec![0.5, 0.0], 0.2, 0.6).unwrap();
        assert!(matches!(variance_prediction(&touching, 2.0, &eqm), Err(Error::Capability(_))));
    }

    #[test]
    fn laplace_of_gaussian_sample() {
        let mut rng = chain_rng(12, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| 0.3 + 1.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert_eq!(log_laplace_of(&xs, 0.0).unwrap().value, 0.0);
        let pts: Vec<_> = [-0.2, -0.1, 0.1, 0.2].iter().map(|&s| log_laplace_of(&xs, s).unwrap()).collect();
        let (m, v) = laplace_quadratic_fit(&pts).unwrap();
        let (sm, sv) = moments(&xs);
        let se_m = (sv / xs.len() as f64).sqrt();
        let se_v = sv * (2.0 / xs.len() as f64).sqrt();
        assert!((m - sm).abs() < 3.0 * se_m, "{m} vs {sm}");
        assert!((2.0 * v - sv).abs() < 3.0 * se_v, "{} vs {sv}", 2.0 * v);
        assert!(matches!(log_laplace_of(&xs, 200.0), Err(Error::Range(_))));
        assert!(matches!(log_laplace_of(&xs[..10], 0.1), Err(Error::InsufficientData(_))));
    }
}
