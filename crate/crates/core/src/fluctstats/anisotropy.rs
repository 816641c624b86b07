//! The anisotropy functional `A[X_N, ψ, μ] = ∬ (ψ(x)-ψ(y))/(x-y) dfluct(x) dfluct(y)`.

use std::f64::consts::PI;

use super::TestFunction;
use crate::energy::Configuration;
use crate::equilibrium::{Descriptor, EquilibriumMeasure};
use crate::error::{Error, Result};
use crate::quad;

const TOL: f64 = 1e-13;

/// Difference quotient of `ψ`, equal to `ψ'` on the diagonal.
pub fn difference_quotient(psi: &TestFunction, x: f64, y: f64) -> f64 {
    let h = x - y;
    if h.abs() < 1e-7 * (1.0 + x.abs()) {
        psi.grad(&[0.5 * (x + y)])[0]
    } else {
        (psi.value(&[x]) - psi.value(&[y])) / h
    }
}

/// `∫ f dμ` for the semicircle of edge `R`, through `x = R cos θ`.
fn semicircle_integral<F: FnMut(f64) -> f64>(edge: f64, mut f: F, what: &str) -> Result<f64> {
    let q = quad::integrate_checked(
        |t: f64| f(edge * t.cos()) * t.sin().powi(2),
        0.0,
        PI,
        TOL,
        TOL,
        what,
    )?;
    Ok(q.value * 2.0 / PI)
}

pub fn anisotropy_1d(config: &Configuration, eqm: &EquilibriumMeasure, psi: &TestFunction) -> Result<f64> {
    if config.dim() != 1 {
        return Err(Error::Domain("the anisotropy functional is one-dimensional".into()));
    }
    let Descriptor::Semicircle { edge } = eqm.descriptor else {
        return Err(Error::Capability("anisotropy needs the semicircle law".into()));
    };
    let xs: Vec<f64> = config.coords().to_vec();
    let n = xs.len() as f64;
    let mut atomic = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        atomic += psi.grad(&[x])[0];
        for &y in &xs[i + 1..] {
            atomic += 2.0 * difference_quotient(psi, x, y);
        }
    }
    let mut cross = 0.0;
    for &x in &xs {
        cross += semicircle_integral(edge, |y| difference_quotient(psi, x, y), "anisotropy cross term")?;
    }
    let background = semicircle_integral(
        edge,
        |x| {
            semicircle_integral(edge, |y| difference_quotient(psi, x, y), "anisotropy background")
                .unwrap_or(f64::NAN)
        },
        "anisotropy background",
    )?;
    if !background.is_finite() {
        return Err(Error::Tolerance {
            what: "anisotropy background".into(),
            achieved: f64::INFINITY,
            requested: TOL,
        });
    }
    Ok(atomic - 2.0 * n * cross + n * n * background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};
    use crate::kernel::KernelSpec;
    use proptest::prelude::*;

    fn semicircle() -> EquilibriumMeasure {
        equilibrium_measure(&PotentialSpec::quadratic(0.5).unwrap(), KernelSpec::log1()).unwrap()
    }

    /// Gauss–Chebyshev (second kind) rule for the semicircle on `[-2, 2]`.
    fn cheb(n: usize) -> Vec<(f64, f64)> {
        (1..=n)
            .map(|k| {
                let t = k as f64 * PI / (n + 1) as f64;
                (2.0 * t.cos(), 2.0 / (n + 1) as f64 * t.sin().powi(2))
            })
            .collect()
    }

    /// The four blocks of the expansion written out separately, with the
    /// background integrals replaced by an exact rule for polynomial ψ.
    fn brute(xs: &[f64], coeffs: &[f64]) -> f64 {
        let p = |x: f64| coeffs.iter().rev().fold(0.0, |a, c| a * x + c);
        let dp = |x: f64| {
            coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c * x.powi(k as i32 - 1))
                .sum::<f64>()
        };
        let q = |x: f64, y: f64| if x == y { dp(x) } else { (p(x) - p(y)) / (x - y) };
        let n = xs.len() as f64;
        let rule = cheb(40);
        let pp: f64 = xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).map(|(x, y)| q(x, y)).sum();
        let pm: f64 = xs.iter().map(|&x| rule.iter().map(|&(y, w)| w * q(x, y)).sum::<f64>()).sum();
        let mp: f64 = rule.iter().map(|&(x, w)| w * xs.iter().map(|&y| q(x, y)).sum::<f64>()).sum();
        let mm: f64 = rule
            .iter()
            .map(|&(x, w)| w * rule.iter().map(|&(y, v)| v * q(x, y)).sum::<f64>())
            .sum();
        pp - n * pm - n * mp + n * n * mm
    }

    #[test]
    fn trivial_cases() {
        let eqm = semicircle();
        let cfg = Configuration::new(1, vec![-1.1, 0.2, 0.9, 1.7]).unwrap();
        let constant = TestFunction::polynomial_1d(vec![3.0], -5.0, 5.0, 1.0).unwrap();
        assert!(anisotropy_1d(&cfg, &eqm, &constant).unwrap().abs() < 1e-10);
        let linear = TestFunction::polynomial_1d(vec![0.0, 1.0], -5.0, 5.0, 1.0).unwrap();
        assert!(anisotropy_1d(&cfg, &eqm, &linear).unwrap().abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn matches_block_expansion(
            xs in proptest::collection::vec(-2.5f64..2.5, 1..=16),
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..6),
        ) {
            let eqm = semicircle();
            let cfg = Configuration::new(1, xs.clone()).unwrap();
            let psi = TestFunction::polynomial_1d(coeffs.clone(), -3.0, 3.0, 1.0).unwrap();
            let got = anisotropy_1d(&cfg, &eqm, &psi).unwrap();
            let want = brute(&xs, &coeffs);
            prop_assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }
}
