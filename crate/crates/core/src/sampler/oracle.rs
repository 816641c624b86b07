//! Exact samplers used as references for the Metropolis chain.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::energy::Configuration;
use crate::error::{Error, Result};

/// Eigenvalues of an `N×N` complex Ginibre matrix with `E|a_ij|² = 1/N`,
/// i.e. the `β = 2`, `V = |x|²` two-dimensional Coulomb gas.
pub fn sample_ginibre<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let s = (0.5 / n as f64).sqrt();
    let m = DMatrix::<Complex<f64>>::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(s * re, s * im)
    });
    let ev = m
        .try_schur(1e-14, 10_000 * n)
        .and_then(|sch| sch.eigenvalues())
        .ok_or_else(|| Error::Consistency("Schur decomposition did not converge".into()))?;
    let coords = ev.iter().flat_map(|z| [z.re, z.im]).collect();
    Configuration::new(2, coords)
}

/// Moduli of Ginibre eigenvalues drawn independently: `N|λ|²` is distributed as
/// the multiset `{Gamma(k, 1) : k = 1..N}`. Returned sorted.
pub fn kostlan_radii<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let mut r: Vec<f64> = (1..=n)
        .map(|k| {
            let g = Gamma::new(k as f64, 1.0).expect("valid shape");
            (g.sample(rng) / n as f64).sqrt()
        })
        .collect();
    r.sort_by(f64::total_cmp);
    Ok(r)
}

/// Eigenvalues of the scaled tridiagonal β-ensemble: the one-dimensional
/// log-gas with `V = x²/2` and Gibbs weight `exp(-(β/2) H_N)`. Sorted.
pub fn sample_beta_tridiag<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("β must be positive, got {beta}")));
    }
    let scale = (2.0 / (beta * n as f64)).sqrt();
    let mut diag: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .collect();
    let mut off: Vec<f64> = (1..n)
        .map(|k| {
            let chi2 = ChiSquared::new(beta * (n - k) as f64).expect("positive dof");
            (chi2.sample(rng) / 2.0).sqrt() * scale
        })
        .collect();
    tridiag_eigenvalues(&mut diag, &mut off)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson
/// shifts. `diag` is overwritten with the (unsorted) eigenvalues.
pub fn tridiag_eigenvalues(diag: &mut [f64], off: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    if off.len() + 1 != n {
        return Err(Error::Consistency("off-diagonal must have length n - 1".into()));
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let d = diag;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Consistency("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    off.copy_from_slice(&e[..n - 1]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use nalgebra::SymmetricEigen;

    #[test]
    fn ql_matches_dense_solver() {
        let mut rng = chain_rng(3, 0);
        for n in [1, 2, 5, 40] {
            let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let e: Vec<f64> = (1..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let dense = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    d[i]
                } else if i + 1 == j {
                    e[i]
                } else if j + 1 == i {
                    e[j]
                } else {
                    0.0
                }
            });
            let mut want: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
            want.sort_by(f64::total_cmp);
            let (mut dd, mut ee) = (d.clone(), e.clone());
            tridiag_eigenvalues(&mut dd, &mut ee).unwrap();
            dd.sort_by(f64::total_cmp);
            for (a, b) in dd.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_particle_variance() {
        // N = 1: the eigenvalue is N(0, 2/β).
        let mut rng = chain_rng(1, 0);
        for beta in [1.0, 2.0, 4.0] {
            let m = 40_000;
            let v: f64 = (0..m)
                .map(|_| sample_beta_tridiag(1, beta, &mut rng).unwrap()[0].powi(2))
                .sum::<f64>()
                / m as f64;
            assert!((v - 2.0 / beta).abs() < 0.05 * 2.0 / beta, "β={beta}: {v}");
        }
    }

    #[test]
    fn tridiag_second_moment() {
        // E Σλ² = scale²·(N + Σ_k β(N-k)) = (2/(βN))·(N + βN(N-1)/2).
        let mut rng = chain_rng(2, 0);
        let (n, beta) = (10, 2.0);
        let m = 4000;
        let mean: f64 = (0..m)
            .map(|_| sample_beta_tridiag(n, beta, &mut rng).unwrap().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / m as f64;
        let want = 2.0 / (beta * n as f64) * (n as f64 + beta * (n * (n - 1)) as f64 / 2.0);
        assert!((mean - want).abs() < 0.02 * want, "{mean} vs {want}");
    }

    #[test]
    fn ginibre_moduli_match_kostlan() {
        // E Σ|λ|² = Σ k/N = (N+1)/2 for both samplers.
        let mut rng = chain_rng(4, 0);
        let n = 12;
        let m = 1500;
        let (mut g, mut k) = (0.0, 0.0);
        for _ in 0..m {
            let c = sample_ginibre(n, &mut rng).unwrap();
            g += c.coords().iter().map(|x| x * x).sum::<f64>();
            k += kostlan_radii(n, &mut rng).unwrap().iter().map(|r| r * r).sum::<f64>();
        }
        let want = (n + 1) as f64 / 2.0;
        assert!((g / m as f64 - want).abs() < 0.03 * want);
        assert!((k / m as f64 - want).abs() < 0.03 * want);
    }
}
