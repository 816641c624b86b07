//! Sample statistics: moments, batch means, autocorrelation, normality and
//! Kolmogorov–Smirnov tests.

use crate::error::{Error, Result};
use crate::quad::KahanSum;

pub const MIN_BATCHES: usize = 20;

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = KahanSum::default();
    xs.iter().for_each(|&x| s.add(x));
    let m = s.value() / n as f64;
    if n == 1 {
        return (m, f64::NAN);
    }
    let mut q = KahanSum::default();
    xs.iter().for_each(|&x| q.add((x - m) * (x - m)));
    (m, q.value() / (n - 1) as f64)
}

/// Batch-means estimate: `(mean, standard error)` from `batches` contiguous batches.
pub fn batch_means(xs: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < MIN_BATCHES {
        return Err(Error::Domain(format!("batch means needs at least {MIN_BATCHES} batches")));
    }
    let size = xs.len() / batches;
    if size == 0 {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {batches} batches",
            xs.len()
        )));
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(|c| mean_var(c).0).collect();
    let (m, v) = mean_var(&means);
    Ok((m, (v / batches as f64).sqrt()))
}

/// Mean and standard error of the sample variance, both by batch means.
pub fn variance_with_se(xs: &[f64], batches: usize) -> Result<(f64, f64)> {
    let (m, _) = mean_var(xs);
    let n = xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m) * n / (n - 1.0)).collect();
    batch_means(&sq, batches)
}

/// Integrated autocorrelation time with Sokal's automatic window (`c = 5`).
pub fn autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let (m, v) = mean_var(xs);
    if !(v > 0.0) {
        return 1.0;
    }
    let c0 = v * (n - 1) as f64 / n as f64;
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let ct: f64 = xs[..n - t].iter().zip(&xs[t..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Effective sample size `n / τ_int`.
pub fn ess(xs: &[f64]) -> f64 {
    xs.len() as f64 / autocorr_time(xs)
}

/// D'Agostino–Pearson omnibus K² test; returns `(K², p)`.
pub fn dagostino_k2(xs: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 20 {
        return Err(Error::InsufficientData(format!("normality test needs 20 samples, got {n}")));
    }
    let nf = n as f64;
    let (m, _) = mean_var(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Err(Error::InsufficientData("constant sample".into()));
    }
    // Skewness.
    let b1 = m3 / m2.powf(1.5);
    let y = b1 * ((nf + 1.0) * (nf + 3.0) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0)
        / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let ya = y / alpha;
    let z1 = delta * (ya + (ya * ya + 1.0).sqrt()).ln();
    // Kurtosis.
    let b2 = m4 / (m2 * m2);
    let e = 3.0 * (nf - 1.0) / (nf + 1.0);
    let var = 24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0).powi(2) * (nf + 3.0) * (nf + 5.0));
    let x = (b2 - e) / var.sqrt();
    let sb1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0))
        * (6.0 * (nf + 3.0) * (nf + 5.0) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sb1 * (2.0 / sb1 + (1.0 + 4.0 / (sb1 * sb1)).sqrt());
    let t = (1.0 - 2.0 / a) / (1.0 + x * (2.0 / (a - 4.0)).sqrt());
    let z2 = ((1.0 - 2.0 / (9.0 * a)) - t.cbrt()) / (2.0 / (9.0 * a)).sqrt();
    let k2 = z1 * z1 + z2 * z2;
    Ok((k2, (-0.5 * k2).exp()))
}

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test against `cdf`; returns `(D, p)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok((d, ks_p(d, n)))
}

/// Sup-distance between an empirical CDF and `cdf` (no test).
pub fn sup_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64> {
    Ok(ks_one_sample(xs, cdf)?.0)
}

/// Two-sample KS test; returns `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok((d, ks_p(d, na * nb / (na + nb))))
}

/// Delete-one-block jackknife of a statistic `f` over `blocks` contiguous
/// blocks; returns `(f(all), standard error)`.
pub fn jackknife<F: Fn(&[f64]) -> f64>(xs: &[f64], blocks: usize, f: F) -> Result<(f64, f64)> {
    let g = blocks.min(xs.len());
    if g < 2 {
        return Err(Error::InsufficientData("jackknife needs two blocks".into()));
    }
    let size = xs.len() / g;
    let used = &xs[..size * g];
    let mut buf = Vec::with_capacity(used.len());
    let reps: Vec<f64> = (0..g)
        .map(|k| {
            buf.clear();
            buf.extend_from_slice(&used[..k * size]);
            buf.extend_from_slice(&used[(k + 1) * size..]);
            f(&buf)
        })
        .collect();
    let (m, _) = mean_var(&reps);
    let var = (g - 1) as f64 / g as f64 * reps.iter().map(|r| (r - m) * (r - m)).sum::<f64>();
    Ok((f(xs), var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = chain_rng(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn k2_matches_reference_values() {
        // Reference: scipy.stats.normaltest on these inputs.
        let xs: Vec<f64> = (1..=30).map(|i| (i as f64).powf(1.5)).collect();
        let (k2, p) = dagostino_k2(&xs).unwrap();
        assert!((k2 - 5.0641578133).abs() < 1e-6, "{k2}");
        assert!((p - 0.0794935886).abs() < 1e-6, "{p}");
        let ys: Vec<f64> = (0..50).map(|i| ((i * 37 % 50) as f64 / 7.0).sin()).collect();
        let (k2, _) = dagostino_k2(&ys).unwrap();
        assert!((k2 - 25.3027419138).abs() < 1e-6, "{k2}");
    }

    #[test]
    fn ks_matches_reference_values() {
        // Reference: scipy.stats.ks_2samp(method="asymp") D and the Kolmogorov sf.
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..55).map(|i| (i as f64 * 0.91).cos() * 0.8 + 0.1).collect();
        let (d, _) = ks_two_sample(&a, &b).unwrap();
        assert!((d - 0.2).abs() < 1e-9, "{d}");
        assert!((kolmogorov_sf(1.0) - 0.2699996717).abs() < 1e-9);
        assert!((kolmogorov_sf(0.5) - 0.9639452436).abs() < 1e-9);
    }

    #[test]
    fn gaussian_sample_passes() {
        let xs = normals(5000, 1);
        assert!(dagostino_k2(&xs).unwrap().1 > 0.01);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let (_, p) = ks_one_sample(&xs, |x| normal.cdf(x)).unwrap();
        assert!(p > 0.01);
        let exp: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        assert!(dagostino_k2(&exp).unwrap().1 < 1e-6);
    }

    #[test]
    fn ar1_autocorrelation_time() {
        // AR(1) with φ: τ = (1+φ)/(1-φ).
        let phi: f64 = 0.8;
        let e = normals(200_000, 2);
        let mut x = 0.0;
        let xs: Vec<f64> = e
            .iter()
            .map(|z| {
                x = phi * x + z;
                x
            })
            .collect();
        let tau = autocorr_time(&xs);
        assert!((tau - 9.0).abs() < 0.9, "{tau}");
        assert!((autocorr_time(&normals(20_000, 3)) - 1.0).abs() < 0.15);
    }

    #[test]
    fn batch_means_and_jackknife() {
        let xs = normals(20_000, 4);
        let (m, se) = batch_means(&xs, 20).unwrap();
        assert!(m.abs() < 4.0 * se);
        assert!((se - 1.0 / (20_000f64).sqrt()).abs() < 0.5 / (20_000f64).sqrt());
        assert!(batch_means(&xs[..10], 20).is_err());
        let (mj, sej) = jackknife(&xs, 50, |s| mean_var(s).0).unwrap();
        assert!((mj - mean_var(&xs).0).abs() < 1e-15);
        assert!((sej - 1.0 / (20_000f64).sqrt()).abs() < 0.3 / (20_000f64).sqrt());
        let (v, vse) = variance_with_se(&xs, 20).unwrap();
        assert!((v - 1.0).abs() < 4.0 * vse);
    }
}
