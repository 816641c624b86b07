//! Microscopic statistics after blowing up by `N^{1/d}` around tag points.

use serde::Serialize;

use crate::energy::{dist2, Configuration};
use crate::equilibrium::{Descriptor, EquilibriumMeasure};
use crate::error::{Error, Result};
use crate::kernel::{ball_volume, sphere_area};

#[derive(Clone, Debug, Serialize)]
pub struct LocalReport {
    /// Window side in blown-up units.
    pub window: f64,
    pub tags_used: usize,
    pub tags_skipped: usize,
    /// Mean blown-up intensity `μ(tag)` over the tags used.
    pub intensity: f64,
    /// Blown-up nearest-neighbour distances of points inside the windows.
    pub nn_distances: Vec<f64>,
    /// Blown-up consecutive spacings inside the windows (d = 1 only).
    pub gaps: Vec<f64>,
    /// `(r, g(r))` pair-correlation estimate on `[0, window/2)`.
    pub pair_correlation: Vec<(f64, f64)>,
}

impl LocalReport {
    /// `Var(gap) / mean(gap)²`; equals 1 for a Poisson process.
    pub fn normalized_gap_variance(&self) -> Option<f64> {
        if self.gaps.len() < 2 {
            return None;
        }
        let (m, v) = super::stats::mean_var(&self.gaps);
        Some(v / (m * m))
    }
}

/// Nearest-neighbour distance CDF of a Poisson process of the given intensity.
pub fn poisson_nn_cdf(d: usize, intensity: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    1.0 - (-intensity * ball_volume(d) * r.powi(d as i32)).exp()
}

fn window_inside(eqm: &EquilibriumMeasure, tag: &[f64], half: f64) -> bool {
    let d = tag.len() as f64;
    let r = tag.iter().map(|v| v * v).sum::<f64>().sqrt();
    match eqm.descriptor {
        Descriptor::Semicircle { edge } => r + half < edge,
        _ => r + half * d.sqrt() < eqm.radius(),
    }
}

/// Blown-up statistics in windows of side `window` centred at `tags`, pooled
/// over all samples. Tags whose window leaves `Σ` are skipped with a warning.
pub fn local_statistics(
    samples: &[Configuration],
    eqm: &EquilibriumMeasure,
    tags: &[Vec<f64>],
    window: f64,
    bins: usize,
) -> Result<LocalReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    if !(window > 0.0) || bins == 0 {
        return Err(Error::Domain("window and bin count must be positive".into()));
    }
    let d = eqm.dim();
    let mut report = LocalReport {
        window,
        tags_used: 0,
        tags_skipped: 0,
        intensity: 0.0,
        nn_distances: Vec::new(),
        gaps: Vec::new(),
        pair_correlation: Vec::new(),
    };
    let dr = 0.5 * window / bins as f64;
    let mut counts = vec![0.0; bins];
    let mut expected = vec![0.0; bins];
    for tag in tags {
        if tag.len() != d {
            return Err(Error::Consistency("tag dimension differs from the measure".into()));
        }
        let mut used = false;
        let intensity = eqm.density(tag);
        for cfg in samples {
            if cfg.dim() != d {
                return Err(Error::Consistency("sample dimension differs from the measure".into()));
            }
            let scale = (cfg.n() as f64).powf(1.0 / d as f64);
            let half = 0.5 * window / scale;
            if !window_inside(eqm, tag, half) {
                break;
            }
            used = true;
            let inside: Vec<usize> = (0..cfg.n())
                .filter(|&i| cfg.point(i).iter().zip(tag).all(|(a, b)| (a - b).abs() <= half))
                .collect();
            for &i in &inside {
                let mut nn = f64::INFINITY;
                for j in 0..cfg.n() {
                    if j == i {
                        continue;
                    }
                    let r = dist2(cfg.point(i), cfg.point(j)).sqrt() * scale;
                    nn = nn.min(r);
                    let b = (r / dr) as usize;
                    if b < bins {
                        counts[b] += 1.0;
                    }
                }
                if nn.is_finite() {
                    report.nn_distances.push(nn);
                }
            }
            for (b, e) in expected.iter_mut().enumerate() {
                let (r0, r1) = (b as f64 * dr, (b + 1) as f64 * dr);
                let shell = sphere_area(d) / d as f64 * (r1.powi(d as i32) - r0.powi(d as i32));
                *e += inside.len() as f64 * intensity * shell;
            }
            if d == 1 {
                let mut xs: Vec<f64> = inside.iter().map(|&i| cfg.point(i)[0]).collect();
                xs.sort_by(f64::total_cmp);
                report.gaps.extend(xs.windows(2).map(|w| (w[1] - w[0]) * scale));
            }
        }
        if used {
            report.tags_used += 1;
            report.intensity += intensity;
        } else {
            log::warn!("window around tag {tag:?} leaves the support; tag skipped");
            report.tags_skipped += 1;
        }
    }
    if report.tags_used == 0 {
        return Err(Error::InsufficientData("every tag window left the support".into()));
    }
    report.intensity /= report.tags_used as f64;
    report.pair_correlation = counts
        .iter()
        .zip(&expected)
        .enumerate()
        .map(|(b, (c, e))| ((b as f64 + 0.5) * dr, if *e > 0.0 { c / e } else { f64::NAN }))
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};
    use crate::fluctstats::stats::{ks_one_sample, mean_var};
    use crate::kernel::KernelSpec;
    use crate::sampler::{chain_rng, sample_beta_tridiag};

    fn disk() -> EquilibriumMeasure {
        equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap()
    }

    fn semicircle() -> EquilibriumMeasure {
        equilibrium_measure(&PotentialSpec::quadratic(0.5).unwrap(), KernelSpec::log1()).unwrap()
    }

    #[test]
    fn square_lattice_nn_distance() {
        let a = 0.05;
        let mut coords = Vec::new();
        for i in -10..10 {
            for j in -10..10 {
                coords.extend([i as f64 * a, j as f64 * a]);
            }
        }
        let cfg = Configuration::new(2, coords).unwrap();
        let scale = (cfg.n() as f64).sqrt();
        let rep = local_statistics(&[cfg], &disk(), &[vec![0.01, 0.01]], 4.0, 10).unwrap();
        assert!(!rep.nn_distances.is_empty());
        for nn in &rep.nn_distances {
            assert!((nn - a * scale).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_points_look_poisson() {
        let eqm = semicircle();
        let mut rng = chain_rng(6, 0);
        let n = 2000;
        let samples: Vec<Configuration> = (0..40)
            .map(|_| {
                let mut c = vec![0.0; n];
                for x in c.iter_mut() {
                    eqm.sample_into(&mut rng, std::slice::from_mut(x));
                }
                Configuration::new(1, c).unwrap()
            })
            .collect();
        let rep = local_statistics(&samples, &eqm, &[vec![0.0]], 40.0, 8).unwrap();
        let (d, _) = ks_one_sample(&rep.nn_distances, |r| poisson_nn_cdf(1, rep.intensity, r)).unwrap();
        assert!(d < 0.05, "KS distance {d}");
        let g = rep.normalized_gap_variance().unwrap();
        assert!((g - 1.0).abs() < 0.15, "{g}");
    }

    #[test]
    fn beta_ensemble_gaps_are_rigid() {
        let eqm = semicircle();
        let mut rng = chain_rng(7, 0);
        let samples: Vec<Configuration> = (0..60)
            .map(|_| Configuration::new(1, sample_beta_tridiag(200, 2.0, &mut rng).unwrap()).unwrap())
            .collect();
        let rep = local_statistics(&samples, &eqm, &[vec![0.0], vec![0.5], vec![1.95]], 20.0, 8).unwrap();
        assert_eq!(rep.tags_skipped, 1);
        let g = rep.normalized_gap_variance().unwrap();
        assert!(g < 0.5, "normalized gap variance {g}");
        let (m, _) = mean_var(&rep.gaps);
        assert!((m * rep.intensity - 1.0).abs() < 0.05);
    }
}
