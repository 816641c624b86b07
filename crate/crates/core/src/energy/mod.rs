//! Hamiltonian, next-order energy, the splitting formula, the discrepancy,
//! and the truncated electric field.

pub mod field;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumMeasure, PotentialSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::quad::KahanSum;

pub use field::{electric_energy, truncated_field_grid, ElectricEnergy, GridField, GridParams};

/// `N` points in `R^d`, stored contiguously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    d: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 || coords.is_empty() || coords.len() % d != 0 {
            return Err(Error::Domain(format!(
                "need a positive number of points in dimension {d}, got {} coordinates",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate in point {}", k / d)));
        }
        Ok(Self { d, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Domain("points of mixed dimension".into()));
        }
        Self::new(d, points.concat())
    }

    /// One point per line, whitespace-separated coordinates; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut d = 0;
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config {
                    path: format!("line {}", lineno + 1),
                    msg: e.to_string(),
                })?;
            if d == 0 {
                d = row.len();
            } else if row.len() != d {
                return Err(Error::Config {
                    path: format!("line {}", lineno + 1),
                    msg: format!("expected {d} coordinates, found {}", row.len()),
                });
            }
            coords.extend(row);
        }
        Self::new(d, coords)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.d)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// Indices sorted lexicographically by coordinates; all sums run in this order
    /// so results do not depend on how the points are labelled.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }

    /// Smallest pairwise distance, or an error naming a coincident pair.
    pub fn min_distance(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                let r2 = dist2(self.point(i), self.point(j));
                if r2 == 0.0 {
                    return Err(Error::Singularity(format!("points {i} and {j} coincide")));
                }
                best = best.min(r2);
            }
        }
        Ok(best.sqrt())
    }

    /// Distance from each point to its nearest neighbour.
    pub fn nearest_neighbour_distances(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                (0..self.n())
                    .filter(|&j| j != i)
                    .map(|j| dist2(self.point(i), self.point(j)))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(config: &Configuration, kernel: &KernelSpec) -> Result<()> {
    if config.dim() != kernel.dim() {
        return Err(Error::Consistency(format!(
            "configuration lives in dimension {}, kernel in dimension {}",
            config.dim(),
            kernel.dim()
        )));
    }
    Ok(())
}

/// `Σ_{i≠j} g(x_i - x_j)`, each unordered pair counted twice.
pub fn pair_energy(config: &Configuration, kernel: &KernelSpec) -> Result<f64> {
    check_dims(config, kernel)?;
    let order = config.canonical_order();
    let n = order.len();
    let rows: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let i = order[a];
            let xi = config.point(i);
            let mut acc = KahanSum::default();
            for &j in &order[a + 1..] {
                let r2 = dist2(xi, config.point(j));
                if r2 == 0.0 {
                    return Err(Error::Singularity(format!("points {i} and {j} coincide")));
                }
                acc.add(kernel.g_r2(r2));
            }
            Ok(acc.value())
        })
        .collect();
    let mut total = KahanSum::default();
    for r in rows {
        total.add(r?);
    }
    Ok(2.0 * total.value())
}

fn ordered_sum<F: Fn(&[f64]) -> f64>(config: &Configuration, f: F) -> f64 {
    let mut acc = KahanSum::default();
    for i in config.canonical_order() {
        acc.add(f(config.point(i)));
    }
    acc.value()
}

/// `H_N = Σ_{i≠j} g(x_i - x_j) + N Σ_i V(x_i)`.
pub fn hamiltonian(config: &Configuration, potential: &PotentialSpec, kernel: &KernelSpec) -> Result<f64> {
    let pair = pair_energy(config, kernel)?;
    let n = config.n() as f64;
    Ok(pair + n * ordered_sum(config, |x| potential.eval(x)))
}

/// `F_N = Σ_{i≠j} g(x_i - x_j) - 2N Σ_i h^μ(x_i) + N² ∬ g dμ dμ`.
pub fn next_order_energy(config: &Configuration, eqm: &EquilibriumMeasure, kernel: &KernelSpec) -> Result<f64> {
    if *kernel != eqm.kernel() {
        return Err(Error::Consistency("kernel differs from the one of the equilibrium measure".into()));
    }
    let pair = pair_energy(config, kernel)?;
    let n = config.n() as f64;
    Ok(pair - 2.0 * n * ordered_sum(config, |x| eqm.h(x)) + n * n * eqm.interaction_energy())
}

/// The terms of `H_N = N² I_V + 2N Σ ζ(x_i) + F_N`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SplittingTerms {
    pub h_n: f64,
    pub iv_term: f64,
    pub zeta_term: f64,
    pub f_n: f64,
    pub residual: f64,
}

pub fn splitting_terms(
    config: &Configuration,
    potential: &PotentialSpec,
    eqm: &EquilibriumMeasure,
    kernel: &KernelSpec,
) -> Result<SplittingTerms> {
    eqm.check_potential(potential)?;
    let h_n = hamiltonian(config, potential, kernel)?;
    let f_n = next_order_energy(config, eqm, kernel)?;
    let n = config.n() as f64;
    let iv_term = n * n * eqm.iv;
    let zeta_term = 2.0 * n * ordered_sum(config, |x| eqm.zeta(x));
    Ok(SplittingTerms {
        h_n,
        iv_term,
        zeta_term,
        f_n,
        residual: h_n - (iv_term + zeta_term + f_n),
    })
}

/// `H_N - (N² I_V + 2N Σ ζ(x_i) + F_N)`.
pub fn splitting_residual(
    config: &Configuration,
    potential: &PotentialSpec,
    eqm: &EquilibriumMeasure,
    kernel: &KernelSpec,
) -> Result<f64> {
    Ok(splitting_terms(config, potential, eqm, kernel)?.residual)
}

/// `#{i : x_i ∈ B(center, r)} - N μ(B(center, r))`.
pub fn discrepancy(config: &Configuration, eqm: &EquilibriumMeasure, center: &[f64], r: f64) -> f64 {
    let count = config.points().filter(|p| dist2(p, center) < r * r).count() as f64;
    count - config.n() as f64 * eqm.mass_in_ball(center, r)
}

/// Per-point truncation radii `η_i ∈ (0, 1/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationVector(Vec<f64>);

impl TruncationVector {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if let Some(bad) = radii.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
            return Err(Error::Domain(format!("truncation radius {bad} outside (0, 1/2]")));
        }
        Ok(Self(radii))
    }

    pub fn uniform(n: usize, eta: f64) -> Result<Self> {
        Self::new(vec![eta; n])
    }

    /// `η_i = N^{-1/d} / 4`.
    pub fn default_for(config: &Configuration) -> Self {
        let eta = 0.25 * (config.n() as f64).powf(-1.0 / config.dim() as f64);
        Self(vec![eta.min(0.5); config.n()])
    }

    /// `η_i = min(cap, r_i / 4)` with `r_i` the nearest-neighbour distance,
    /// which makes all truncation balls disjoint.
    pub fn nearest_neighbour(config: &Configuration, cap: f64) -> Result<Self> {
        Self::new(
            config
                .nearest_neighbour_distances()
                .into_iter()
                .map(|r| cap.min(0.25 * r).min(0.5))
                .collect(),
        )
    }

    pub fn radii(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether the balls `B(x_i, η_i)` are pairwise disjoint.
    pub fn disjoint_for(&self, config: &Configuration) -> bool {
        (0..config.n()).all(|i| {
            (i + 1..config.n()).all(|j| dist2(config.point(i), config.point(j)).sqrt() >= self.0[i] + self.0[j])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::equilibrium_measure;
    use proptest::prelude::*;

    fn setup(kernel: KernelSpec, a: f64) -> (PotentialSpec, EquilibriumMeasure) {
        let v = PotentialSpec::quadratic(a).unwrap();
        let m = equilibrium_measure(&v, kernel).unwrap();
        (v, m)
    }

    #[test]
    fn hamiltonian_examples() {
        let (v2, _) = setup(KernelSpec::log2(), 1.0);
        let one = Configuration::new(2, vec![0.3, -0.4]).unwrap();
        assert!((hamiltonian(&one, &v2, &KernelSpec::log2()).unwrap() - 0.25).abs() < 1e-15);
        let two = Configuration::new(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((hamiltonian(&two, &v2, &KernelSpec::log2()).unwrap() - 2.0).abs() < 1e-15);
        let (v1, _) = setup(KernelSpec::log1(), 0.5);
        let three = Configuration::new(1, vec![-1.0, 0.0, 1.0]).unwrap();
        let h = hamiltonian(&three, &v1, &KernelSpec::log1()).unwrap();
        assert!((h - (3.0 - 2.0 * 2f64.ln())).abs() < 1e-14);
        let dup = Configuration::new(1, vec![0.5, 0.5]).unwrap();
        assert!(matches!(hamiltonian(&dup, &v1, &KernelSpec::log1()), Err(Error::Singularity(_))));
    }

    #[test]
    fn next_order_examples() {
        let (v, m) = setup(KernelSpec::log2(), 1.0);
        let k = KernelSpec::log2();
        let origin = Configuration::new(2, vec![0.0, 0.0]).unwrap();
        assert!((next_order_energy(&origin, &m, &k).unwrap() + 0.75).abs() < 1e-15);
        assert!(splitting_residual(&origin, &v, &m, &k).unwrap().abs() < 1e-15);
        let far = Configuration::new(2, vec![2.0, 0.0]).unwrap();
        let t = splitting_terms(&far, &v, &m, &k).unwrap();
        assert_eq!(t.h_n, 4.0);
        assert!((t.zeta_term - 2.0 * (1.5 - 2f64.ln())).abs() < 1e-14);
        // F_1(x) = -2 h(x) + 1/4 with h(x) = -log 2.
        assert!((t.f_n - (2.0 * 2f64.ln() + 0.25)).abs() < 1e-14);
        assert!(t.residual.abs() < 1e-10);
        // Symmetric pair ±(r, 0): direct expansion.
        let r: f64 = 0.3;
        let pair = Configuration::new(2, vec![r, 0.0, -r, 0.0]).unwrap();
        let direct = -2.0 * (2.0 * r).ln() - 2.0 * 2.0 * 2.0 * (0.5 * (1.0 - r * r)) + 4.0 * 0.25;
        assert!((next_order_energy(&pair, &m, &k).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn mismatched_potential_rejected() {
        let (_, m) = setup(KernelSpec::log2(), 1.0);
        let other = PotentialSpec::quadratic(2.0).unwrap();
        let c = Configuration::new(2, vec![0.1, 0.2]).unwrap();
        assert!(matches!(
            splitting_residual(&c, &other, &m, &KernelSpec::log2()),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn discrepancy_examples() {
        let (_, m) = setup(KernelSpec::log2(), 1.0);
        let c = Configuration::new(2, vec![0.0, 0.0]).unwrap();
        assert!((discrepancy(&c, &m, &[0.0, 0.0], 0.5) - 0.75).abs() < 1e-15);
        let c = Configuration::new(2, vec![0.1, 0.2, -0.5, 0.3, 2.0, 2.0]).unwrap();
        assert!(discrepancy(&c, &m, &[0.0, 0.0], 10.0).abs() < 1e-14);
    }

    #[test]
    fn parse_roundtrip() {
        let c = Configuration::parse("# header\n0.5 1.5\n-2 3e-1  # trailing\n\n").unwrap();
        assert_eq!(c.n(), 2);
        assert_eq!(c.point(1), &[-2.0, 0.3]);
        assert_eq!(Configuration::parse(&c.to_text()).unwrap(), c);
        assert!(Configuration::parse("1 2\n3\n").is_err());
        assert!(Configuration::parse("1 x\n").is_err());
    }

    #[test]
    fn truncation_vectors() {
        assert!(TruncationVector::new(vec![0.1, 0.6]).is_err());
        let c = Configuration::new(2, vec![0.0, 0.0, 0.1, 0.0, 1.0, 1.0]).unwrap();
        let t = TruncationVector::nearest_neighbour(&c, 0.5).unwrap();
        assert!(t.disjoint_for(&c));
        assert!(!TruncationVector::uniform(3, 0.06).unwrap().disjoint_for(&c));
        assert!((TruncationVector::default_for(&c).radii()[0] - 0.25 / 3f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn energies_are_permutation_invariant(seed in 0u64..1000, n in 2usize..20, d in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let c = Configuration::new(d, coords.clone()).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.swap(0, n / 2);
            let shuffled: Vec<f64> = perm.iter().flat_map(|&i| coords[i * d..(i + 1) * d].to_vec()).collect();
            let c2 = Configuration::new(d, shuffled).unwrap();
            let k = match d { 1 => KernelSpec::log1(), 2 => KernelSpec::log2(), _ => KernelSpec::coulomb(3).unwrap() };
            let (v, m) = setup(k, if d == 1 { 0.5 } else { 1.0 });
            prop_assert_eq!(hamiltonian(&c, &v, &k).unwrap(), hamiltonian(&c2, &v, &k).unwrap());
            prop_assert_eq!(next_order_energy(&c, &m, &k).unwrap(), next_order_energy(&c2, &m, &k).unwrap());
        }

        #[test]
        fn splitting_identity(seed in 0u64..1000, n in 1usize..40, d in 1usize..4, a in 0.2f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = Configuration::new(d, coords).unwrap();
            let k = match d { 1 => KernelSpec::log1(), 2 => KernelSpec::log2(), _ => KernelSpec::coulomb(3).unwrap() };
            let (v, m) = setup(k, a);
            let t = splitting_terms(&c, &v, &m, &k).unwrap();
            prop_assert!(t.residual.abs() <= 1e-8 * t.h_n.abs().max(1.0));
        }
    }
}
