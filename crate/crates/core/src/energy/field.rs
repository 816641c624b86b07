//! The truncated electric potential
//! `H_{N,η}(x) = Σ_i (g(x - x_i) - f_{η_i}(x - x_i)) - N h^μ(x)`
//! and its renormalized Dirichlet energy.
//!
//! `∫|∇H_{N,η}|²` is split with a smooth partition of unity:
//!
//! * around each cluster of nearby charges, a disk (ball) on which the integral
//!   is done in polar (spherical) coordinates with breakpoints at every crossing
//!   of a truncation sphere or of `∂Σ`;
//! * the smooth remainder on a block grid, by the midpoint rule at spacings `h`
//!   and `h/2` followed by Richardson extrapolation;
//! * the exterior of the grid box, along rays with `r = r_box / u`.
//!
//! For `Log1` the field lives in the plane, the measure on the real axis, and
//! only the upper half-plane is integrated.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::{dist2, Configuration, TruncationVector};
use crate::equilibrium::{Descriptor, EquilibriumMeasure};
use crate::error::{Error, Result};
use crate::fluctstats::testfn::smoothstep;
use crate::kernel::{KernelCase, KernelSpec};
use crate::quad::{self, KahanSum, Quad};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridParams {
    /// Base spacing; `diam/512` in the plane and `diam/48` in 3D when `None`.
    pub h0: Option<f64>,
    /// Box padding in units of the diameter of `Σ ∪ {x_i}`.
    pub pad: f64,
    /// Extra subdivision of blocks crossing `∂Σ`, where `|∇H|²` has a kink.
    pub boundary_refine: usize,
    /// Relative tolerance for the polar quadratures.
    pub quad_tol: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            h0: None,
            pad: 3.0,
            boundary_refine: 4,
            quad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct Cluster {
    center: Vec<f64>,
    radius: f64,
    members: Vec<usize>,
}

/// A lazily sampled truncated field: the definition plus grid geometry.
/// Node values are computed on demand.
#[derive(Clone, Debug)]
pub struct GridField {
    kernel: KernelSpec,
    eqm: EquilibriumMeasure,
    dim: usize,
    half_plane: bool,
    n: usize,
    pts: Vec<f64>,
    eta: Vec<f64>,
    g_eta: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h0: f64,
    block_cells: usize,
    core_radius: f64,
    clusters: Vec<Cluster>,
    params: GridParams,
}

/// Builds the field of `config` against `eqm` with truncation radii `trunc`.
pub fn truncated_field_grid(
    config: &Configuration,
    eqm: &EquilibriumMeasure,
    trunc: &TruncationVector,
    params: GridParams,
) -> Result<GridField> {
    let kernel = eqm.kernel();
    if !kernel.has_local_electric_rep() {
        return Err(Error::Capability("electric fields require a Coulomb-type kernel".into()));
    }
    if config.dim() != kernel.dim() {
        return Err(Error::Consistency("configuration and kernel dimensions differ".into()));
    }
    if trunc.len() != config.n() {
        return Err(Error::Consistency(format!(
            "{} truncation radii for {} points",
            trunc.len(),
            config.n()
        )));
    }
    config.min_distance()?;
    let dim = kernel.field_dim();
    let half_plane = kernel.case() == KernelCase::Log1;
    let n = config.n();
    let mut pts = vec![0.0; n * dim];
    for (i, p) in config.points().enumerate() {
        pts[i * dim..i * dim + p.len()].copy_from_slice(p);
    }
    let eta = trunc.radii().to_vec();
    let g_eta = eta.iter().map(|&e| kernel.g_unchecked(e)).collect();

    let reach = config
        .points()
        .zip(&eta)
        .map(|(p, e)| p.iter().map(|v| v * v).sum::<f64>().sqrt() + e)
        .fold(eqm.radius(), f64::max);
    let diam = 2.0 * reach;
    let h0 = params
        .h0
        .unwrap_or(if dim == 2 { diam / 512.0 } else { diam / 48.0 });
    if !(h0 > 0.0) {
        return Err(Error::Domain("grid spacing must be positive".into()));
    }
    let block_cells = if dim == 2 { 32 } else { 16 };
    let block = block_cells as f64 * h0;
    let half = ((reach + params.pad * diam) / block).ceil() * block;
    let lo = (0..dim).map(|k| if half_plane && k == 1 { 0.0 } else { -half }).collect();
    let hi = vec![half; dim];

    let mut field = GridField {
        kernel,
        eqm: *eqm,
        dim,
        half_plane,
        n,
        pts,
        eta,
        g_eta,
        lo,
        hi,
        h0,
        block_cells,
        core_radius: reach,
        clusters: Vec::new(),
        params,
    };
    field.clusters = field.build_clusters();
    Ok(field)
}

impl GridField {
    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn field_dim(&self) -> usize {
        self.dim
    }

    /// Lower and upper corners of the grid box.
    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Number of nodes along each axis at the base spacing.
    pub fn grid_shape(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| ((h - l) / self.h0).round() as usize)
            .collect()
    }

    /// Position of the cell centre with multi-index `idx` at the base spacing.
    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.lo)
            .map(|(&i, l)| l + (i as f64 + 0.5) * self.h0)
            .collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    /// `H_{N,η}(x)`; `x` lives in the field space (the plane for `Log1`).
    pub fn potential(&self, x: &[f64]) -> f64 {
        let mut s = KahanSum::default();
        for i in 0..self.n {
            let r2 = dist2(x, self.point(i));
            let r = r2.sqrt();
            s.add(if r <= self.eta[i] { self.g_eta[i] } else { self.kernel.g_r2(r2) });
        }
        s.value() - self.n as f64 * self.eqm.h(x)
    }

    /// The untruncated potential `Σ g(x - x_i) - N h^μ(x)`.
    pub fn potential_untruncated(&self, x: &[f64]) -> Result<f64> {
        let mut s = KahanSum::default();
        for i in 0..self.n {
            let r2 = dist2(x, self.point(i));
            if r2 == 0.0 {
                return Err(Error::Singularity(format!("untruncated potential at point {i}")));
            }
            s.add(self.kernel.g_r2(r2));
        }
        Ok(s.value() - self.n as f64 * self.eqm.h(x))
    }

    /// `∇H_{N,η}(x)` written into `out`.
    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.eqm.h_grad_into(x, out);
        let nf = -(self.n as f64);
        for o in out.iter_mut() {
            *o *= nf;
        }
        let mut diff = [0.0; 3];
        for i in 0..self.n {
            let p = self.point(i);
            let mut r2 = 0.0;
            for k in 0..self.dim {
                diff[k] = x[k] - p[k];
                r2 += diff[k] * diff[k];
            }
            if r2 > self.eta[i] * self.eta[i] {
                self.kernel.add_grad_r2(&diff[..self.dim], r2, 1.0, out);
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient_into(x, &mut out);
        out
    }

    #[inline]
    fn grad_sq(&self, x: &[f64]) -> f64 {
        let mut g = [0.0; 3];
        self.gradient_into(x, &mut g[..self.dim]);
        g[..self.dim].iter().map(|v| v * v).sum()
    }

    /// `H_{N,η}` at the node with multi-index `idx`.
    pub fn value_at_node(&self, idx: &[usize]) -> f64 {
        self.potential(&self.node(idx))
    }

    pub fn gradient_at_node(&self, idx: &[usize]) -> Vec<f64> {
        self.gradient(&self.node(idx))
    }

    fn build_clusters(&self) -> Vec<Cluster> {
        let rho_floor = 0.1 * self.core_radius;
        let nn: Vec<f64> = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j != i)
                    .map(|j| dist2(self.point(i), self.point(j)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let make = |members: Vec<usize>| -> Cluster {
            let mut center = vec![0.0; self.dim];
            for &i in &members {
                for k in 0..self.dim {
                    center[k] += self.point(i)[k] / members.len() as f64;
                }
            }
            let core = members
                .iter()
                .map(|&i| dist2(self.point(i), &center).sqrt() + self.eta[i])
                .fold(0.0, f64::max);
            let floor = members
                .iter()
                .map(|&i| rho_floor.min(0.45 * nn[i]))
                .fold(f64::INFINITY, f64::min);
            Cluster {
                radius: (2.5 * core).max(floor),
                center,
                members,
            }
        };
        let mut clusters: Vec<Cluster> = (0..self.n).map(|i| make(vec![i])).collect();
        loop {
            let mut merged = None;
            'search: for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let d = dist2(&clusters[a].center, &clusters[b].center).sqrt();
                    if d < clusters[a].radius + clusters[b].radius {
                        merged = Some((a, b));
                        break 'search;
                    }
                }
            }
            match merged {
                None => break,
                Some((a, b)) => {
                    let cb = clusters.swap_remove(b);
                    let mut members = clusters[a].members.clone();
                    members.extend(cb.members);
                    members.sort_unstable();
                    clusters[a] = make(members);
                }
            }
        }
        clusters.sort_by_key(|c| c.members[0]);
        clusters
    }

    /// Partition-of-unity weight of a zone at distance `r` from its centre.
    #[inline]
    fn chi(r: f64, rho: f64) -> f64 {
        if r <= 0.5 * rho {
            1.0
        } else if r >= rho {
            0.0
        } else {
            1.0 - smoothstep((r - 0.5 * rho) / (0.5 * rho))
        }
    }

    /// Radii in `(0, rmax)` at which the ray `c + r ω` crosses a truncation
    /// sphere of `members` or the boundary of `Σ`.
    fn ray_breaks(&self, c: &[f64], w: &[f64], rmax: f64, members: &[usize], out: &mut Vec<f64>) {
        let mut push_roots = |center: &[f64], rad: f64| {
            // |c + r w - center|² = rad²
            let mut b = 0.0;
            let mut q = 0.0;
            for k in 0..self.dim {
                let dk = c[k] - center[k];
                b += w[k] * dk;
                q += dk * dk;
            }
            let disc = b * b - (q - rad * rad);
            if disc > 0.0 {
                let s = disc.sqrt();
                for r in [-b - s, -b + s] {
                    if r > 0.0 && r < rmax {
                        out.push(r);
                    }
                }
            }
        };
        for &i in members {
            push_roots(&self.pts[i * self.dim..(i + 1) * self.dim], self.eta[i]);
        }
        if !self.half_plane {
            let origin = [0.0; 3];
            push_roots(&origin[..self.dim], self.eqm.radius());
        }
    }

    /// `∫_{B(c, rho)} weight(|x - c|) |∇H|² dx` in polar or spherical coordinates
    /// (upper half only for `Log1`).
    fn ball_integral<W: Fn(f64) -> f64 + Sync>(&self, c: &[f64], rho: f64, weight: W, tol: f64) -> Quad {
        let members: Vec<usize> = (0..self.n)
            .filter(|&i| dist2(self.point(i), c).sqrt() < rho + self.eta[i])
            .collect();
        let radial = |w: &[f64]| -> Quad {
            let mut breaks = vec![0.0, 0.5 * rho, rho];
            self.ray_breaks(c, w, rho, &members, &mut breaks);
            let mut x = [0.0; 3];
            quad::integrate_pieces(
                |r| {
                    for k in 0..self.dim {
                        x[k] = c[k] + r * w[k];
                    }
                    weight(r) * self.grad_sq(&x[..self.dim]) * r.powi(self.dim as i32 - 1)
                },
                &breaks,
                tol * 1e-3,
                tol,
            )
        };
        if self.dim == 2 {
            let (t0, t1) = if self.half_plane { (0.0, PI) } else { (0.0, 2.0 * PI) };
            let mut breaks = vec![t0, t1];
            let mut tangent = |v: [f64; 2], rad: f64| {
                let dist = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if dist > rad && dist - rad < rho {
                    let base = v[1].atan2(v[0]);
                    let half = (rad / dist).asin();
                    for a in [base - half, base + half] {
                        let a = a.rem_euclid(2.0 * PI);
                        if a > t0 && a < t1 {
                            breaks.push(a);
                        }
                    }
                }
            };
            for &i in &members {
                let p = self.point(i);
                tangent([p[0] - c[0], p[1] - c[1]], self.eta[i]);
            }
            if !self.half_plane {
                tangent([-c[0], -c[1]], self.eqm.radius());
            }
            let mut err = 0.0;
            let mut q = quad::integrate_pieces(
                |t: f64| {
                    let r = radial(&[t.cos(), t.sin()]);
                    err += r.error;
                    r.value
                },
                &breaks,
                tol * 1e-3,
                tol,
            );
            q.error += err * (t1 - t0) / 1000.0;
            q
        } else {
            quad::integrate(
                |phi: f64| {
                    quad::integrate(
                        |u: f64| {
                            let s = (1.0 - u * u).max(0.0).sqrt();
                            radial(&[s * phi.cos(), s * phi.sin(), u]).value
                        },
                        -1.0,
                        1.0,
                        tol * 1e-3,
                        tol,
                    )
                    .value
                },
                0.0,
                2.0 * PI,
                tol * 1e-3,
                tol,
            )
        }
    }

    /// `‖∇H_{N,η}‖²_{L²(B(c, r))}` (both half-planes for `Log1`).
    pub fn dirichlet_on_ball(&self, c: &[f64], r: f64) -> Quad {
        let q = self.ball_integral(c, r, |_| 1.0, 1e-7);
        if self.half_plane {
            if c.len() > 1 && c[1] != 0.0 {
                // The polar routine assumes a centre on the axis in the half-plane case.
                return Quad { value: f64::NAN, error: f64::INFINITY };
            }
            q.scale(2.0)
        } else {
            q
        }
    }

    fn zones_integral(&self) -> Quad {
        let tol = self.params.quad_tol;
        self.clusters
            .par_iter()
            .map(|cl| self.ball_integral(&cl.center, cl.radius, |r| Self::chi(r, cl.radius), tol))
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }

    /// Midpoint sum of the remainder over one block at spacing `h`.
    fn block_sum(&self, lo: &[f64], cells: usize, h: f64, zones: &[usize]) -> f64 {
        let mut acc = KahanSum::default();
        let mut x = [0.0; 3];
        let total = cells.pow(self.dim as u32);
        let vol = h.powi(self.dim as i32);
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..self.dim {
                x[k] = lo[k] + ((rem % cells) as f64 + 0.5) * h;
                rem /= cells;
            }
            let xs = &x[..self.dim];
            let mut w = 1.0;
            for &z in zones {
                let cl = &self.clusters[z];
                w -= Self::chi(dist2(xs, &cl.center).sqrt(), cl.radius);
            }
            if w > 0.0 {
                acc.add(w * self.grad_sq(xs));
            }
        }
        acc.value() * vol
    }

    /// Grid part: returns `(Q(h), Q(h/2))`.
    fn grid_integral(&self) -> (f64, f64) {
        let q = self.grid_sums(2);
        (q[0], q[1])
    }

    /// Midpoint sums of the remainder at spacings `h, h/2, ..., h/2^{levels-1}`
    /// on a fixed block layout.
    pub fn grid_sums(&self, levels: usize) -> Vec<f64> {
        let block = self.block_cells as f64 * self.h0;
        let counts: Vec<usize> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| ((h - l) / block).round() as usize)
            .collect();
        let total: usize = counts.iter().product();
        let half_diag = 0.5 * block * (self.dim as f64).sqrt();
        let sigma_r = self.eqm.radius();
        let results: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut rem = flat;
                let mut lo = vec![0.0; self.dim];
                let mut mid = vec![0.0; self.dim];
                for k in 0..self.dim {
                    let i = rem % counts[k];
                    rem /= counts[k];
                    lo[k] = self.lo[k] + i as f64 * block;
                    mid[k] = lo[k] + 0.5 * block;
                }
                let rm = mid.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut zones = Vec::new();
                for (z, cl) in self.clusters.iter().enumerate() {
                    let d = dist2(&mid, &cl.center).sqrt();
                    if d + half_diag <= 0.5 * cl.radius {
                        return vec![0.0; levels];
                    }
                    if d < cl.radius + half_diag {
                        zones.push(z);
                    }
                }
                let gap = rm - half_diag - self.core_radius;
                let mut h = if gap < 0.5 {
                    self.h0
                } else if gap < 2.0 * self.core_radius {
                    2.0 * self.h0
                } else {
                    8.0 * self.h0
                };
                let kink = if self.half_plane {
                    let e = sigma_r;
                    dist2(&mid, &[e, 0.0]).sqrt().min(dist2(&mid, &[-e, 0.0]).sqrt()) < half_diag
                } else {
                    (rm - sigma_r).abs() < half_diag
                };
                if kink {
                    h = h.min(self.h0 / self.params.boundary_refine as f64);
                }
                if !zones.is_empty() {
                    h = h.min(0.5 * self.h0);
                }
                let cells = (block / h).round() as usize;
                (0..levels)
                    .map(|l| {
                        let c = cells << l;
                        self.block_sum(&lo, c, block / c as f64, &zones)
                    })
                    .collect()
            })
            .collect();
        let mut sums = vec![KahanSum::default(); levels];
        for r in results {
            for (s, v) in sums.iter_mut().zip(r) {
                s.add(v);
            }
        }
        sums.iter().map(|s| s.value()).collect()
    }

    /// `∫` of `|∇H|²` outside the grid box, along rays `r = r_box(ω)/u`.
    fn tail_integral(&self) -> Quad {
        let tol = 1e-10;
        let l = self.hi[0];
        let ray = |w: &[f64]| -> f64 {
            let rb = l / w.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let mut x = [0.0; 3];
            quad::integrate(
                |u: f64| {
                    let r = rb / u;
                    for k in 0..self.dim {
                        x[k] = r * w[k];
                    }
                    self.grad_sq(&x[..self.dim]) * r.powi(self.dim as i32 - 1) * rb / (u * u)
                },
                0.0,
                1.0,
                tol,
                1e-8,
            )
            .value
        };
        if self.dim == 2 {
            let corners: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 4.0).collect();
            let breaks: Vec<f64> = corners
                .into_iter()
                .filter(|&t| !self.half_plane || t <= PI)
                .collect();
            quad::integrate_pieces(|t: f64| ray(&[t.cos(), t.sin()]), &breaks, tol, 1e-8)
        } else {
            quad::integrate(
                |phi: f64| {
                    quad::integrate(
                        |u: f64| {
                            let s = (1.0 - u * u).max(0.0).sqrt();
                            ray(&[s * phi.cos(), s * phi.sin(), u])
                        },
                        -1.0,
                        1.0,
                        tol,
                        1e-6,
                    )
                    .value
                },
                0.0,
                2.0 * PI,
                tol,
                1e-6,
            )
        }
    }

    /// Dipole moment `Σ x_i - N ∫ x dμ` of the charge distribution.
    pub fn dipole_moment(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for i in 0..self.n {
            for k in 0..self.dim {
                p[k] += self.point(i)[k];
            }
        }
        p
    }

    /// Dipole approximation of the exterior integral of `|∇H|²` outside the box.
    pub fn dipole_tail_estimate(&self) -> f64 {
        let p = self.dipole_moment();
        let p2: f64 = p.iter().map(|v| v * v).sum();
        let l = self.hi[0];
        if self.dim == 2 {
            let full = p2 * (PI + 2.0) / (2.0 * l * l);
            if self.half_plane {
                full / 2.0
            } else {
                full
            }
        } else {
            let d = self.dim as f64;
            let k2 = (d - 2.0) * (d - 2.0);
            // ∫_{S²} (|p|² + 3 (p·ω)²) r_b(ω)^{-3} / 3 dω
            k2 * quad::integrate(
                |phi: f64| {
                    quad::integrate(
                        |u: f64| {
                            let s = (1.0 - u * u).max(0.0).sqrt();
                            let w = [s * phi.cos(), s * phi.sin(), u];
                            let rb = l / w.iter().map(|v| v.abs()).fold(0.0, f64::max);
                            let pw: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum();
                            (p2 + 3.0 * pw * pw) / (3.0 * rb * rb * rb)
                        },
                        -1.0,
                        1.0,
                        1e-12,
                        1e-9,
                    )
                    .value
                },
                0.0,
                2.0 * PI,
                1e-12,
                1e-9,
            )
            .value
        }
    }
}

/// Renormalized electric energy and the pieces it was assembled from.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElectricEnergy {
    /// `(1/c_d)(∫|∇H_{N,η}|² - c_d Σ g(η_i))`.
    pub value: f64,
    /// Estimated absolute error of `value`.
    pub error: f64,
    pub zones: f64,
    pub grid_coarse: f64,
    pub grid_fine: f64,
    pub tail: f64,
    pub self_term: f64,
}

/// Computes the renormalized electric energy; fails if the error estimate
/// exceeds `tol`.
pub fn electric_energy(field: &GridField, tol: f64) -> Result<ElectricEnergy> {
    let cd = field.kernel.field_cd()?;
    let zones = field.zones_integral();
    let (q1, q2) = field.grid_integral();
    let tail = field.tail_integral();
    let rich = q2 + (q2 - q1) / 3.0;
    let sym = if field.half_plane { 2.0 } else { 1.0 };
    let total = sym * (zones.value + rich + tail.value);
    let self_term: f64 = field.g_eta.iter().sum();
    let value = total / cd - self_term;
    let error = sym * (zones.error + (q2 - q1).abs() / 3.0 + tail.error) / cd;
    if !value.is_finite() || error > tol {
        return Err(Error::Tolerance {
            what: "electric energy".into(),
            achieved: error,
            requested: tol,
        });
    }
    Ok(ElectricEnergy {
        value,
        error,
        zones: sym * zones.value,
        grid_coarse: sym * q1,
        grid_fine: sym * q2,
        tail: sym * tail.value,
        self_term,
    })
}

/// `2N Σ_i ∫ f_{η_i}(x - x_i) dμ(x)`: the gap between the electric energy and
/// `F_N` when the truncation balls are disjoint.
pub fn truncation_correction(config: &Configuration, eqm: &EquilibriumMeasure, trunc: &TruncationVector) -> f64 {
    let kernel = eqm.kernel();
    let n = config.n() as f64;
    let mut acc = KahanSum::default();
    for (p, &eta) in config.points().zip(trunc.radii()) {
        let v = match eqm.descriptor {
            Descriptor::Semicircle { .. } => {
                let x = p[0];
                quad::integrate_pieces(
                    |y| kernel.f_eta_radial((y - x).abs(), eta) * eqm.density(&[y]),
                    &[x - eta, x, x + eta],
                    1e-15,
                    1e-12,
                )
                .value
            }
            Descriptor::UniformDisk { density, radius } | Descriptor::UniformBall { density, radius, .. } => {
                let d = config.dim();
                let dist = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                // Fraction of the sphere S(x, r) inside Σ, integrated radially.
                let frac = |r: f64| -> f64 {
                    if dist + r <= radius {
                        1.0
                    } else if dist >= radius + r || r >= dist + radius {
                        0.0
                    } else {
                        // y = x + rω lies in Σ iff cos∠(ω, x) <= t.
                        let t = ((radius * radius - dist * dist - r * r) / (2.0 * dist * r)).clamp(-1.0, 1.0);
                        if d == 2 {
                            1.0 - t.acos() / PI
                        } else {
                            (1.0 + t) / 2.0
                        }
                    }
                };
                let area = crate::kernel::sphere_area(d);
                let mut breaks = vec![0.0, eta];
                for b in [radius - dist, dist - radius] {
                    if b > 0.0 && b < eta {
                        breaks.push(b);
                    }
                }
                density
                    * quad::integrate_pieces(
                        |r| area * r.powi(d as i32 - 1) * kernel.f_eta_radial(r, eta) * frac(r),
                        &breaks,
                        1e-15,
                        1e-12,
                    )
                    .value
            }
        };
        acc.add(v);
    }
    2.0 * n * acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::next_order_energy;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};

    fn disk() -> EquilibriumMeasure {
        equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap()
    }

    #[test]
    fn single_charge_at_origin() {
        let m = disk();
        let c = Configuration::new(2, vec![0.0, 0.0]).unwrap();
        let eta = 1e-2;
        let t = TruncationVector::uniform(1, eta).unwrap();
        let f = truncated_field_grid(&c, &m, &t, GridParams::default()).unwrap();
        // Radial oracle: H(r) = min(-log r, -log η) - h(r).
        for r in [0.005, 0.3, 0.99, 1.5, 4.0] {
            let exact = (-(r as f64).ln()).min(-eta.ln()) - m.h(&[r, 0.0]);
            assert!((f.potential(&[0.0, r]) - exact).abs() < 1e-14);
        }
        let e = electric_energy(&f, 1e-4).unwrap();
        let fn_ = next_order_energy(&c, &m, &KernelSpec::log2()).unwrap();
        let corr = truncation_correction(&c, &m, &t);
        assert!((corr - eta * eta).abs() < 1e-12);
        assert!((e.value - (fn_ + corr)).abs() < 1e-4, "{} vs {}", e.value, fn_ + corr);
    }

    #[test]
    fn truncation_sphere_continuity_and_far_field() {
        let m = disk();
        let c = Configuration::new(2, vec![0.1, 0.2, -0.4, 0.3, 0.5, -0.5]).unwrap();
        let t = TruncationVector::uniform(3, 0.05).unwrap();
        let f = truncated_field_grid(&c, &m, &t, GridParams::default()).unwrap();
        let x = [0.1 + 0.05, 0.2];
        assert!((f.potential(&x) - f.potential_untruncated(&x).unwrap()).abs() < 1e-12);
        let far = 50.0 * 2.0;
        let v = f.potential(&[far, 0.0]).abs() * far;
        assert!(v < 10.0, "{v}");
    }

    #[test]
    fn dipole_tail_matches_exact_tail() {
        let m = disk();
        let c = Configuration::new(2, vec![0.3, 0.2, 0.5, -0.1]).unwrap();
        let t = TruncationVector::uniform(2, 0.05).unwrap();
        let f = truncated_field_grid(&c, &m, &t, GridParams::default()).unwrap();
        let exact = f.tail_integral().value;
        let approx = f.dipole_tail_estimate();
        assert!((exact - approx).abs() < 0.05 * approx, "{exact} vs {approx}");
    }

    #[test]
    fn midpoint_sums_converge_at_second_order() {
        let m = disk();
        let c = Configuration::new(2, vec![0.3, 0.2, -0.2, -0.4]).unwrap();
        let t = TruncationVector::uniform(2, 1e-2).unwrap();
        let f = truncated_field_grid(&c, &m, &t, GridParams { h0: Some(1.0 / 64.0), ..Default::default() }).unwrap();
        let q = f.grid_sums(3);
        let ratio = (q[1] - q[0]) / (q[2] - q[1]);
        assert!(ratio >= 3.0, "ratio {ratio}");
    }
}
