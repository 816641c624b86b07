//! Equilibrium measures for quadratic confinement `V(x) = a|x|^2`.
//!
//! | kernel | measure | support radius |
//! |---|---|---|
//! | `Log2` | uniform disk, density `a/π` | `1/√a` |
//! | `Log1` | semicircle, density `(2/πR²)√(R²-x²)` | `√(2/a)` |
//! | `Coul` (d ≥ 3) | uniform ball, density `d a / c_d` | `((d-2)/a)^{1/d}` |
//!
//! Each case carries closed forms for the potential `h^μ`, its gradient, the
//! Euler–Lagrange constant `c`, and the minimal energy `I_V`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctstats::testfn::TestFunction;
use crate::kernel::{ball_volume, cd_const, sphere_area, KernelCase, KernelSpec};
use crate::quad::{self, Quad};

/// `V(x) = a|x|^2`, optionally perturbed to `V + tξ`.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    a: f64,
    perturbation: Option<(Arc<TestFunction>, f64)>,
}

impl PotentialSpec {
    pub fn quadratic(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("quadratic coefficient must be positive, got {a}")));
        }
        Ok(Self { a, perturbation: None })
    }

    /// `V + tξ` with `|t| <= t_max`.
    pub fn perturbed(&self, xi: TestFunction, t: f64, t_max: f64) -> Result<Self> {
        if !(t.abs() <= t_max) {
            return Err(Error::Range(format!("perturbation amplitude |{t}| exceeds the maximum {t_max}")));
        }
        Ok(Self {
            a: self.a,
            perturbation: Some((Arc::new(xi), t)),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn is_quadratic(&self) -> bool {
        self.perturbation.is_none()
    }

    pub fn perturbation(&self) -> Option<(&TestFunction, f64)> {
        self.perturbation.as_ref().map(|(xi, t)| (xi.as_ref(), *t))
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let base = self.a * r2;
        match &self.perturbation {
            None => base,
            Some((xi, t)) => base + t * xi.value(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Descriptor {
    UniformDisk { radius: f64, density: f64 },
    Semicircle { edge: f64 },
    UniformBall { d: usize, radius: f64, density: f64 },
}

/// Closed-form equilibrium measure together with `I_V` and `c`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EquilibriumMeasure {
    pub descriptor: Descriptor,
    #[serde(rename = "I_V")]
    pub iv: f64,
    pub c: f64,
    /// `∫ V dμ`.
    pub v_mean: f64,
    pub support: Support,
    #[serde(skip)]
    kernel: KernelSpec,
    #[serde(skip)]
    a: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Support {
    pub shape: &'static str,
    pub dim: usize,
    pub radius: f64,
}

/// Builds the equilibrium measure of `potential` for `kernel`.
pub fn equilibrium_measure(potential: &PotentialSpec, kernel: KernelSpec) -> Result<EquilibriumMeasure> {
    if !potential.is_quadratic() {
        return Err(Error::Capability(
            "equilibrium measures are available for purely quadratic potentials only".into(),
        ));
    }
    let a = potential.a();
    let (descriptor, c, v_mean) = match kernel.case() {
        KernelCase::Log2 => {
            let r = 1.0 / a.sqrt();
            (Descriptor::UniformDisk { radius: r, density: a / PI }, 0.5 - r.ln(), 0.5)
        }
        KernelCase::Log1 => {
            let r = (2.0 / a).sqrt();
            (Descriptor::Semicircle { edge: r }, 0.5 - (r / 2.0).ln(), 0.5)
        }
        KernelCase::Coul => {
            let d = kernel.dim();
            let df = d as f64;
            let r = ((df - 2.0) / a).powf(1.0 / df);
            let density = df * a / cd_const(d)?;
            let c = 0.5 * df * r.powf(2.0 - df);
            (Descriptor::UniformBall { d, radius: r, density }, c, a * df * r * r / (df + 2.0))
        }
        KernelCase::Riesz => {
            return Err(Error::Capability(
                "closed-form equilibrium measures exist only for Log1, Log2 and Coulomb kernels".into(),
            ))
        }
    };
    let (shape, dim, radius) = match descriptor {
        Descriptor::UniformDisk { radius, .. } => ("disk", 2, radius),
        Descriptor::Semicircle { edge } => ("interval", 1, edge),
        Descriptor::UniformBall { d, radius, .. } => ("ball", d, radius),
    };
    Ok(EquilibriumMeasure {
        descriptor,
        iv: c + 0.5 * v_mean,
        c,
        v_mean,
        support: Support { shape, dim, radius },
        kernel,
        a,
    })
}

impl EquilibriumMeasure {
    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn dim(&self) -> usize {
        self.support.dim
    }

    pub fn radius(&self) -> f64 {
        self.support.radius
    }

    pub fn iv_and_c(&self) -> (f64, f64) {
        (self.iv, self.c)
    }

    /// `∬ g(x-y) dμ dμ = I_V - ∫V dμ`.
    pub fn interaction_energy(&self) -> f64 {
        self.iv - self.v_mean
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec { a: self.a, perturbation: None }
    }

    /// Fails unless `potential` is the quadratic potential this measure was built for.
    pub fn check_potential(&self, potential: &PotentialSpec) -> Result<()> {
        if !potential.is_quadratic() || (potential.a() - self.a).abs() > 1e-14 * self.a {
            return Err(Error::Consistency(format!(
                "equilibrium measure was built for V = {}|x|^2, got a different potential",
                self.a
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn v(&self, x: &[f64]) -> f64 {
        self.a * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        norm(x) <= self.radius()
    }

    /// Density of μ at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        match self.descriptor {
            Descriptor::UniformDisk { radius, density } | Descriptor::UniformBall { radius, density, .. } => {
                if r <= radius {
                    density
                } else {
                    0.0
                }
            }
            Descriptor::Semicircle { edge } => {
                if r < edge {
                    2.0 / (PI * edge * edge) * (edge * edge - r * r).sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// `‖μ‖_∞`.
    pub fn density_sup(&self) -> f64 {
        match self.descriptor {
            Descriptor::UniformDisk { density, .. } | Descriptor::UniformBall { density, .. } => density,
            Descriptor::Semicircle { edge } => 2.0 / (PI * edge),
        }
    }

    /// `∫ μ log μ`.
    pub fn entropy(&self) -> f64 {
        match self.descriptor {
            Descriptor::UniformDisk { density, .. } | Descriptor::UniformBall { density, .. } => density.ln(),
            Descriptor::Semicircle { edge } => {
                // With x = R cos θ: ∫_0^π (2/π) sin²θ log((2/(πR)) sin θ) dθ.
                let q = quad::integrate(
                    |t: f64| {
                        let s = t.sin();
                        if s <= 0.0 {
                            0.0
                        } else {
                            2.0 / PI * s * s * (2.0 / (PI * edge) * s).ln()
                        }
                    },
                    0.0,
                    PI,
                    1e-13,
                    1e-13,
                );
                q.value
            }
        }
    }

    /// Potential `h^μ(x) = ∫ g(x-y) dμ(y)`.
    pub fn h(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        match self.descriptor {
            Descriptor::UniformDisk { radius, .. } => {
                if r <= radius {
                    -radius.ln() + 0.5 * (1.0 - r * r / (radius * radius))
                } else {
                    -r.ln()
                }
            }
            Descriptor::Semicircle { edge } => semicircle_h(edge, x[0], if x.len() > 1 { x[1] } else { 0.0 }),
            Descriptor::UniformBall { d, radius, .. } => {
                let df = d as f64;
                if r <= radius {
                    radius.powf(2.0 - df) + (df - 2.0) * (radius * radius - r * r) / (2.0 * radius.powf(df))
                } else {
                    r.powf(2.0 - df)
                }
            }
        }
    }

    /// Gradient of `h^μ`. For the semicircle, `x` may be a point `(x, y)` of the
    /// extended plane, in which case this is the gradient of the harmonic extension.
    pub fn h_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.h_grad_into(x, &mut out);
        out
    }

    /// Allocation-free [`Self::h_grad`].
    #[inline]
    pub fn h_grad_into(&self, x: &[f64], out: &mut [f64]) {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self.descriptor {
            Descriptor::UniformDisk { radius, .. } => {
                let f = if r2 <= radius * radius { -1.0 / (radius * radius) } else { -1.0 / r2 };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = f * v;
                }
            }
            Descriptor::Semicircle { edge } => {
                let (gx, gy) = semicircle_h_grad(edge, x[0], if x.len() > 1 { x[1] } else { 0.0 });
                out[0] = gx;
                if x.len() > 1 {
                    out[1] = gy;
                }
            }
            Descriptor::UniformBall { d, radius, .. } => {
                let df = d as f64;
                let f = if r2 <= radius * radius {
                    -(df - 2.0) / radius.powf(df)
                } else {
                    (2.0 - df) * r2.powf(-0.5 * df)
                };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = f * v;
                }
            }
        }
    }

    /// `ζ = h^μ + V/2 - c`, exactly zero on the support.
    pub fn zeta(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        (self.h(x) + 0.5 * self.v(x) - self.c).max(0.0)
    }

    /// `μ(B(center, r))` by exact geometry.
    pub fn mass_in_ball(&self, center: &[f64], r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.descriptor {
            Descriptor::Semicircle { edge } => {
                let x = center[0];
                semicircle_cdf(edge, x + r) - semicircle_cdf(edge, x - r)
            }
            Descriptor::UniformDisk { radius, density } => {
                density * ball_intersection_volume(2, radius, r, norm(center))
            }
            Descriptor::UniformBall { d, radius, density } => {
                density * ball_intersection_volume(d, radius, r, norm(center))
            }
        }
    }

    /// Cumulative distribution of the radius `|x|` under μ.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.descriptor {
            Descriptor::UniformDisk { radius, .. } => (r / radius).min(1.0).powi(2),
            Descriptor::UniformBall { d, radius, .. } => (r / radius).min(1.0).powi(d as i32),
            Descriptor::Semicircle { edge } => semicircle_cdf(edge, r) - semicircle_cdf(edge, -r),
        }
    }

    /// Cumulative distribution of a one-dimensional measure (semicircle only).
    pub fn cdf_1d(&self, x: f64) -> Result<f64> {
        match self.descriptor {
            Descriptor::Semicircle { edge } => Ok(semicircle_cdf(edge, x)),
            _ => Err(Error::Capability("cdf_1d applies to one-dimensional measures".into())),
        }
    }

    /// One i.i.d. draw from μ, written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.descriptor {
            Descriptor::Semicircle { edge } => {
                // First coordinate of a uniform point in the disk of radius `edge`.
                let u: f64 = rng.random();
                let t: f64 = rng.random();
                out[0] = edge * u.sqrt() * (2.0 * PI * t).cos();
            }
            Descriptor::UniformDisk { radius, .. } | Descriptor::UniformBall { radius, .. } => {
                let d = out.len();
                let mut n2 = 0.0;
                while n2 == 0.0 {
                    for o in out.iter_mut() {
                        *o = StandardNormal.sample(rng);
                    }
                    n2 = out.iter().map(|v| v * v).sum::<f64>();
                }
                let u: f64 = rng.random();
                let s = radius * u.powf(1.0 / d as f64) / n2.sqrt();
                for o in out.iter_mut() {
                    *o *= s;
                }
            }
        }
    }

    /// `∫ f dμ` by nested adaptive quadrature over the support.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F, tol: f64) -> Result<Quad> {
        let q = match self.descriptor {
            Descriptor::Semicircle { edge } => quad::integrate(
                |t: f64| {
                    let s = t.sin();
                    2.0 / PI * s * s * f(&[edge * t.cos()])
                },
                0.0,
                PI,
                tol,
                tol,
            ),
            Descriptor::UniformDisk { radius, density } => {
                let inner_tol = tol / (4.0 * radius * radius).max(1.0);
                let mut err = 0.0;
                let mut q = quad::integrate(
                    |r: f64| {
                        let inner = quad::integrate(
                            |t: f64| f(&[r * t.cos(), r * t.sin()]),
                            0.0,
                            2.0 * PI,
                            inner_tol,
                            inner_tol,
                        );
                        err += inner.error * r;
                        inner.value * r * density
                    },
                    0.0,
                    radius,
                    tol,
                    tol,
                );
                q.error += err * density;
                q
            }
            Descriptor::UniformBall { d: 3, radius, density } => {
                let inner_tol = tol / (4.0 * PI * radius * radius).max(1.0);
                quad::integrate(
                    |r: f64| {
                        let shell = quad::integrate(
                            |ct: f64| {
                                let st = (1.0 - ct * ct).max(0.0).sqrt();
                                quad::integrate(
                                    |p: f64| f(&[r * st * p.cos(), r * st * p.sin(), r * ct]),
                                    0.0,
                                    2.0 * PI,
                                    inner_tol,
                                    inner_tol,
                                )
                                .value
                            },
                            -1.0,
                            1.0,
                            inner_tol,
                            inner_tol,
                        );
                        shell.value * r * r * density
                    },
                    0.0,
                    radius,
                    tol,
                    tol,
                )
            }
            Descriptor::UniformBall { .. } => {
                return Err(Error::Capability("quadrature over balls is implemented for d = 3".into()))
            }
        };
        if !q.value.is_finite() || q.error > tol.max(tol * q.value.abs()) * 10.0 {
            return Err(Error::Tolerance {
                what: "integral against the equilibrium measure".into(),
                achieved: q.error,
                requested: tol,
            });
        }
        Ok(q)
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Semicircle law CDF on `[-R, R]`.
pub fn semicircle_cdf(edge: f64, x: f64) -> f64 {
    if x <= -edge {
        0.0
    } else if x >= edge {
        1.0
    } else {
        let u = x / edge;
        0.5 + (u * (1.0 - u * u).sqrt() + u.asin()) / PI
    }
}

/// `F(z) = z²/R² - z s(z)/R² + log(z + s(z)) - log 2 - 1/2` with
/// `s(z) = √(z-R)√(z+R)`, evaluated in the upper half plane; `h = -Re F`.
fn semicircle_f(edge: f64, x: f64, y: f64) -> (Complex<f64>, Complex<f64>) {
    let z = Complex::new(x, y.abs());
    let s = (z - edge).sqrt() * (z + edge).sqrt();
    let r2 = edge * edge;
    let f = z * z / r2 - z * s / r2 + (z + s).ln() - Complex::new(2f64.ln() + 0.5, 0.0);
    let fp = (z - s) * (2.0 / r2);
    (f, fp)
}

fn semicircle_h(edge: f64, x: f64, y: f64) -> f64 {
    if y == 0.0 && x.abs() <= edge {
        return -x * x / (edge * edge) + 0.5 - (edge / 2.0).ln();
    }
    -semicircle_f(edge, x, y).0.re
}

fn semicircle_h_grad(edge: f64, x: f64, y: f64) -> (f64, f64) {
    if y == 0.0 && x.abs() < edge {
        // Normal derivative jumps across the support; report the tangential part.
        return (-2.0 * x / (edge * edge), 0.0);
    }
    let (_, fp) = semicircle_f(edge, x, y);
    let gy = fp.im;
    (-fp.re, if y < 0.0 { -gy } else { gy })
}

/// Volume of `B(0, big) ∩ B(c, small)` with `|c| = dist`, in dimension `d`.
pub fn ball_intersection_volume(d: usize, big: f64, small: f64, dist: f64) -> f64 {
    let vol = |r: f64| ball_volume(d) * r.powi(d as i32);
    if dist >= big + small {
        return 0.0;
    }
    if dist <= (big - small).abs() {
        return vol(big.min(small));
    }
    // Plane of intersection at distance x0 from the origin.
    let x0 = (dist * dist + big * big - small * small) / (2.0 * dist);
    cap_volume(d, big, big - x0) + cap_volume(d, small, small - (dist - x0))
}

/// Volume of the cap of height `h` of a ball of radius `rho` in dimension `d`.
fn cap_volume(d: usize, rho: f64, h: f64) -> f64 {
    let h = h.clamp(0.0, 2.0 * rho);
    match d {
        1 => h,
        2 => rho * rho * ((rho - h) / rho).clamp(-1.0, 1.0).acos() - (rho - h) * (2.0 * rho * h - h * h).max(0.0).sqrt(),
        3 => PI * h * h * (3.0 * rho - h) / 3.0,
        _ => {
            let w = ball_volume(d - 1);
            let e = (d as f64 - 1.0) / 2.0;
            quad::integrate(|t: f64| w * (rho * rho - t * t).max(0.0).powf(e), rho - h, rho, 1e-14, 1e-12).value
        }
    }
}

/// `|S^{d-1}|` re-exported for callers that integrate radial profiles.
pub fn radial_measure(d: usize) -> f64 {
    sphere_area(d)
}
