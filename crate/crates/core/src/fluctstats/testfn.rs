//! Compactly supported test functions ξ used for linear statistics and as
//! transport fields ψ.

use std::fmt;
use std::sync::Arc;

use crate::equilibrium::{Descriptor, EquilibriumMeasure};
use crate::error::{Error, Result};
use crate::kernel::sphere_area;
use crate::quad;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum TestFunction {
    /// `amplitude · S((outer - |x-c|)/(outer - inner))`: one on `B(c, inner)`,
    /// zero outside `B(c, outer)`, with `S` the C³ smoothstep.
    RadialBump {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
        amplitude: f64,
    },
    /// `p(x) w(x)` in one dimension, `w = 1` on `[lo, hi]` and ramping to zero
    /// over a width `ramp` on each side.
    Polynomial1D {
        coeffs: Vec<f64>,
        lo: f64,
        hi: f64,
        ramp: f64,
    },
    Custom {
        value: ScalarFn,
        grad: VectorFn,
        /// A ball containing the support.
        center: Vec<f64>,
        radius: f64,
    },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RadialBump { center, inner, outer, amplitude } => f
                .debug_struct("RadialBump")
                .field("center", center)
                .field("inner", inner)
                .field("outer", outer)
                .field("amplitude", amplitude)
                .finish(),
            Self::Polynomial1D { coeffs, lo, hi, ramp } => f
                .debug_struct("Polynomial1D")
                .field("coeffs", coeffs)
                .field("lo", lo)
                .field("hi", hi)
                .field("ramp", ramp)
                .finish(),
            Self::Custom { center, radius, .. } => {
                f.debug_struct("Custom").field("center", center).field("radius", radius).finish()
            }
        }
    }
}

/// C³ smoothstep on `[0, 1]`.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let t4 = t * t * t * t;
    t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
}

#[inline]
pub fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    let u = t * (1.0 - t);
    140.0 * u * u * u
}

impl TestFunction {
    pub fn radial_bump(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::Domain(format!("bump radii must satisfy 0 <= inner < outer, got {inner}, {outer}")));
        }
        Ok(Self::RadialBump { center, inner, outer, amplitude: 1.0 })
    }

    pub fn polynomial_1d(coeffs: Vec<f64>, lo: f64, hi: f64, ramp: f64) -> Result<Self> {
        if !(hi >= lo && ramp > 0.0) {
            return Err(Error::Domain("polynomial window needs lo <= hi and ramp > 0".into()));
        }
        Ok(Self::Polynomial1D { coeffs, lo, hi, ramp })
    }

    pub fn custom<F, G>(value: F, grad: G, center: Vec<f64>, radius: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::Custom {
            value: Arc::new(value),
            grad: Arc::new(grad),
            center,
            radius,
        }
    }

    /// `k ξ`.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Self::RadialBump { center, inner, outer, amplitude } => Self::RadialBump {
                center: center.clone(),
                inner: *inner,
                outer: *outer,
                amplitude: amplitude * k,
            },
            Self::Polynomial1D { coeffs, lo, hi, ramp } => Self::Polynomial1D {
                coeffs: coeffs.iter().map(|c| c * k).collect(),
                lo: *lo,
                hi: *hi,
                ramp: *ramp,
            },
            Self::Custom { value, grad, center, radius } => {
                let (v, g) = (value.clone(), grad.clone());
                Self::custom(
                    move |x| k * v(x),
                    move |x| g(x).into_iter().map(|c| k * c).collect(),
                    center.clone(),
                    *radius,
                )
            }
        }
    }

    fn bump_profile(inner: f64, outer: f64, r: f64) -> (f64, f64) {
        let w = outer - inner;
        let t = (outer - r) / w;
        (smoothstep(t), -smoothstep_deriv(t) / w)
    }

    fn window(lo: f64, hi: f64, ramp: f64, x: f64) -> (f64, f64) {
        if x < lo {
            let t = (x - (lo - ramp)) / ramp;
            (smoothstep(t), smoothstep_deriv(t) / ramp)
        } else if x > hi {
            let t = ((hi + ramp) - x) / ramp;
            (smoothstep(t), -smoothstep_deriv(t) / ramp)
        } else {
            (1.0, 0.0)
        }
    }

    fn poly(coeffs: &[f64], x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::RadialBump { center, inner, outer, amplitude } => {
                let r = dist(x, center);
                if r >= *outer {
                    0.0
                } else {
                    amplitude * Self::bump_profile(*inner, *outer, r).0
                }
            }
            Self::Polynomial1D { coeffs, lo, hi, ramp } => {
                let (w, _) = Self::window(*lo, *hi, *ramp, x[0]);
                if w == 0.0 {
                    0.0
                } else {
                    Self::poly(coeffs, x[0]).0 * w
                }
            }
            Self::Custom { value, .. } => value(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::RadialBump { center, inner, outer, amplitude } => {
                let r = dist(x, center);
                if r >= *outer || r <= *inner || r == 0.0 {
                    return vec![0.0; x.len()];
                }
                let db = amplitude * Self::bump_profile(*inner, *outer, r).1;
                x.iter().zip(center).map(|(a, c)| db * (a - c) / r).collect()
            }
            Self::Polynomial1D { coeffs, lo, hi, ramp } => {
                let (w, dw) = Self::window(*lo, *hi, *ramp, x[0]);
                let (p, dp) = Self::poly(coeffs, x[0]);
                vec![dp * w + p * dw]
            }
            Self::Custom { grad, .. } => grad(x),
        }
    }

    /// Centre and radius of a ball containing the support.
    pub fn support_ball(&self) -> (Vec<f64>, f64) {
        match self {
            Self::RadialBump { center, outer, .. } => (center.clone(), *outer),
            Self::Polynomial1D { lo, hi, ramp, .. } => (vec![0.5 * (lo + hi)], 0.5 * (hi - lo) + ramp),
            Self::Custom { center, radius, .. } => (center.clone(), *radius),
        }
    }

    /// Whether the support lies in the interior of `Σ`.
    pub fn supported_inside(&self, eqm: &EquilibriumMeasure) -> bool {
        let (c, r) = self.support_ball();
        c.len() == eqm.dim() && c.iter().map(|v| v * v).sum::<f64>().sqrt() + r < eqm.radius()
    }

    /// Dirichlet integral `∫_{R^d} |∇ξ|²`.
    pub fn dirichlet(&self, d: usize) -> Result<f64> {
        let tol = 1e-12;
        match self {
            Self::RadialBump { inner, outer, amplitude, center } => {
                if center.len() != d {
                    return Err(Error::Domain("bump centre dimension differs from d".into()));
                }
                let area = sphere_area(d);
                let q = quad::integrate_checked(
                    |r| {
                        let db = Self::bump_profile(*inner, *outer, r).1;
                        area * db * db * r.powi(d as i32 - 1)
                    },
                    *inner,
                    *outer,
                    tol,
                    tol,
                    "Dirichlet integral",
                )?;
                Ok(amplitude * amplitude * q.value)
            }
            Self::Polynomial1D { lo, hi, ramp, .. } => {
                let q = quad::integrate_pieces(
                    |x| {
                        let g = self.grad(&[x])[0];
                        g * g
                    },
                    &[lo - ramp, *lo, *hi, hi + ramp],
                    tol,
                    tol,
                );
                Ok(q.value)
            }
            Self::Custom { center, radius, .. } => match d {
                1 => Ok(quad::integrate(
                    |x| self.grad(&[x])[0].powi(2),
                    center[0] - radius,
                    center[0] + radius,
                    tol,
                    1e-10,
                )
                .value),
                2 => Ok(quad::integrate(
                    |r| {
                        quad::integrate(
                            |t: f64| {
                                let p = [center[0] + r * t.cos(), center[1] + r * t.sin()];
                                self.grad(&p).iter().map(|v| v * v).sum::<f64>()
                            },
                            0.0,
                            2.0 * std::f64::consts::PI,
                            tol,
                            1e-10,
                        )
                        .value
                            * r
                    },
                    0.0,
                    *radius,
                    tol,
                    1e-10,
                )
                .value),
                _ => Err(Error::Capability("Dirichlet integral of custom functions for d <= 2".into())),
            },
        }
    }

    /// `∫ ξ dμ` to absolute tolerance `1e-10`.
    pub fn integral_against(&self, eqm: &EquilibriumMeasure) -> Result<f64> {
        if let Self::RadialBump { center, inner, outer, amplitude } = self {
            let uniform = matches!(eqm.descriptor, Descriptor::UniformDisk { .. } | Descriptor::UniformBall { .. });
            if uniform && self.supported_inside(eqm) {
                let d = eqm.dim();
                let area = sphere_area(d);
                let q = quad::integrate_pieces(
                    |r| area * Self::bump_profile(*inner, *outer, r).0 * r.powi(d as i32 - 1),
                    &[0.0, *inner, *outer],
                    1e-13,
                    1e-13,
                );
                let _ = center;
                return Ok(amplitude * eqm.density_sup() * q.value);
            }
        }
        if let Descriptor::Semicircle { edge } = eqm.descriptor {
            let (c, r) = self.support_ball();
            let mut breaks = vec![-edge, edge];
            for b in [c[0] - r, c[0] + r] {
                if b > -edge && b < edge {
                    breaks.push(b);
                }
            }
            if let Self::Polynomial1D { lo, hi, .. } = self {
                breaks.extend([*lo, *hi].iter().filter(|b| b.abs() < edge));
            }
            let q = quad::integrate_pieces(|x| self.value(&[x]) * eqm.density(&[x]), &breaks, 1e-13, 1e-13);
            return Ok(q.value);
        }
        Ok(eqm.integrate(|x| self.value(x), 1e-10)?.value)
    }
}

#[inline]
fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_measure, PotentialSpec};
    use crate::kernel::KernelSpec;
    use std::f64::consts::PI;

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert!((smoothstep(1.0) - 1.0).abs() < 1e-15);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for t in [0.1, 0.4, 0.77] {
            let fd = (smoothstep(t + h) - smoothstep(t - h)) / (2.0 * h);
            assert!((fd - smoothstep_deriv(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn bump_gradient_and_dirichlet() {
        let xi = TestFunction::radial_bump(vec![0.0, 0.0], 0.1, 0.5).unwrap();
        let h = 1e-6;
        for p in [[0.2, 0.1], [0.05, 0.3], [-0.3, -0.2]] {
            let g = xi.grad(&p);
            let fx = (xi.value(&[p[0] + h, p[1]]) - xi.value(&[p[0] - h, p[1]])) / (2.0 * h);
            let fy = (xi.value(&[p[0], p[1] + h]) - xi.value(&[p[0], p[1] - h])) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-7 && (g[1] - fy).abs() < 1e-7);
        }
        // Scaling: ξ -> 2ξ multiplies the Dirichlet integral by 4.
        let d1 = xi.dirichlet(2).unwrap();
        let d2 = xi.scaled(2.0).dirichlet(2).unwrap();
        assert!((d2 - 4.0 * d1).abs() < 1e-12 * d2);
        // Independent Cartesian midpoint check.
        let n = 800;
        let hh = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = [-0.5 + (i as f64 + 0.5) * hh, -0.5 + (j as f64 + 0.5) * hh];
                let g = xi.grad(&p);
                s += (g[0] * g[0] + g[1] * g[1]) * hh * hh;
            }
        }
        assert!((s - d1).abs() < 1e-4 * d1, "{s} vs {d1}");
    }

    #[test]
    fn integrals_against_measures() {
        let disk = equilibrium_measure(&PotentialSpec::quadratic(1.0).unwrap(), KernelSpec::log2()).unwrap();
        let xi = TestFunction::radial_bump(vec![0.0, 0.0], 0.2, 0.6).unwrap();
        let fast = xi.integral_against(&disk).unwrap();
        let slow = disk.integrate(|x| xi.value(x), 1e-10).unwrap().value;
        assert!((fast - slow).abs() < 1e-9);
        // ξ = |x|² with a cutoff beyond B₂: ∫ξ dμ = 1/2.
        let sq = TestFunction::custom(
            |x| x[0] * x[0] + x[1] * x[1],
            |x| vec![2.0 * x[0], 2.0 * x[1]],
            vec![0.0, 0.0],
            2.0,
        );
        assert!((sq.integral_against(&disk).unwrap() - 0.5).abs() < 1e-10);
        let semi = equilibrium_measure(&PotentialSpec::quadratic(0.5).unwrap(), KernelSpec::log1()).unwrap();
        let p = TestFunction::polynomial_1d(vec![0.0, 0.0, 1.0], -3.0, 3.0, 0.5).unwrap();
        assert!((p.integral_against(&semi).unwrap() - 1.0).abs() < 1e-12);
        let one = TestFunction::polynomial_1d(vec![1.0], -1.0, 1.0, 0.5).unwrap();
        let direct = quad::integrate_pieces(|x| one.value(&[x]) * semi.density(&[x]), &[-2.0, -1.5, -1.0, 1.0, 1.5, 2.0], 1e-13, 1e-13);
        assert!((one.integral_against(&semi).unwrap() - direct.value).abs() < 1e-12);
        let _ = PI;
    }
}
