//! Interaction kernels `g`, the Coulomb constant `c_d`, and the truncation `f_η`.
//!
//! Conventions:
//!
//! * `Log1`: `g(x) = -log|x|` in dimension 1 (its electric representation lives
//!   in the plane, so gradients accept 1- or 2-component points),
//! * `Log2`: `g(x) = -log|x|` in dimension 2,
//! * `Coul`: `g(x) = |x|^{2-d}` in dimension `d >= 3`,
//! * `Riesz`: `g(x) = |x|^{-s}` with `max(0, d-2) <= s < d`.
//!
//! The exponent `s` is zero for the logarithmic cases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelCase {
    Log1,
    Log2,
    Coul,
    Riesz,
}

/// A validated interaction kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct KernelSpec {
    case: KernelCase,
    d: usize,
    s: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    case: KernelCase,
    #[serde(default)]
    d: Option<usize>,
    #[serde(default)]
    s: Option<f64>,
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let d = match (raw.case, raw.d) {
            (KernelCase::Log1, None) => 1,
            (KernelCase::Log2, None) => 2,
            (_, Some(d)) => d,
            (case, None) => {
                return Err(Error::Domain(format!("kernel {case:?} needs an explicit dimension d")))
            }
        };
        let s = match (raw.case, raw.s) {
            (KernelCase::Coul, None) => d as f64 - 2.0,
            (KernelCase::Log1 | KernelCase::Log2, None) => 0.0,
            (_, Some(s)) => s,
            (KernelCase::Riesz, None) => {
                return Err(Error::Domain("Riesz kernel needs an explicit exponent s".into()))
            }
        };
        KernelSpec::new(raw.case, d, s)
    }
}

impl From<KernelSpec> for RawKernel {
    fn from(k: KernelSpec) -> Self {
        RawKernel {
            case: k.case,
            d: Some(k.d),
            s: Some(k.s),
        }
    }
}

/// How `f_η` treats the origin, where `g` is infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OriginPolicy {
    Error,
    Infinite,
}

impl KernelSpec {
    pub fn new(case: KernelCase, d: usize, s: f64) -> Result<Self> {
        let ok = match case {
            KernelCase::Log1 => d == 1 && s == 0.0,
            KernelCase::Log2 => d == 2 && s == 0.0,
            KernelCase::Coul => d >= 3 && s == d as f64 - 2.0,
            // s = 0 would make g constant; the logarithmic cases cover that limit.
            KernelCase::Riesz => d >= 1 && s > 0.0 && s >= (d as f64 - 2.0).max(0.0) && s < d as f64,
        };
        if !ok {
            return Err(Error::Domain(format!(
                "invalid kernel: case {case:?} with d = {d}, s = {s}"
            )));
        }
        Ok(Self { case, d, s })
    }

    pub fn log1() -> Self {
        Self { case: KernelCase::Log1, d: 1, s: 0.0 }
    }

    pub fn log2() -> Self {
        Self { case: KernelCase::Log2, d: 2, s: 0.0 }
    }

    pub fn coulomb(d: usize) -> Result<Self> {
        Self::new(KernelCase::Coul, d, d as f64 - 2.0)
    }

    pub fn riesz(d: usize, s: f64) -> Result<Self> {
        Self::new(KernelCase::Riesz, d, s)
    }

    pub fn case(&self) -> KernelCase {
        self.case
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn is_log(&self) -> bool {
        matches!(self.case, KernelCase::Log1 | KernelCase::Log2)
    }

    /// Whether the energy admits a local electric-field representation
    /// (Coulomb kernel in `d` or, for `Log1`, in the extended plane).
    pub fn has_local_electric_rep(&self) -> bool {
        !matches!(self.case, KernelCase::Riesz)
    }

    /// Dimension of the space the electric field lives in.
    pub fn field_dim(&self) -> usize {
        match self.case {
            KernelCase::Log1 => 2,
            _ => self.d,
        }
    }

    /// `c_d` of the field space: `2π` for both log cases.
    pub fn field_cd(&self) -> Result<f64> {
        if !self.has_local_electric_rep() {
            return Err(Error::Capability("Riesz kernels have no electric representation".into()));
        }
        cd_const(self.field_dim())
    }

    /// `g(r)` for `r > 0`.
    pub fn g(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("negative or NaN distance {r}")));
        }
        if r == 0.0 {
            return Err(Error::Singularity("g evaluated at r = 0".into()));
        }
        Ok(self.g_unchecked(r))
    }

    #[inline]
    pub fn g_unchecked(&self, r: f64) -> f64 {
        match self.case {
            KernelCase::Log1 | KernelCase::Log2 => -r.ln(),
            KernelCase::Coul if self.d == 3 => 1.0 / r,
            _ => r.powf(-self.s),
        }
    }

    /// `g` as a function of the squared distance; the hot path of all pair sums.
    #[inline]
    pub fn g_r2(&self, r2: f64) -> f64 {
        match self.case {
            KernelCase::Log1 | KernelCase::Log2 => -0.5 * r2.ln(),
            KernelCase::Coul if self.d == 3 => 1.0 / r2.sqrt(),
            _ => r2.powf(-0.5 * self.s),
        }
    }

    /// Radial derivative `g'(r)`.
    #[inline]
    pub fn dg_dr(&self, r: f64) -> f64 {
        match self.case {
            KernelCase::Log1 | KernelCase::Log2 => -1.0 / r,
            _ => -self.s * r.powf(-self.s - 1.0),
        }
    }

    /// Exact gradient of `g` at `x`. `Log1` also accepts points of the extended plane.
    pub fn g_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ok_len = match self.case {
            KernelCase::Log1 => x.len() == 1 || x.len() == 2,
            _ => x.len() == self.d,
        };
        if !ok_len {
            return Err(Error::Domain(format!(
                "point of dimension {} for kernel {:?} (d = {})",
                x.len(),
                self.case,
                self.d
            )));
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return Err(Error::Singularity("gradient of g at the origin".into()));
        }
        let mut out = vec![0.0; x.len()];
        self.add_grad_r2(x, r2, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * ∇g(x)` given `r2 = |x|^2 > 0`.
    #[inline]
    pub fn add_grad_r2(&self, x: &[f64], r2: f64, scale: f64, out: &mut [f64]) {
        // ∇g = g'(r) x / r
        let factor = match self.case {
            KernelCase::Log1 | KernelCase::Log2 => -1.0 / r2,
            KernelCase::Coul if self.d == 3 => -1.0 / (r2 * r2.sqrt()),
            _ => -self.s * r2.powf(-0.5 * self.s - 1.0),
        };
        for (o, xi) in out.iter_mut().zip(x) {
            *o += scale * factor * xi;
        }
    }

    /// The truncation `f_η(x) = (g(x) - g(η))_+`, supported in `B(0, η)`.
    pub fn f_eta(&self, x: &[f64], eta: f64, origin: OriginPolicy) -> Result<f64> {
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("truncation radius must be positive, got {eta}")));
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return match origin {
                OriginPolicy::Error => Err(Error::Singularity("f_eta at the origin".into())),
                OriginPolicy::Infinite => Ok(f64::INFINITY),
            };
        }
        Ok(self.f_eta_radial(r, eta))
    }

    #[inline]
    pub fn f_eta_radial(&self, r: f64, eta: f64) -> f64 {
        if r >= eta {
            0.0
        } else {
            (self.g_unchecked(r) - self.g_unchecked(eta)).max(0.0)
        }
    }
}

/// Surface area `|S^{n-1}|` of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    // |S^0| = 2, |S^1| = 2π, |S^{n+1}| = 2π |S^{n-1}| / n
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        sphere_area(n) / n as f64
    }
}

/// The constant in `-Δg = c_d δ_0`: `2π` for `d = 2`, `(d-2)|S^{d-1}|` above.
pub fn cd_const(d: usize) -> Result<f64> {
    match d {
        0 | 1 => Err(Error::Domain(format!(
            "c_d is defined for d >= 2 (Coulombic kernels), got d = {d}"
        ))),
        2 => Ok(2.0 * PI),
        _ => Ok((d as f64 - 2.0) * sphere_area(d)),
    }
}
