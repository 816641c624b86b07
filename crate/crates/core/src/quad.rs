//! One-dimensional quadrature and a few special functions.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// An integral together with its estimated absolute error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for Quad {
    type Output = Quad;
    fn add(self, o: Quad) -> Quad {
        Quad {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

impl std::iter::Sum for Quad {
    fn sum<I: Iterator<Item = Quad>>(iter: I) -> Quad {
        iter.fold(Quad::default(), |a, b| a + b)
    }
}

impl Quad {
    pub fn scale(self, s: f64) -> Quad {
        Quad {
            value: self.value * s,
            error: self.error * s.abs(),
        }
    }
}

/// One 15-point Kronrod panel; the error is `|K15 - G7|`.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Quad {
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

const MAX_PANELS: usize = 2000;

/// Globally adaptive Gauss–Kronrod on `[a, b]`, bisecting the worst panel until
/// the summed error is below `max(abs_tol, rel_tol |I|)` or the panel budget runs out.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    if a == b {
        return Quad::default();
    }
    let mut panels: Vec<(f64, f64, Quad)> = vec![(a, b, gk15(&mut f, a, b))];
    loop {
        let total: Quad = panels.iter().map(|p| p.2).sum();
        if total.error <= abs_tol.max(rel_tol * total.value.abs()) || panels.len() >= MAX_PANELS {
            return total;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty");
        let (lo, hi, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Panel can no longer be split in floating point.
            return total;
        }
        panels.push((lo, mid, gk15(&mut f, lo, mid)));
        panels.push((mid, hi, gk15(&mut f, mid, hi)));
    }
}

/// Adaptive integration over consecutive pieces `[b_0, b_1], [b_1, b_2], ...`.
/// Breakpoints are sorted and deduplicated first.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Quad {
    let mut b: Vec<f64> = breaks.iter().copied().filter(|v| v.is_finite()).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    let pieces = b.len().saturating_sub(1).max(1) as f64;
    b.windows(2)
        .map(|w| integrate(&mut f, w[0], w[1], abs_tol / pieces, rel_tol))
        .sum()
}

/// Like [`integrate`] but fails with [`Error::Tolerance`] when the target is not met.
pub fn integrate_checked<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, what: &str) -> Result<Quad> {
    let q = integrate(f, a, b, abs_tol, rel_tol);
    let target = abs_tol.max(rel_tol * q.value.abs());
    if !q.value.is_finite() || q.error > target {
        return Err(Error::Tolerance {
            what: what.to_string(),
            achieved: q.error,
            requested: target,
        });
    }
    Ok(q)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Exponential integral `E_1(x)` for `x > 0`.
pub fn expint_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Kahan–Babuška compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gk_polynomials_and_smooth() {
        let q = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 1e-14, 1e-14);
        assert!((q.value - (255.0 / 8.0 - 9.0)).abs() < 1e-12);
        let q = integrate(|x| x.sin(), 0.0, PI, 1e-13, 1e-13);
        assert!((q.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gk_endpoint_singularity() {
        let q = integrate(|x| -x.ln(), 0.0, 1.0, 1e-11, 1e-11);
        assert!((q.value - 1.0).abs() < 1e-9, "{}", q.value);
        let q = integrate(|x| (1.0 - x * x).sqrt(), -1.0, 1.0, 1e-12, 1e-12);
        assert!((q.value - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn pieces_with_kink() {
        let q = integrate_pieces(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0], 1e-14, 1e-14);
        assert!((q.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn checked_reports_failure() {
        let e = integrate_checked(|x: f64| 1.0 / x, 0.0, 1.0, 1e-10, 1e-10, "1/x");
        assert!(matches!(e, Err(Error::Tolerance { .. })));
    }

    #[test]
    fn legendre_rule_exactness() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn e1_against_quadrature() {
        for &x in &[1e-4, 0.1, 0.5, 1.0, 1.5, 4.0, 20.0] {
            // E1(x) = ∫_1^∞ e^{-xt}/t dt, via t = 1/u.
            let q = integrate(|u: f64| if u == 0.0 { 0.0 } else { (-x / u).exp() / u }, 0.0, 1.0, 1e-16, 1e-13);
            assert!((expint_e1(x) - q.value).abs() <= 1e-11 * q.value.max(1e-300), "x = {x}");
        }
        assert!((expint_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-15);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::default();
        k.add(1e16);
        for _ in 0..1000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1000.0);
    }
}
