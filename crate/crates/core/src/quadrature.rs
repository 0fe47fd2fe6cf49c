//! Ray profiles by quadrature.
//!
//! On the plus ray the profile solves
//! `-½ φ'' + (c0 y + kY) φ' = f(y, Y)`, `φ(0) = 0`, with at most logarithmic
//! growth, and has the double-integral form
//!
//! ```text
//! φ⁺(y; f) = 2 ∫₀^∞ dξ exp(-(c0 ξ² + 2kY ξ)) ∫_ξ^{ξ+y} f(ζ, Y) exp(-2 c0 ξ (ζ - ξ)) dζ.
//! ```
//!
//! The minus-ray profile is obtained through the point reflection:
//! `φ⁻(y; f) = φ⁺(-y; f̃)` with `f̃(ζ, Y) = f(-ζ, -Y)`.

use crate::error::{Error, Result};
use crate::model::{Functional, OscillatorParams, Region};

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

/// Exponent at which the Gaussian weight drops below 1e-16.
const WEIGHT_CUTOFF: f64 = 37.0;

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let (f1, f2) = (f(c - h * x), f(c + h * x));
        kronrod += w * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive 7/15-point Gauss–Kronrod on `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gauss_kronrod(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let (mut total, mut err) = (v, e);
    while err > tol {
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature {
                achieved: err,
                target: tol,
            });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .unwrap();
        let (lo, hi, pv, pe) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, hi);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        if !total.is_finite() {
            return Err(Error::NonFinite("quadrature"));
        }
    }
    // Re-sum to shed drift from the running updates.
    Ok(parts.iter().map(|p| p.2).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaySign {
    Plus,
    Minus,
}

impl RaySign {
    pub fn sign(self) -> f64 {
        match self {
            RaySign::Plus => 1.0,
            RaySign::Minus => -1.0,
        }
    }
}

fn xi_max(p: &OscillatorParams) -> f64 {
    let ky = p.k() * p.y_bound();
    ((ky * ky + WEIGHT_CUTOFF * p.c0()).sqrt() - ky) / p.c0()
}

/// `f` along the plus ray, or the reflected minus-ray data.
fn ray_data(f: &Functional, sign: RaySign, yb: f64) -> impl Fn(f64) -> f64 + '_ {
    move |zeta| match sign {
        RaySign::Plus => f.eval(zeta, yb, Region::PlusRay),
        RaySign::Minus => f.eval(-zeta, -yb, Region::MinusRay),
    }
}

fn check_side(sign: RaySign, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::invalid("y", "must be finite"));
    }
    let s = sign.sign() * y;
    if s < 0.0 {
        return Err(Error::invalid(
            "y",
            format!("{y} is on the wrong side for the {sign:?} ray"),
        ));
    }
    Ok(s)
}

/// Ray profile φ±(y; f) by nested adaptive quadrature to absolute
/// tolerance `1e-9`.
pub fn phi_ray(params: &OscillatorParams, f: &Functional, sign: RaySign, y: f64) -> Result<f64> {
    phi_ray_tol(params, f, sign, y, 1e-9)
}

pub fn phi_ray_tol(params: &OscillatorParams, f: &Functional, sign: RaySign, y: f64, tol: f64) -> Result<f64> {
    let s = check_side(sign, y)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let (c0, ky) = (params.c0(), params.k() * params.y_bound());
    let data = ray_data(f, sign, params.y_bound());
    let xmax = xi_max(params);
    let outer_tol = 0.5 * tol;
    let inner_tol = 0.25 * tol / (2.0 * xmax).max(1.0);
    let mut failure = None;
    let value = integrate(
        |xi| {
            let w = (-(c0 * xi * xi + 2.0 * ky * xi)).exp();
            // Past this length the inner weight is below exp(-37).
            let reach = if xi > 0.0 {
                s.min(WEIGHT_CUTOFF / (2.0 * c0 * xi))
            } else {
                s
            };
            let inner = integrate(
                |zeta| data(zeta) * (-2.0 * c0 * xi * (zeta - xi)).exp(),
                xi,
                xi + reach,
                inner_tol,
            );
            match inner {
                Ok(v) => 2.0 * w * v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        xmax,
        outer_tol,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// φ⁺(y; 1) from its single-integral form
/// `∫₀^∞ exp(-(c0 ξ² + 2kY ξ)) (1 - exp(-2 c0 y ξ)) / (c0 ξ) dξ`,
/// absolute tolerance `1e-10`.
pub fn phi_unit(params: &OscillatorParams, y: f64) -> Result<f64> {
    let s = check_side(RaySign::Plus, y)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let (c0, ky) = (params.c0(), params.k() * params.y_bound());
    integrate(
        |xi| {
            let w = (-(c0 * xi * xi + 2.0 * ky * xi)).exp();
            w * -(-2.0 * c0 * s * xi).exp_m1() / (c0 * xi)
        },
        0.0,
        xi_max(params),
        5e-11,
    )
}

/// Upper bound `(1/c0) log((c0 y + kY)/(kY))` on φ⁺(y; 1).
pub fn phi_unit_log_bound(params: &OscillatorParams, y: f64) -> f64 {
    let ky = params.k() * params.y_bound();
    ((params.c0() * y + ky) / ky).ln() / params.c0()
}

/// One-sided derivatives `(φ'(0), φ''(0))` of the ray profile at the
/// junction, taken along y (so for the minus ray the first derivative is
/// with respect to y, not -y).
pub fn phi_junction_derivatives(params: &OscillatorParams, f: &Functional, sign: RaySign) -> Result<(f64, f64)> {
    let (c0, ky) = (params.c0(), params.k() * params.y_bound());
    let data = ray_data(f, sign, params.y_bound());
    let d1 = 2.0
        * integrate(
            |xi| (-(c0 * xi * xi + 2.0 * ky * xi)).exp() * data(xi),
            0.0,
            xi_max(params),
            1e-12,
        )?;
    let d2 = 2.0 * (ky * d1 - data(0.0));
    Ok((sign.sign() * d1, d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalogue;

    #[test]
    fn integrates_polynomials_and_gaussians() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let g = integrate(|x| (-x * x).exp(), 0.0, 8.0, 1e-13).unwrap();
        assert!((g - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn zero_at_the_junction() {
        let p = OscillatorParams::default();
        let f = catalogue("y2", &p, 6.0).unwrap();
        assert_eq!(phi_ray(&p, &f, RaySign::Plus, 0.0).unwrap(), 0.0);
        assert_eq!(phi_ray(&p, &f, RaySign::Minus, 0.0).unwrap(), 0.0);
        assert_eq!(phi_unit(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn wrong_side_is_rejected() {
        let p = OscillatorParams::default();
        let f = Functional::one();
        assert!(phi_ray(&p, &f, RaySign::Plus, -0.5).is_err());
        assert!(phi_ray(&p, &f, RaySign::Minus, 0.5).is_err());
        assert!(phi_unit(&p, -1.0).is_err());
    }

    #[test]
    fn two_formulas_agree() {
        let p = OscillatorParams::new(0.7, 1.4, 0.8).unwrap();
        let one = Functional::one();
        for y in [0.01, 0.3, 1.0, 4.0, 25.0] {
            let a = phi_unit(&p, y).unwrap();
            let b = phi_ray(&p, &one, RaySign::Plus, y).unwrap();
            assert!((a - b).abs() < 2e-9, "y={y}: {a} vs {b}");
            assert!(a <= phi_unit_log_bound(&p, y));
        }
    }

    #[test]
    fn minus_ray_mirrors_plus_ray() {
        let p = OscillatorParams::default();
        let one = Functional::one();
        let a = phi_ray(&p, &one, RaySign::Minus, -1.3).unwrap();
        let b = phi_ray(&p, &one, RaySign::Plus, 1.3).unwrap();
        assert!((a - b).abs() < 1e-12);
        // Antisymmetric data gives opposite profiles.
        let y = catalogue("y", &p, 6.0).unwrap();
        let a = phi_ray(&p, &y, RaySign::Minus, -0.8).unwrap();
        let b = phi_ray(&p, &y, RaySign::Plus, 0.8).unwrap();
        assert!((a + b).abs() < 1e-10);
        assert!(b > 0.0);
    }

    #[test]
    fn junction_slope_matches_difference_quotient() {
        let p = OscillatorParams::default();
        let f = catalogue("y_plus_y2", &p, 6.0).unwrap();
        let (d1, d2) = phi_junction_derivatives(&p, &f, RaySign::Plus).unwrap();
        let h = 1e-3;
        let a = phi_ray_tol(&p, &f, RaySign::Plus, h, 1e-13).unwrap();
        let b = phi_ray_tol(&p, &f, RaySign::Plus, 2.0 * h, 1e-13).unwrap();
        // Taylor: phi(h) = d1 h + d2 h^2/2 + O(h^3).
        let d1_fd = (4.0 * a - b) / (2.0 * h);
        let d2_fd = (b - 2.0 * a) / (h * h);
        assert!((d1 - d1_fd).abs() < 1e-5, "{d1} vs {d1_fd}");
        assert!((d2 - d2_fd).abs() < 1e-2, "{d2} vs {d2_fd}");
        let (m1, m2) = phi_junction_derivatives(&p, &Functional::one(), RaySign::Minus).unwrap();
        let (p1, p2) = phi_junction_derivatives(&p, &Functional::one(), RaySign::Plus).unwrap();
        assert_eq!((m1, m2), (-p1, p2));
    }
}
