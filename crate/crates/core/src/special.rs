//! Special functions and one-dimensional numerics used throughout the crate:
//! the standard normal distribution, adaptive Gauss-Kronrod quadrature, a
//! bracketed root finder and Brent's minimizer. Everything is generic over
//! [`Real`] so the copula code can run in `f32` as well as `f64`.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

// The erf/erfc rational approximations below are taken from FreeBSD's
// s_erf.c, carrying the following notice:
//
// ====================================================
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this
// software is freely granted, provided that this notice
// is preserved.
// ====================================================

const ERX: f64 = 8.45062911510467529297e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

/// Horner evaluation of `c[0] + z c[1] + z^2 c[2] + ...`.
#[inline]
fn poly<T: Real>(z: T, c: &[f64]) -> T {
    c.iter().rev().fold(T::zero(), |acc, &ci| acc * z + lit(ci))
}

/// `1 + z c[0] + z^2 c[1] + ...`
#[inline]
fn poly1<T: Real>(z: T, c: &[f64]) -> T {
    T::one() + z * poly(z, c)
}

/// erfc for |x| in [0.84375, 28).
fn erfc_tail<T: Real>(x: T) -> T {
    let ax = x.abs();
    if ax < lit(1.25) {
        let s = ax - T::one();
        let p = poly(s, &PA);
        let q = poly1(s, &QA);
        return T::one() - lit(ERX) - p / q;
    }
    let s = T::one() / (ax * ax);
    let (r, big_s) = if ax < lit(1.0 / 0.35) {
        (poly(s, &RA), poly1(s, &SA))
    } else {
        (poly(s, &RB), poly1(s, &SB))
    };
    // Split x so that z*z is exact; the correction term recovers the rest.
    let z: T = lit(to_f64(ax) as f32 as f64);
    (-z * z - lit(0.5625)).exp() * ((z - ax) * (z + ax) + r / big_s).exp() / ax
}

/// Error function.
pub fn erf<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax < lit(0.84375) {
        if ax < lit(3.725_290_298_461_914e-9) {
            return lit::<T>(0.125) * (lit::<T>(8.0) * x + lit::<T>(EFX8) * x);
        }
        let z = x * x;
        let y = poly(z, &PP) / poly1(z, &QQ);
        return x + x * y;
    }
    let y = if ax < lit(6.0) {
        T::one() - erfc_tail(ax)
    } else {
        T::one()
    };
    if x < T::zero() {
        -y
    } else {
        y
    }
}

/// Complementary error function, accurate in the far right tail.
pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax < lit(0.84375) {
        let z = x * x;
        let y = poly(z, &PP) / poly1(z, &QQ);
        if x < lit(0.25) {
            return T::one() - (x + x * y);
        }
        return lit::<T>(0.5) - (x - lit(0.5) + x * y);
    }
    if ax < lit(28.0) {
        let t = erfc_tail(ax);
        return if x < T::zero() { lit::<T>(2.0) - t } else { t };
    }
    if x < T::zero() {
        lit(2.0)
    } else {
        T::zero()
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Real>(x: T) -> T {
    (-(x * x) / lit(2.0)).exp() / (T::TAU()).sqrt()
}

/// Standard normal CDF, Φ(x).
#[inline]
pub fn norm_cdf<T: Real>(x: T) -> T {
    lit::<T>(0.5) * erfc(-x / T::SQRT_2())
}

/// Standard normal quantile, Φ⁻¹(p), for p in (0, 1).
///
/// Acklam's rational approximation followed by one Halley step against
/// [`norm_cdf`], which brings the result to full working precision.
pub fn norm_quantile<T: Real>(p: T) -> T {
    if p.is_nan() || p <= T::zero() {
        return if p == T::zero() { T::neg_infinity() } else { T::nan() };
    }
    if p >= T::one() {
        return if p == T::one() { T::infinity() } else { T::nan() };
    }
    if p > lit(0.5) {
        return -norm_quantile(T::one() - p);
    }
    let x = acklam_lower(p);
    // Halley refinement; the lower tail keeps Φ(x) - p free of cancellation.
    let e = norm_cdf(x) - p;
    let u = e * T::TAU().sqrt() * (x * x / lit(2.0)).exp();
    x - u / (T::one() + x * u / lit(2.0))
}

fn acklam_lower<T: Real>(p: T) -> T {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let horner = |z: T, c: &[f64]| c.iter().fold(T::zero(), |acc, &ci| acc * z + lit(ci));
    if p < lit(0.02425) {
        let q = (lit::<T>(-2.0) * p.ln()).sqrt();
        horner(q, &C) / (horner(q, &D) * q + T::one())
    } else {
        let q = p - lit(0.5);
        let r = q * q;
        horner(r, &A) * q / (horner(r, &B) * r + T::one())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel; returns (integral, error estimate).
fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let center = (a + b) / lit(2.0);
    let half = (b - a) / lit(2.0);
    let fc = f(center);
    let mut kronrod = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `tol` or 2000 panels are in use. The integrand is
/// never evaluated at the endpoints.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> T {
    let mut panels = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..2000 {
        let total_err: T = panels.iter().map(|p| p.3).sum();
        if total_err <= tol {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| {
                if p.3 > be {
                    (i, p.3)
                } else {
                    (bi, be)
                }
            });
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = (lo + hi) / lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    panels.iter().map(|p| p.2).sum()
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for nondecreasing `f`.
///
/// `df`, when given, is the derivative and enables safeguarded Newton steps;
/// otherwise plain bisection with secant acceleration is used. Converges when
/// the residual falls under `ftol` or the bracket collapses.
pub fn solve_increasing<T, F, D>(
    f: F,
    df: Option<D>,
    target: T,
    mut lo: T,
    mut hi: T,
    ftol: T,
    context: &str,
) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
    D: Fn(T) -> T,
{
    const MAX_ITER: usize = 200;
    let mut flo = f(lo) - target;
    let mut fhi = f(hi) - target;
    if flo >= T::zero() {
        return Ok(lo);
    }
    if fhi <= T::zero() {
        return Ok(hi);
    }
    let mut x = lo - flo * (hi - lo) / (fhi - flo);
    if !(x > lo && x < hi) {
        x = (lo + hi) / lit(2.0);
    }
    let mut last = T::infinity();
    for _ in 0..MAX_ITER {
        let fx = f(x) - target;
        last = fx;
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if fx < T::zero() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        if hi - lo <= T::epsilon() * (lo.abs() + hi.abs()) {
            return Ok(if flo.abs() <= fhi.abs() { lo } else { hi });
        }
        let mut next = T::nan();
        if let Some(d) = df.as_ref() {
            let slope = d(x);
            if slope > T::zero() && slope.is_finite() {
                next = x - fx / slope;
            }
        } else {
            next = lo - flo * (hi - lo) / (fhi - flo);
        }
        // fall back to bisection when the step leaves the bracket or stalls
        let width = hi - lo;
        if !(next > lo && next < hi)
            || (next - lo).min(hi - next) < width * lit(1e-3)
        {
            next = (lo + hi) / lit(2.0);
        }
        x = next;
    }
    Err(Error::Numerical {
        context: context.to_string(),
        iterations: MAX_ITER,
        residual: to_f64(last),
    })
}

/// Brent's derivative-free minimizer on `[a, b]`.
///
/// Returns `(argmin, min)`. Stops when the bracket is within `tol` (relative
/// plus absolute) of the current best point or after `max_iter` iterations.
pub fn brent_min<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T, max_iter: usize) -> (T, T) {
    let golden: T = lit(0.381_966_011_250_105_1);
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    let two: T = lit(2.0);
    let half: T = lit(0.5);
    for _ in 0..max_iter {
        let xm = half * (a + b);
        let tol1 = tol * x.abs() + tol;
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (half * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
