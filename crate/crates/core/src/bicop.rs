//! One-parameter bivariate copulas used as pair-copulas in the D-vine.
//!
//! Conventions: `h1(u, v) = C(u | v) = ∂C(u, v)/∂v` and
//! `h2(u, v) = C(v | u) = ∂C(u, v)/∂u`. The inverses solve for the free
//! argument: `hinv1(p, v)` returns `u` with `h1(u, v) = p`, `hinv2(p, u)`
//! returns `v` with `h2(u, v) = p`.
//!
//! Rotations follow the usual vine-copula convention and are only defined
//! for the asymmetric families (Clayton, Gumbel, Joe): 180° is the survival
//! copula, 90° and 270° reflect one argument and produce negative dependence.
//! The stored parameter is always that of the unrotated family.
//!
//! All copula-scale inputs are clamped into `[eps, 1 - eps]` first
//! (`eps = 1e-10` in `f64`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::kendall_tau;
use crate::scalar::{clamp_unit, lit, log_add_exp, to_f64, Real};
use crate::special::{brent_min, integrate, norm_cdf, norm_quantile, solve_increasing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CopulaFamily {
    Independence,
    Gaussian,
    Clayton,
    Gumbel,
    Frank,
    Joe,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 6] = [
        CopulaFamily::Independence,
        CopulaFamily::Gaussian,
        CopulaFamily::Clayton,
        CopulaFamily::Gumbel,
        CopulaFamily::Frank,
        CopulaFamily::Joe,
    ];

    pub fn n_params(self) -> usize {
        match self {
            CopulaFamily::Independence => 0,
            _ => 1,
        }
    }

    /// Families that admit 90/180/270 degree rotations.
    pub fn rotatable(self) -> bool {
        matches!(
            self,
            CopulaFamily::Clayton | CopulaFamily::Gumbel | CopulaFamily::Joe
        )
    }

    /// Parameter interval searched during fitting.
    fn fit_bounds(self) -> (f64, f64) {
        match self {
            CopulaFamily::Independence => (0.0, 0.0),
            CopulaFamily::Gaussian => (-0.9999, 0.9999),
            CopulaFamily::Clayton => (1e-4, 40.0),
            CopulaFamily::Gumbel | CopulaFamily::Joe => (1.0 + 1e-4, 30.0),
            CopulaFamily::Frank => (-80.0, 80.0),
        }
    }

    fn domain_text(self) -> &'static str {
        match self {
            CopulaFamily::Independence => "no parameter",
            CopulaFamily::Gaussian => "(-1, 1)",
            CopulaFamily::Clayton => "(0, inf)",
            CopulaFamily::Gumbel => "[1, inf)",
            CopulaFamily::Frank => "R \\ {0}",
            CopulaFamily::Joe => "(1, inf)",
        }
    }

    fn contains<T: Real>(self, theta: T) -> bool {
        if !theta.is_finite() {
            return false;
        }
        match self {
            CopulaFamily::Independence => theta == T::zero(),
            CopulaFamily::Gaussian => theta > -T::one() && theta < T::one(),
            CopulaFamily::Clayton => theta > T::zero(),
            CopulaFamily::Gumbel => theta >= T::one(),
            CopulaFamily::Frank => theta != T::zero(),
            CopulaFamily::Joe => theta > T::one(),
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        CopulaFamily::ALL
            .into_iter()
            .find(|f| f.to_string().to_ascii_lowercase() == t)
            .or(match t.as_str() {
                "indep" | "i" => Some(CopulaFamily::Independence),
                "normal" | "n" => Some(CopulaFamily::Gaussian),
                _ => None,
            })
            .ok_or_else(|| Error::Input(format!("unknown copula family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    /// 90 and 270 degrees flip the sign of Kendall's tau.
    pub fn flips_sign(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

impl TryFrom<u16> for Rotation {
    type Error = String;

    fn try_from(d: u16) -> std::result::Result<Self, String> {
        match d {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(format!("rotation must be 0, 90, 180 or 270, got {other}")),
        }
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

/// Which argument an h-function conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// `C(u | v) = ∂C/∂v`, the first variable given the second.
    OnSecond,
    /// `C(v | u) = ∂C/∂u`, the second variable given the first.
    OnFirst,
}

/// A parametric pair-copula: family, rotation and dependence parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateCopula<T> {
    family: CopulaFamily,
    rotation: Rotation,
    parameter: T,
}

impl<T: Real> BivariateCopula<T> {
    pub fn new(family: CopulaFamily, rotation: Rotation, parameter: T) -> Result<Self> {
        if rotation != Rotation::R0 && !family.rotatable() {
            return Err(Error::Input(format!(
                "{family} does not admit rotation {rotation}"
            )));
        }
        if !family.contains(parameter) {
            return Err(Error::Domain(format!(
                "parameter {parameter} outside the {family} domain {}",
                family.domain_text()
            )));
        }
        Ok(Self {
            family,
            rotation,
            parameter,
        })
    }

    pub fn independence() -> Self {
        Self {
            family: CopulaFamily::Independence,
            rotation: Rotation::R0,
            parameter: T::zero(),
        }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn parameter(&self) -> T {
        self.parameter
    }

    /// Short label such as `Clayton180`.
    pub fn label(&self) -> String {
        if self.family.rotatable() {
            format!("{}{}", self.family, self.rotation)
        } else {
            self.family.to_string()
        }
    }

    /// Copula density; errors on NaN arguments.
    pub fn density(&self, u: T, v: T) -> Result<T> {
        check_args(u, v)?;
        Ok(self.pdf(u, v))
    }

    /// h-function selected by `which`; errors on NaN arguments.
    pub fn hfunc(&self, which: Conditioning, u: T, v: T) -> Result<T> {
        check_args(u, v)?;
        Ok(match which {
            Conditioning::OnSecond => self.h1(u, v),
            Conditioning::OnFirst => self.h2(u, v),
        })
    }

    /// Inverse of [`hfunc`](Self::hfunc) in its free argument, given the
    /// conditioning value `given`.
    pub fn hinv(&self, which: Conditioning, p: T, given: T) -> Result<T> {
        check_args(p, given)?;
        match which {
            Conditioning::OnSecond => self.hinv1(p, given),
            Conditioning::OnFirst => self.hinv2(p, given),
        }
    }

    pub fn pdf(&self, u: T, v: T) -> T {
        self.log_pdf(u, v).exp()
    }

    pub fn log_pdf(&self, u: T, v: T) -> T {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let one = T::one();
        let (a, b) = match self.rotation {
            Rotation::R0 => (u, v),
            Rotation::R90 => (one - u, v),
            Rotation::R180 => (one - u, one - v),
            Rotation::R270 => (u, one - v),
        };
        base_log_pdf(self.family, self.parameter, a, b)
    }

    /// `C(u | v)`.
    pub fn h1(&self, u: T, v: T) -> T {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let one = T::one();
        let f = self.family;
        let th = self.parameter;
        let h = match self.rotation {
            Rotation::R0 => base_h(f, th, u, v),
            Rotation::R90 => one - base_h(f, th, one - u, v),
            Rotation::R180 => one - base_h(f, th, one - u, one - v),
            Rotation::R270 => base_h(f, th, u, one - v),
        };
        unit_interval(h)
    }

    /// `C(v | u)`.
    pub fn h2(&self, u: T, v: T) -> T {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let one = T::one();
        let f = self.family;
        let th = self.parameter;
        let h = match self.rotation {
            Rotation::R0 => base_h(f, th, v, u),
            Rotation::R90 => base_h(f, th, v, one - u),
            Rotation::R180 => one - base_h(f, th, one - v, one - u),
            Rotation::R270 => one - base_h(f, th, one - v, u),
        };
        unit_interval(h)
    }

    /// `u` such that `h1(u, v) = p`.
    pub fn hinv1(&self, p: T, v: T) -> Result<T> {
        let (p, v) = (clamp_unit(p), clamp_unit(v));
        let one = T::one();
        let f = self.family;
        let th = self.parameter;
        Ok(match self.rotation {
            Rotation::R0 => base_hinv(f, th, p, v)?,
            Rotation::R90 => one - base_hinv(f, th, one - p, v)?,
            Rotation::R180 => one - base_hinv(f, th, one - p, one - v)?,
            Rotation::R270 => base_hinv(f, th, p, one - v)?,
        })
    }

    /// `v` such that `h2(u, v) = p`.
    pub fn hinv2(&self, p: T, u: T) -> Result<T> {
        let (p, u) = (clamp_unit(p), clamp_unit(u));
        let one = T::one();
        let f = self.family;
        let th = self.parameter;
        Ok(match self.rotation {
            Rotation::R0 => base_hinv(f, th, p, u)?,
            Rotation::R90 => base_hinv(f, th, p, one - u)?,
            Rotation::R180 => one - base_hinv(f, th, one - p, one - u)?,
            Rotation::R270 => one - base_hinv(f, th, one - p, u)?,
        })
    }

    /// Kendall's tau implied by the parameter and rotation.
    pub fn tau(&self) -> T {
        param_to_tau(self)
    }

    /// Sum of log-densities over paired observations.
    pub fn loglik(&self, u: &[T], v: &[T]) -> T {
        u.iter().zip(v).map(|(&a, &b)| self.log_pdf(a, b)).sum()
    }
}

fn check_args<T: Real>(u: T, v: T) -> Result<()> {
    if u.is_nan() || v.is_nan() {
        return Err(Error::Input("copula argument is NaN".into()));
    }
    Ok(())
}

#[inline]
fn unit_interval<T: Real>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

// Unrotated families. All of them are exchangeable, so one h-function
// `base_h(u, v) = ∂C/∂v` covers both conditionings.

fn base_log_pdf<T: Real>(family: CopulaFamily, th: T, u: T, v: T) -> T {
    match family {
        CopulaFamily::Independence => T::zero(),
        CopulaFamily::Gaussian => {
            let (x, y) = (norm_quantile(u), norm_quantile(v));
            let s2 = T::one() - th * th;
            -s2.ln() / lit(2.0) - (th * th * (x * x + y * y) - lit::<T>(2.0) * th * x * y) / (lit::<T>(2.0) * s2)
        }
        CopulaFamily::Clayton => {
            let (lu, lv) = (u.ln(), v.ln());
            th.ln_1p() - (T::one() + th) * (lu + lv) - (lit::<T>(2.0) + th.recip()) * clayton_log_a(th, lu, lv)
        }
        CopulaFamily::Gumbel => {
            let (x, y) = (-u.ln(), -v.ln());
            let (lx, ly) = (x.ln(), y.ln());
            let ls = log_add_exp(th * lx, th * ly);
            let a = (ls / th).exp();
            -a + x + y + (th - T::one()) * (lx + ly)
                + (lit::<T>(2.0) / th - lit(2.0)) * ls
                + ((th - T::one()) / a).ln_1p()
        }
        CopulaFamily::Frank => {
            if th < T::zero() {
                return base_log_pdf(family, -th, u, T::one() - v);
            }
            let em = -(-th).exp_m1();
            th.ln() + em.ln() - th * (u + v) - lit::<T>(2.0) * frank_denom(th, u, v).ln()
        }
        CopulaFamily::Joe => {
            let (lu, lv) = ((-u).ln_1p(), (-v).ln_1p());
            let ls = joe_log_s(th, lu, lv);
            (th.recip() - lit(2.0)) * ls + (th - T::one()) * (lu + lv) + (th - T::one() + ls.exp()).ln()
        }
    }
}

fn base_h<T: Real>(family: CopulaFamily, th: T, u: T, v: T) -> T {
    match family {
        CopulaFamily::Independence => u,
        CopulaFamily::Gaussian => {
            let (x, y) = (norm_quantile(u), norm_quantile(v));
            norm_cdf((x - th * y) / (T::one() - th * th).sqrt())
        }
        CopulaFamily::Clayton => {
            let (lu, lv) = (u.ln(), v.ln());
            (-(th + T::one()) * lv - (T::one() + th.recip()) * clayton_log_a(th, lu, lv)).exp()
        }
        CopulaFamily::Gumbel => {
            let (x, y) = (-u.ln(), -v.ln());
            let ly = y.ln();
            let ls = log_add_exp(th * x.ln(), th * ly);
            let a = (ls / th).exp();
            (-a + (th.recip() - T::one()) * ls + (th - T::one()) * ly + y).exp()
        }
        CopulaFamily::Frank => {
            if th < T::zero() {
                return base_h(family, -th, u, T::one() - v);
            }
            let ev = (-th * v).exp();
            ev * (-(-th * u).exp_m1()) / frank_denom(th, u, v)
        }
        CopulaFamily::Joe => {
            let (lu, lv) = ((-u).ln_1p(), (-v).ln_1p());
            let ls = joe_log_s(th, lu, lv);
            ((th.recip() - T::one()) * ls + (th - T::one()) * lv).exp() * (-(th * lu).exp_m1())
        }
    }
}

fn base_hinv<T: Real>(family: CopulaFamily, th: T, p: T, v: T) -> Result<T> {
    match family {
        CopulaFamily::Independence => Ok(p),
        CopulaFamily::Gaussian => {
            let y = norm_quantile(v);
            Ok(clamp_unit(norm_cdf(norm_quantile(p) * (T::one() - th * th).sqrt() + th * y)))
        }
        CopulaFamily::Clayton => {
            // u^-θ = 1 + v^-θ (p^(-θ/(1+θ)) - 1)
            let c = -th / (T::one() + th) * p.ln();
            let l = -th * v.ln() + c.exp_m1().ln();
            let log_ut = if l > lit(30.0) {
                l + (-l).exp().ln_1p()
            } else {
                l.exp().ln_1p()
            };
            Ok(clamp_unit((-log_ut / th).exp()))
        }
        CopulaFamily::Frank => {
            if th < T::zero() {
                return base_hinv(family, -th, p, T::one() - v);
            }
            let ev = (-th * v).exp();
            let one = T::one();
            let den = ev * (one - p) + p;
            let r = p * (-(-th).exp_m1()) / den;
            let u = if r < lit(0.5) {
                -(-r).ln_1p() / th
            } else {
                -((ev * (one - p) + p * (-th).exp()) / den).ln() / th
            };
            Ok(clamp_unit(u))
        }
        CopulaFamily::Gumbel | CopulaFamily::Joe => {
            let eps = T::boundary_eps();
            // relative to the distance from the nearer end: later pair-copulas
            // in a vine can have very steep h-functions near 0 and 1
            let ftol = T::epsilon() * lit(8.0) * p.min(T::one() - p);
            solve_increasing(
                |u| base_h(family, th, u, v),
                Some(|u| base_log_pdf(family, th, u, v).exp()),
                p,
                eps,
                T::one() - eps,
                ftol,
                &format!("{family} inverse h-function (theta = {th}, p = {p}, v = {v})"),
            )
        }
    }
}

/// `ln(u^-θ + v^-θ - 1)` for Clayton, given `ln u` and `ln v`.
fn clayton_log_a<T: Real>(th: T, lu: T, lv: T) -> T {
    let (a, b) = (-th * lu, -th * lv);
    let m = a.max(b);
    if m < T::one() {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    } else {
        m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
    }
}

/// `(1 - e^-θ) - (1 - e^-θu)(1 - e^-θv)` for θ > 0, in a cancellation-free form.
fn frank_denom<T: Real>(th: T, u: T, v: T) -> T {
    if th < T::one() {
        let em = -(-th).exp_m1();
        em - (-th * u).exp_m1() * (-th * v).exp_m1()
    } else {
        let (eu, ev) = ((-th * u).exp(), (-th * v).exp());
        eu + ev - eu * ev - (-th).exp()
    }
}

/// `ln(ū^θ + v̄^θ - ū^θ v̄^θ)` for Joe, given `ln ū` and `ln v̄`.
fn joe_log_s<T: Real>(th: T, lu: T, lv: T) -> T {
    let a = (th * lu).exp();
    let b = (th * lv).exp();
    (a + b * (-(th * lu).exp_m1())).ln()
}

// Kendall's tau.

fn base_tau<T: Real>(family: CopulaFamily, th: T) -> T {
    match family {
        CopulaFamily::Independence => T::zero(),
        CopulaFamily::Gaussian => lit::<T>(2.0) / T::PI() * th.asin(),
        CopulaFamily::Clayton => th / (th + lit(2.0)),
        CopulaFamily::Gumbel => T::one() - th.recip(),
        CopulaFamily::Frank => {
            if th < T::zero() {
                -frank_tau(-th)
            } else {
                frank_tau(th)
            }
        }
        CopulaFamily::Joe => joe_tau(th),
    }
}

/// τ = 1 - 4/θ (1 - D₁(θ)) with the first Debye function D₁.
fn frank_tau<T: Real>(th: T) -> T {
    if th < lit(1e-5) {
        return th / lit(9.0);
    }
    let integral = integrate(
        |t: T| t / t.exp_m1(),
        T::zero(),
        th,
        T::epsilon() * lit(16.0) * th,
    );
    let debye = integral / th;
    T::one() - lit::<T>(4.0) / th * (T::one() - debye)
}

/// τ = 1 + 4 ∫₀¹ φ(t)/φ'(t) dt with the Joe generator, written in s = 1 - t.
fn joe_tau<T: Real>(th: T) -> T {
    let integrand = |s: T| {
        let q = (th * s.ln()).exp();
        if q <= T::min_positive_value() {
            return -s / th;
        }
        s * (T::one() - q) * (-q).ln_1p() / (th * q)
    };
    let integral = integrate(integrand, T::zero(), T::one(), T::epsilon() * lit(16.0));
    T::one() + lit::<T>(4.0) * integral
}

/// Kendall's tau of a (possibly rotated) copula.
pub fn param_to_tau<T: Real>(c: &BivariateCopula<T>) -> T {
    let t = base_tau(c.family, c.parameter);
    if c.rotation.flips_sign() {
        -t
    } else {
        t
    }
}

/// Closed-form or numerically inverted τ → parameter map.
pub fn tau_to_param<T: Real>(family: CopulaFamily, rotation: Rotation, tau: T) -> Result<T> {
    if rotation != Rotation::R0 && !family.rotatable() {
        return Err(Error::Input(format!(
            "{family} does not admit rotation {rotation}"
        )));
    }
    let base = if rotation.flips_sign() { -tau } else { tau };
    let range_err = |lo: T, hi: T, closed_lo: bool| {
        Error::Domain(format!(
            "Kendall's tau {tau} not attainable by {family} rotated {rotation}: base tau must lie in {}{lo}, {hi})",
            if closed_lo { "[" } else { "(" }
        ))
    };
    let one = T::one();
    match family {
        CopulaFamily::Independence => {
            if tau == T::zero() {
                Ok(T::zero())
            } else {
                Err(range_err(T::zero(), T::zero(), true))
            }
        }
        CopulaFamily::Gaussian => {
            if base > -one && base < one {
                Ok((T::FRAC_PI_2() * base).sin())
            } else {
                Err(range_err(-one, one, false))
            }
        }
        CopulaFamily::Clayton => {
            if base > T::zero() && base < one {
                Ok(lit::<T>(2.0) * base / (one - base))
            } else {
                Err(range_err(T::zero(), one, false))
            }
        }
        CopulaFamily::Gumbel => {
            if base >= T::zero() && base < one {
                Ok(one / (one - base))
            } else {
                Err(range_err(T::zero(), one, true))
            }
        }
        CopulaFamily::Frank => {
            let (_, hi) = family.fit_bounds();
            let hi: T = lit(hi);
            let tmax = frank_tau(hi);
            if base == T::zero() || base.abs() >= tmax {
                return Err(range_err(-tmax, tmax, false));
            }
            let th = solve_increasing(
                frank_tau,
                None::<fn(T) -> T>,
                base.abs(),
                lit(1e-6),
                hi,
                T::epsilon() * lit(8.0),
                "Frank tau inversion",
            )?;
            Ok(if base < T::zero() { -th } else { th })
        }
        CopulaFamily::Joe => {
            let hi: T = lit(family.fit_bounds().1);
            let tmax = joe_tau(hi);
            if base <= T::zero() || base >= tmax {
                return Err(range_err(T::zero(), tmax, false));
            }
            solve_increasing(
                joe_tau,
                None::<fn(T) -> T>,
                base,
                one + lit(1e-9),
                hi,
                T::epsilon() * lit(8.0),
                "Joe tau inversion",
            )
        }
    }
}

/// A pair-copula together with its fit statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "FittedRepr<T>", into = "FittedRepr<T>")]
pub struct FittedCopula<T: Real> {
    pub copula: BivariateCopula<T>,
    pub loglik: T,
    pub n: usize,
}

impl<T: Real> FittedCopula<T> {
    pub fn aic(&self) -> T {
        lit::<T>(-2.0) * self.loglik + lit((2 * self.copula.family.n_params()) as f64)
    }

    pub fn independence(n: usize) -> Self {
        Self {
            copula: BivariateCopula::independence(),
            loglik: T::zero(),
            n,
        }
    }
}

/// On-disk form: `{family, rotation, parameter, loglik, n}`; `parameter` is
/// null for Independence.
#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct FittedRepr<T> {
    family: CopulaFamily,
    rotation: Rotation,
    parameter: Option<T>,
    loglik: T,
    n: usize,
}

impl<T: Real> From<FittedCopula<T>> for FittedRepr<T> {
    fn from(f: FittedCopula<T>) -> Self {
        let c = f.copula;
        Self {
            family: c.family,
            rotation: c.rotation,
            parameter: (c.family != CopulaFamily::Independence).then_some(c.parameter),
            loglik: f.loglik,
            n: f.n,
        }
    }
}

impl<T: Real> TryFrom<FittedRepr<T>> for FittedCopula<T> {
    type Error = Error;

    fn try_from(r: FittedRepr<T>) -> Result<Self> {
        let copula = match (r.family, r.parameter) {
            (CopulaFamily::Independence, None) => {
                BivariateCopula::new(r.family, r.rotation, T::zero())?
            }
            (CopulaFamily::Independence, Some(_)) => {
                return Err(Error::Input("Independence carries no parameter".into()))
            }
            (f, Some(p)) => BivariateCopula::new(f, r.rotation, p)?,
            (f, None) => return Err(Error::Input(format!("{f} requires a parameter"))),
        };
        Ok(Self {
            copula,
            loglik: r.loglik,
            n: r.n,
        })
    }
}

/// Maps an unconstrained search coordinate to a parameter and back.
struct Reparam {
    family: CopulaFamily,
}

impl Reparam {
    fn to_param<T: Real>(&self, z: T) -> T {
        match self.family {
            CopulaFamily::Gaussian => z.tanh(),
            CopulaFamily::Clayton => z.exp(),
            CopulaFamily::Gumbel | CopulaFamily::Joe => T::one() + z.exp(),
            _ => z,
        }
    }

    fn unconstrain<T: Real>(&self, th: T) -> T {
        match self.family {
            CopulaFamily::Gaussian => th.atanh(),
            CopulaFamily::Clayton => th.ln(),
            CopulaFamily::Gumbel | CopulaFamily::Joe => (th - T::one()).ln(),
            _ => th,
        }
    }
}

const MIN_FIT_OBS: usize = 10;

fn check_fit_data<T: Real>(u: &[T], v: &[T]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Input(format!(
            "paired samples differ in length: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.len() < MIN_FIT_OBS {
        return Err(Error::Input(format!(
            "copula fitting needs at least {MIN_FIT_OBS} observation pairs, got {}",
            u.len()
        )));
    }
    if u.iter().chain(v).any(|&x| !(x > T::zero() && x < T::one())) {
        return Err(Error::Input("copula data must lie strictly inside (0, 1)".into()));
    }
    Ok(())
}

/// Maximum-likelihood fit of one family/rotation, started from the
/// Kendall's-tau inversion of the sample.
///
/// Returns [`Error::Domain`] when the sample tau has the wrong sign for the
/// requested family/rotation; callers selecting among families treat that as
/// "skip this candidate".
pub fn fit_mle<T: Real>(
    family: CopulaFamily,
    rotation: Rotation,
    u: &[T],
    v: &[T],
) -> Result<FittedCopula<T>> {
    check_fit_data(u, v)?;
    if family == CopulaFamily::Independence {
        return Ok(FittedCopula::independence(u.len()));
    }
    let tau = kendall_tau(u, v)?;
    fit_with_tau(family, rotation, u, v, tau)
}

fn fit_with_tau<T: Real>(
    family: CopulaFamily,
    rotation: Rotation,
    u: &[T],
    v: &[T],
    tau: T,
) -> Result<FittedCopula<T>> {
    if rotation != Rotation::R0 && !family.rotatable() {
        return Err(Error::Input(format!(
            "{family} does not admit rotation {rotation}"
        )));
    }
    let n = u.len();
    let base_tau = if rotation.flips_sign() { -tau } else { tau };
    if family.rotatable() && base_tau <= T::zero() {
        return Err(Error::Domain(format!(
            "sample tau {tau} has the wrong sign for {family} rotated {rotation}"
        )));
    }

    let (lo, hi) = family.fit_bounds();
    let (mut lo, mut hi): (T, T) = (lit(lo), lit(hi));
    if family == CopulaFamily::Frank {
        // stay on the side of zero the sample points to
        if base_tau >= T::zero() {
            lo = lit(1e-4);
        } else {
            hi = lit(-1e-4);
        }
    }
    let init_tau = base_tau.max(lit(-0.95)).min(lit(0.95));
    let init_tau = if family == CopulaFamily::Frank && init_tau.abs() < lit(1e-3) {
        if base_tau < T::zero() {
            lit(-1e-3)
        } else {
            lit(1e-3)
        }
    } else {
        init_tau
    };
    let theta0 = match tau_to_param(family, Rotation::R0, init_tau) {
        Ok(t) => t,
        Err(Error::Domain(_)) => {
            if init_tau > T::zero() {
                hi
            } else {
                lo
            }
        }
        Err(e) => return Err(e),
    };
    let theta0 = theta0.max(lo).min(hi);

    let rep = Reparam { family };
    let (zlo, zhi) = (rep.unconstrain(lo), rep.unconstrain(hi));
    let big = T::max_value() / lit(1e6);

    let negll: Box<dyn Fn(T) -> T> = if family == CopulaFamily::Gaussian {
        // sufficient statistics on the normal-score scale
        let flip = |x: T, r: Rotation| if r.flips_sign() { -x } else { x };
        let (mut sxx, mut sxy) = (T::zero(), T::zero());
        for (&a, &b) in u.iter().zip(v) {
            let x = norm_quantile(clamp_unit(a));
            let y = flip(norm_quantile(clamp_unit(b)), rotation);
            sxx = sxx + x * x + y * y;
            sxy = sxy + x * y;
        }
        let nn: T = lit(n as f64);
        Box::new(move |z: T| {
            let r = rep_gauss(z);
            let s2 = T::one() - r * r;
            let ll = -nn / lit(2.0) * s2.ln() - (r * r * sxx - lit::<T>(2.0) * r * sxy) / (lit::<T>(2.0) * s2);
            if ll.is_finite() {
                -ll
            } else {
                big
            }
        })
    } else {
        Box::new(move |z: T| {
            let th = Reparam { family }.to_param(z);
            let c = BivariateCopula {
                family,
                rotation,
                parameter: th,
            };
            let ll = c.loglik(u, v);
            if ll.is_finite() {
                -ll
            } else {
                big
            }
        })
    };

    let z0 = rep.unconstrain(theta0);
    let f0 = negll(z0);
    let (zb, fb) = brent_min(&negll, zlo, zhi, lit(1e-8), 200);
    let (z, fz) = if f0 < fb { (z0, f0) } else { (zb, fb) };
    let mut theta = rep.to_param(z);
    if family == CopulaFamily::Gumbel && theta < T::one() {
        theta = T::one();
    }
    let copula = BivariateCopula::new(family, rotation, theta)?;
    Ok(FittedCopula {
        copula,
        loglik: -fz,
        n,
    })
}

#[inline]
fn rep_gauss<T: Real>(z: T) -> T {
    z.tanh()
}

/// Options for [`select_family_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectOptions {
    /// Significance level of the Kendall's-tau independence pre-test. When
    /// the test does not reject, Independence is returned without fitting.
    /// `None` disables the test and leaves the choice to AIC alone.
    pub independence_level: Option<f64>,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            independence_level: Some(0.05),
        }
    }
}

/// Two-sided asymptotic test of tau = 0: `|tau| sqrt(9n(n-1) / (2(2n+5)))`
/// against the standard normal.
pub fn independence_test_rejects<T: Real>(tau: T, n: usize, level: f64) -> bool {
    let nf = n as f64;
    let z = to_f64(tau).abs() * (9.0 * nf * (nf - 1.0) / (2.0 * (2.0 * nf + 5.0))).sqrt();
    z > norm_quantile(1.0 - level / 2.0)
}

/// Fits every admissible (family, rotation) among `candidates` plus
/// Independence and returns the one with the smallest AIC, using the default
/// independence pre-test.
pub fn select_family<T: Real>(
    u: &[T],
    v: &[T],
    candidates: &[CopulaFamily],
) -> Result<FittedCopula<T>> {
    select_family_with(u, v, candidates, &SelectOptions::default())
}

/// AIC selection over `candidates` and Independence.
///
/// Asymmetric families are tried at rotations 0/180 for positive sample tau
/// and 90/270 for negative tau. Ties keep the earlier candidate, with
/// Independence first.
pub fn select_family_with<T: Real>(
    u: &[T],
    v: &[T],
    candidates: &[CopulaFamily],
    options: &SelectOptions,
) -> Result<FittedCopula<T>> {
    check_fit_data(u, v)?;
    let n = u.len();
    let mut best = FittedCopula::independence(n);
    let tau = match kendall_tau(u, v) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => return Ok(best),
        Err(e) => return Err(e),
    };
    if let Some(level) = options.independence_level {
        if !independence_test_rejects(tau, n, level) {
            return Ok(best);
        }
    }
    let mut best_aic = best.aic();
    let mut seen = Vec::new();
    for &family in candidates {
        if family == CopulaFamily::Independence || seen.contains(&family) {
            continue;
        }
        seen.push(family);
        let rotations: &[Rotation] = if !family.rotatable() {
            &[Rotation::R0]
        } else if tau > T::zero() {
            &[Rotation::R0, Rotation::R180]
        } else if tau < T::zero() {
            &[Rotation::R90, Rotation::R270]
        } else {
            &[]
        };
        for &rotation in rotations {
            let fit = match fit_with_tau(family, rotation, u, v, tau) {
                Ok(f) => f,
                Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            };
            let aic = fit.aic();
            if aic < best_aic {
                best_aic = aic;
                best = fit;
            }
        }
    }
    Ok(best)
}

impl<T: Real> fmt::Display for BivariateCopula<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.family == CopulaFamily::Independence {
            write!(f, "Independence")
        } else {
            write!(f, "{}(theta = {:.6})", self.label(), to_f64(self.parameter))
        }
    }
}
