//! Moduli of continuity: evaluation, Dini integrals, classification and the
//! twice-differentiable regularisation ℓ̄.

use crate::error::{param, Error, Result};
use crate::quadrature::{gauss_kronrod_points, QuadOptions};
use crate::scalar::Real;
use std::sync::Arc;

/// Monotone table of samples, interpolated by a monotone cubic in `log r`.
#[derive(Clone, Debug)]
pub struct Table<T> {
    r: Vec<T>,
    ln_r: Vec<T>,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> Table<T> {
    pub fn new(r: Vec<T>, values: Vec<T>) -> Result<Self> {
        if r.len() < 2 || r.len() != values.len() {
            return Err(param("table", "need at least two (r, value) pairs of equal length"));
        }
        if r[0] <= T::zero() || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param("table", "abscissae must be positive and strictly increasing"));
        }
        if values.iter().any(|v| !(*v > T::zero())) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(param("table", "values must be positive and nondecreasing"));
        }
        let ln_r: Vec<T> = r.iter().map(|x| x.ln()).collect();
        let slopes = pchip_slopes(&ln_r, &values);
        Ok(Self {
            r,
            ln_r,
            values,
            slopes,
        })
    }

    pub fn range(&self) -> (T, T) {
        (self.r[0], *self.r.last().unwrap())
    }

    fn locate(&self, r: T) -> Option<(usize, T, T)> {
        let (lo, hi) = self.range();
        if r < lo || r > hi {
            return None;
        }
        let x = r.ln();
        let i = match self.ln_r.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.ln_r.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.ln_r.len() - 2),
        };
        let h = self.ln_r[i + 1] - self.ln_r[i];
        Some((i, (x - self.ln_r[i]) / h, h))
    }

    /// Returns (ℓ, dℓ/dlog r, d²ℓ/dlog r²).
    fn eval3(&self, r: T) -> Option<(T, T, T)> {
        let (i, t, h) = self.locate(r)?;
        Some(hermite(
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            h,
            t,
        ))
    }
}

/// Fritsch–Carlson slopes for monotone piecewise cubic Hermite interpolation.
fn pchip_slopes<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![T::zero(); n];
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
        return m;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > T::zero() {
            let w1 = T::lit(2.0) * h[i] + h[i - 1];
            let w2 = h[i] + T::lit(2.0) * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: T, h1: T, d0: T, d1: T| {
        let s = ((T::lit(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= T::zero() {
            T::zero()
        } else if d0 * d1 <= T::zero() && s.abs() > (T::lit(3.0) * d0).abs() {
            T::lit(3.0) * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

/// Cubic Hermite value and first two derivatives (w.r.t. the abscissa) at `t ∈ [0,1]`.
#[inline]
fn hermite<T: Real>(y0: T, y1: T, m0: T, m1: T, h: T, t: T) -> (T, T, T) {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    let d00 = T::lit(6.0) * (t2 - t);
    let d10 = three * t2 - T::lit(4.0) * t + T::one();
    let d11 = three * t2 - two * t;
    let d = (d00 * (y0 - y1)) / h + d10 * m0 + d11 * m1;
    let s00 = T::lit(12.0) * t - T::lit(6.0);
    let s10 = T::lit(6.0) * t - T::lit(4.0);
    let s11 = T::lit(6.0) * t - two;
    let s = (s00 * (y0 - y1)) / (h * h) + (s10 * m0 + s11 * m1) / h;
    (v, d, s)
}

const REG_GRID: usize = 4096;
const REG_LO: f64 = 1e-12;
const REG_TAIL: f64 = 50.0;

/// Cached regularisation ℓ̄ of an (extended) modulus.
#[derive(Clone, Debug)]
pub struct Regularized<T> {
    inner: ModulusSpec<T>,
    kind: RegKind<T>,
}

#[derive(Clone, Debug)]
enum RegKind<T> {
    Constant(T),
    Cached(Box<RegCache<T>>),
}

#[derive(Clone, Debug)]
struct RegCache<T> {
    ln_lo: T,
    step: T,
    ln_bar: Vec<T>,
    dln_bar: Vec<T>,
    ln_mean: Vec<T>,
    dln_mean: Vec<T>,
    bar1: T,
    mean1: T,
    ell1: T,
}

impl<T: Real> Regularized<T> {
    pub fn inner(&self) -> &ModulusSpec<T> {
        &self.inner
    }

    /// Direct quadrature of ℓ̄(r) = ∫_0^∞ ℓ(r e^{-t}) t e^{-t} dt and of the mean
    /// (1/r)∫_0^r ℓ = ∫_0^∞ ℓ(r e^{-t}) e^{-t} dt.
    fn direct(inner: &ModulusSpec<T>, r: T, rel: T) -> Result<(T, T)> {
        let mut pts = vec![T::zero()];
        if r > T::one() && inner.extend_past_one {
            pts.push(r.ln());
        }
        let tail = T::lit(REG_TAIL);
        let top = tail.max(r.ln() + tail);
        pts.push(top);
        let opts = QuadOptions::new(rel, T::min_positive_value());
        let bar = gauss_kronrod_points(|t: T| inner.value(r * (-t).exp()) * t * (-t).exp(), &pts, &opts)?;
        let mean = gauss_kronrod_points(|t: T| inner.value(r * (-t).exp()) * (-t).exp(), &pts, &opts)?;
        Ok((bar.value, mean.value))
    }

    fn build(inner: ModulusSpec<T>) -> Result<Self> {
        let inner = inner.with_extension(true);
        if let Family::Constant { value } = inner.family {
            return Ok(Self {
                inner,
                kind: RegKind::Constant(value),
            });
        }
        let ln_lo = T::lit(REG_LO).ln();
        let step = -ln_lo / T::from_usize_lossy(REG_GRID - 1);
        let rel = T::lit(1e-13).max(T::epsilon() * T::lit(16.0));
        let mut ln_bar = Vec::with_capacity(REG_GRID);
        let mut dln_bar = Vec::with_capacity(REG_GRID);
        let mut ln_mean = Vec::with_capacity(REG_GRID);
        let mut dln_mean = Vec::with_capacity(REG_GRID);
        for i in 0..REG_GRID {
            let r = if i == REG_GRID - 1 {
                T::one()
            } else {
                (ln_lo + step * T::from_usize_lossy(i)).exp()
            };
            let (bar, mean) = Self::direct(&inner, r, rel)?;
            let ell = inner.value(r);
            if !(bar > T::zero() && mean > T::zero()) {
                return Err(Error::Numeric(format!(
                    "regularisation produced non-positive value at r = {:e}",
                    r.as_f64()
                )));
            }
            ln_bar.push(bar.ln());
            dln_bar.push((mean - bar) / bar);
            ln_mean.push(mean.ln());
            dln_mean.push((ell - mean) / mean);
        }
        let bar1 = ln_bar[REG_GRID - 1].exp();
        let mean1 = ln_mean[REG_GRID - 1].exp();
        let ell1 = inner.value(T::one());
        Ok(Self {
            inner,
            kind: RegKind::Cached(Box::new(RegCache {
                ln_lo,
                step,
                ln_bar,
                dln_bar,
                ln_mean,
                dln_mean,
                bar1,
                mean1,
                ell1,
            })),
        })
    }

    /// Returns (ℓ̄(r), (1/r)∫_0^r ℓ).
    fn bar_and_mean(&self, r: T) -> (T, T) {
        match &self.kind {
            RegKind::Constant(c) => (*c, *c),
            RegKind::Cached(c) => {
                if r >= T::one() {
                    let lr = r.ln();
                    let bar = (c.bar1 + (c.mean1 - c.ell1) * lr + c.ell1 * (r - T::one())) / r;
                    let mean = (c.mean1 + c.ell1 * (r - T::one())) / r;
                    return (bar, mean);
                }
                let x = r.ln();
                if x < c.ln_lo {
                    return Self::direct(&self.inner, r, T::lit(1e-12).max(T::epsilon() * T::lit(16.0)))
                        .unwrap_or((T::nan(), T::nan()));
                }
                let pos = (x - c.ln_lo) / c.step;
                let i = pos.floor().to_usize().unwrap_or(0).min(REG_GRID - 2);
                let t = pos - T::from_usize_lossy(i);
                let (lb, _, _) = hermite(c.ln_bar[i], c.ln_bar[i + 1], c.dln_bar[i], c.dln_bar[i + 1], c.step, t);
                let (lm, _, _) = hermite(c.ln_mean[i], c.ln_mean[i + 1], c.dln_mean[i], c.dln_mean[i + 1], c.step, t);
                (lb.exp(), lm.exp())
            }
        }
    }
}

/// The family of a modulus.
#[derive(Clone, Debug)]
pub enum Family<T> {
    /// Λ r^ε with ε ∈ (0, 1].
    Power { scale: T, exponent: T },
    /// (log(1 + 1/r))^{-p}.
    LogPower { p: T },
    Constant { value: T },
    Table(Arc<Table<T>>),
    Regularized(Arc<Regularized<T>>),
}

/// A modulus of continuity ℓ together with its extension rule and optional
/// scaling data (θ, c0).
#[derive(Clone, Debug)]
pub struct ModulusSpec<T> {
    family: Family<T>,
    extend_past_one: bool,
    theta: Option<T>,
    c0: Option<T>,
}

impl<T: Real> ModulusSpec<T> {
    fn from_family(family: Family<T>) -> Self {
        Self {
            family,
            extend_past_one: true,
            theta: None,
            c0: None,
        }
    }

    pub fn power(scale: T, exponent: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(param("scale", "power family needs Λ > 0"));
        }
        if !(exponent > T::zero() && exponent <= T::one()) {
            return Err(param("exponent", "power family needs ε ∈ (0, 1]"));
        }
        Ok(Self::from_family(Family::Power { scale, exponent }))
    }

    pub fn logpower(p: T) -> Result<Self> {
        if !(p > T::zero()) {
            return Err(param("p", "logpower family needs p > 0"));
        }
        Ok(Self::from_family(Family::LogPower { p }))
    }

    pub fn constant(value: T) -> Result<Self> {
        if !(value >= T::zero()) || !value.is_finite() {
            return Err(param("c", "constant family needs c ≥ 0"));
        }
        Ok(Self::from_family(Family::Constant { value }))
    }

    pub fn zero() -> Self {
        Self::from_family(Family::Constant { value: T::zero() })
    }

    pub fn table(r: Vec<T>, values: Vec<T>) -> Result<Self> {
        Ok(Self::from_family(Family::Table(Arc::new(Table::new(r, values)?))))
    }

    pub fn with_extension(mut self, extend: bool) -> Self {
        if !matches!(self.family, Family::Regularized(_)) {
            self.extend_past_one = extend;
        }
        self
    }

    pub fn with_scaling(mut self, theta: T, c0: T) -> Self {
        self.theta = Some(theta);
        self.c0 = Some(c0);
        self
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn extends_past_one(&self) -> bool {
        self.extend_past_one
    }

    pub fn theta(&self) -> Option<T> {
        self.theta
    }

    pub fn c0(&self) -> Option<T> {
        self.c0
    }

    /// True when ℓ vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self.family, Family::Constant { value } if value == T::zero())
    }

    pub fn is_regularized(&self) -> bool {
        matches!(self.family, Family::Regularized(_))
    }

    /// ℓ(r) with domain checks.
    pub fn eval(&self, r: T) -> Result<T> {
        self.check(r)?;
        Ok(self.value(r))
    }

    /// ℓ′(r) with domain checks.
    pub fn derivative(&self, r: T) -> Result<T> {
        self.check(r)?;
        Ok(self.derivatives(r).1)
    }

    /// ℓ″(r) with domain checks.
    pub fn second_derivative(&self, r: T) -> Result<T> {
        self.check(r)?;
        Ok(self.derivatives(r).2)
    }

    fn check(&self, r: T) -> Result<()> {
        if !(r > T::zero()) {
            return Err(Error::Domain(format!("modulus evaluated at r = {} ≤ 0", r.as_f64())));
        }
        if let Family::Table(t) = &self.family {
            let (lo, hi) = t.range();
            let clamped = if self.extend_past_one && r >= T::one() { T::one() } else { r };
            if clamped < lo || clamped > hi {
                return Err(Error::Extrapolation {
                    r: r.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Unchecked ℓ(r) for hot loops; NaN outside the domain.
    #[inline]
    pub fn value(&self, r: T) -> T {
        if self.extend_past_one && r >= T::one() {
            return self.raw_value(T::one());
        }
        self.raw_value(r)
    }

    #[inline]
    fn raw_value(&self, r: T) -> T {
        match &self.family {
            Family::Power { scale, exponent } => *scale * r.powf(*exponent),
            Family::LogPower { p } => log_inv(r).powf(-*p),
            Family::Constant { value } => *value,
            Family::Table(t) => t.eval3(r).map(|v| v.0).unwrap_or(T::nan()),
            Family::Regularized(g) => g.bar_and_mean(r).0,
        }
    }

    /// (ℓ, ℓ′, ℓ″) at r without domain checks.
    pub fn derivatives(&self, r: T) -> (T, T, T) {
        if self.extend_past_one && r >= T::one() {
            return (self.raw_value(T::one()), T::zero(), T::zero());
        }
        match &self.family {
            Family::Power { scale, exponent } => {
                let e = *exponent;
                let v = *scale * r.powf(e);
                (v, v * e / r, v * e * (e - T::one()) / (r * r))
            }
            Family::LogPower { p } => {
                let p = *p;
                let l = log_inv(r);
                let q = r * (r + T::one());
                let v = l.powf(-p);
                let d1 = p * l.powf(-p - T::one()) / q;
                let d2 = p * l.powf(-p - T::lit(2.0)) / (q * q) * ((p + T::one()) - l * (T::lit(2.0) * r + T::one()));
                (v, d1, d2)
            }
            Family::Constant { value } => (*value, T::zero(), T::zero()),
            Family::Table(t) => match t.eval3(r) {
                Some((v, dl, dll)) => (v, dl / r, (dll - dl) / (r * r)),
                None => (T::nan(), T::nan(), T::nan()),
            },
            Family::Regularized(g) => {
                let (bar, mean) = g.bar_and_mean(r);
                let ell = g.inner.value(r);
                let d1 = (mean - bar) / r;
                let d2 = (ell - T::lit(3.0) * mean + T::lit(2.0) * bar) / (r * r);
                (bar, d1, d2)
            }
        }
    }

    /// ∫_a^b ℓ(u)/u du.
    pub fn dini_integral(&self, a: T, b: T) -> Result<T> {
        if !(a > T::zero()) {
            return Err(Error::Domain(format!("dini integral lower limit a = {} ≤ 0", a.as_f64())));
        }
        if !(b >= a) {
            return Err(Error::Domain(format!(
                "dini integral needs a ≤ b (a = {}, b = {})",
                a.as_f64(),
                b.as_f64()
            )));
        }
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(T::zero());
        }
        if let Family::Constant { value } = self.family {
            return Ok(value * (b / a).ln());
        }
        let (la, lb) = (a.ln(), b.ln());
        let mut pts = vec![la];
        if self.extend_past_one && la < T::zero() && lb > T::zero() {
            pts.push(T::zero());
        }
        pts.push(lb);
        let rel = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
        let opts = QuadOptions::new(rel, T::min_positive_value());
        let q = gauss_kronrod_points(|s: T| self.value(s.exp()), &pts, &opts)?;
        Ok(q.value)
    }

    /// Analytic Dini classification when the family admits one.
    pub fn analytic_dini(&self) -> Option<bool> {
        match &self.family {
            Family::Power { .. } => Some(true),
            Family::LogPower { p } => Some(*p > T::one()),
            Family::Constant { value } => Some(*value == T::zero()),
            Family::Table(_) => None,
            Family::Regularized(g) => g.inner.analytic_dini(),
        }
    }
}

/// log(1 + 1/r), accurate for both tiny and huge r.
#[inline]
fn log_inv<T: Real>(r: T) -> T {
    if r < T::one() {
        r.ln_1p() - r.ln()
    } else {
        r.recip().ln_1p()
    }
}

/// ℓ̄, the twice-differentiable regularisation of `spec` (extended by ℓ(1) past 1).
pub fn regularize<T: Real>(spec: &ModulusSpec<T>) -> Result<ModulusSpec<T>> {
    let reg = Regularized::build(spec.clone())?;
    Ok(ModulusSpec {
        family: Family::Regularized(Arc::new(reg)),
        extend_past_one: false,
        theta: spec.theta,
        c0: spec.c0,
    })
}

/// Dini classification with the probe tails it is based on.
#[derive(Clone, Debug)]
pub struct DiniReport<T> {
    pub is_dini: bool,
    pub analytic: Option<bool>,
    pub heuristic: bool,
    /// Pairs (a, ∫_a^1 ℓ(u)/u du) for a = 10^{-k}.
    pub integral_tail: Vec<(T, T)>,
    /// Slope of the tail against log(1/a) over the last probes (non-Dini only).
    pub divergence_rate: Option<T>,
}

/// Tail increment over one decade above which the heuristic declares non-Dini.
pub const DINI_TAIL_TOLERANCE: f64 = 1e-6;

pub fn classify_dini<T: Real>(spec: &ModulusSpec<T>, probe_floor: T) -> Result<DiniReport<T>> {
    if !(probe_floor > T::zero() && probe_floor <= T::lit(1e-3)) {
        return Err(param("probe_floor", "must lie in (0, 1e-3]"));
    }
    let mut tail = Vec::new();
    let mut a = T::lit(0.1);
    let mut acc = T::zero();
    let mut upper = T::one();
    while a >= probe_floor * (T::one() - T::lit(1e-9)) {
        acc = acc + spec.dini_integral(a, upper)?;
        tail.push((a, acc));
        upper = a;
        a = a * T::lit(0.1);
    }
    let n = tail.len();
    let last_increment = if n >= 2 { tail[n - 1].1 - tail[n - 2].1 } else { tail[0].1 };
    let heuristic = last_increment <= T::lit(DINI_TAIL_TOLERANCE);
    let analytic = spec.analytic_dini();
    let is_dini = analytic.unwrap_or(heuristic);
    let divergence_rate = if is_dini {
        None
    } else {
        let k = n.min(4);
        let pts: Vec<(T, T)> = tail[n - k..].iter().map(|&(a, v)| (-a.ln(), v)).collect();
        Some(ls_slope(&pts))
    };
    Ok(DiniReport {
        is_dini,
        analytic,
        heuristic,
        integral_tail: tail,
        divergence_rate,
    })
}

fn ls_slope<T: Real>(pts: &[(T, T)]) -> T {
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<T>();
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<T>();
    if sxx > T::zero() {
        sxy / sxx
    } else {
        T::zero()
    }
}

/// Geometric grid of `n` points on `[lo, hi]`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)).exp())
        .collect()
}

/// Measured structural constants of a modulus on the invariant grid.
#[derive(Clone, Debug)]
pub struct InvariantReport<T> {
    pub grid_points: usize,
    pub monotone: bool,
    /// Smallest c with ℓ(r)/r ≤ c ℓ(s)/s for grid pairs s ≤ r.
    pub almost_decreasing_constant: T,
    /// Exponent used for the scaling check (stored θ or fitted).
    pub theta: T,
    pub theta_fitted: bool,
    /// Smallest c0 with ℓ(r)/ℓ(s) ≤ c0 (r/s)^θ for grid pairs s ≤ r ≤ 1.
    pub theta_constant: T,
    /// ℓ(1e-8) < ℓ(1).
    pub vanishes_at_zero: bool,
}

impl<T: Real> InvariantReport<T> {
    pub fn passes(&self, declared: T) -> bool {
        self.monotone
            && self.almost_decreasing_constant <= declared
            && self.theta_constant.is_finite()
    }
}

/// Least-squares log-log slope of ℓ on [1e-6, 1], used when θ is not supplied.
pub fn fit_theta<T: Real>(spec: &ModulusSpec<T>) -> Result<T> {
    let grid = geometric_grid(T::lit(1e-6), T::one(), 64);
    let mut pts = Vec::with_capacity(grid.len());
    for r in grid {
        let v = spec.eval(r)?;
        if v <= T::zero() {
            return Ok(T::zero());
        }
        pts.push((r.ln(), v.ln()));
    }
    Ok(ls_slope(&pts).max(T::zero()))
}

pub fn check_invariants<T: Real>(spec: &ModulusSpec<T>) -> Result<InvariantReport<T>> {
    check_invariants_on(spec, &geometric_grid(T::lit(1e-8), T::lit(10.0), 1024))
}

pub fn check_invariants_on<T: Real>(spec: &ModulusSpec<T>, grid: &[T]) -> Result<InvariantReport<T>> {
    let vals: Vec<T> = grid.iter().map(|&r| spec.eval(r)).collect::<Result<_>>()?;
    let tol = T::lit(1e-12);
    let monotone = vals
        .windows(2)
        .all(|w| w[1] >= w[0] - tol * w[0].abs().max(T::min_positive_value()));
    // max over s ≤ r of (ℓ(r)/r)(s/ℓ(s)) via a running maximum.
    let mut best_inv = T::zero();
    let mut almost = T::one();
    for (&r, &v) in grid.iter().zip(&vals) {
        if v > T::zero() {
            best_inv = best_inv.max(r / v);
            almost = almost.max(v / r * best_inv);
        }
    }
    let (theta, theta_fitted) = match spec.theta {
        Some(t) => (t, false),
        None => (fit_theta(spec)?, true),
    };
    let mut best = T::zero();
    let mut c0 = T::one();
    for (&r, &v) in grid.iter().zip(&vals) {
        if r > T::one() || v <= T::zero() {
            continue;
        }
        best = best.max(r.powf(theta) / v);
        c0 = c0.max(v * r.powf(-theta) * best);
    }
    let vanishes_at_zero = spec.eval(T::lit(1e-8))? < spec.eval(T::one())?;
    Ok(InvariantReport {
        grid_points: grid.len(),
        monotone,
        almost_decreasing_constant: almost,
        theta,
        theta_fitted,
        theta_constant: c0,
        vanishes_at_zero,
    })
}

/// Regularisation diagnostics on `[1e-6, 1]`.
#[derive(Clone, Debug)]
pub struct RegularizationReport<T> {
    pub grid_points: usize,
    /// max ℓ̄/ℓ (must be ≤ 1).
    pub upper_ratio: T,
    /// min ℓ̄ / (ℓ(r/4)/4) (must be ≥ 1).
    pub lower_ratio: T,
    /// min r ℓ̄′(r)/ℓ̄(r) (must be ≥ 0).
    pub min_log_slope: T,
    /// max (r ℓ̄′ + |r² ℓ̄″|)/ℓ̄.
    pub derivative_constant: T,
    /// max ℓ(r)/ℓ̄(r), the sandwich constant.
    pub sandwich_constant: T,
}

pub fn regularization_report<T: Real>(
    ell: &ModulusSpec<T>,
    bar: &ModulusSpec<T>,
    points: usize,
) -> Result<RegularizationReport<T>> {
    let grid = geometric_grid(T::lit(1e-6), T::one(), points);
    let mut upper = T::neg_infinity();
    let mut lower = T::infinity();
    let mut min_slope = T::infinity();
    let mut dconst = T::zero();
    let mut sandwich = T::zero();
    for &r in &grid {
        let l = ell.eval(r)?;
        let lq = ell.eval(r / T::lit(4.0))?;
        let (b, d1, d2) = bar.derivatives(r);
        bar.check(r)?;
        upper = upper.max(b / l);
        lower = lower.min(b / (lq / T::lit(4.0)));
        min_slope = min_slope.min(r * d1 / b);
        dconst = dconst.max((r * d1 + (r * r * d2).abs()) / b);
        sandwich = sandwich.max(l / b);
    }
    Ok(RegularizationReport {
        grid_points: points,
        upper_ratio: upper,
        lower_ratio: lower,
        min_log_slope: min_slope,
        derivative_constant: dconst,
        sandwich_constant: sandwich,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pchip_reproduces_linear_data() {
        let x = [0.0, 1.0, 2.5, 4.0];
        let y = [1.0, 2.0, 3.5, 5.0];
        let m = pchip_slopes(&x, &y);
        for s in m {
            assert!((s - 1.0f64).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_derivatives_consistent() {
        let (v0, d0, s0) = hermite(1.0f64, 2.0, 0.5, 1.5, 0.7, 0.3);
        let eps = 1e-6;
        let (vp, dp, _) = hermite(1.0f64, 2.0, 0.5, 1.5, 0.7, 0.3 + eps);
        let (vm, dm, _) = hermite(1.0f64, 2.0, 0.5, 1.5, 0.7, 0.3 - eps);
        assert!(((vp - vm) / (2.0 * eps * 0.7) - d0).abs() < 1e-6);
        assert!(((dp - dm) / (2.0 * eps * 0.7) - s0).abs() < 1e-5);
        assert!(v0 > 1.0 && v0 < 2.0);
    }

    #[test]
    fn log_inv_accurate_at_extremes() {
        assert!((log_inv(1e-300f64) - 690.775_527_898_213_7).abs() < 1e-9);
        assert!((log_inv(1e12f64) - 1e-12).abs() < 1e-24);
    }
}
