//! Fractional Laplacian of one-dimensional profiles x ↦ F((x_d)_+) on the
//! half-space, with the raw kernel |x − y|^{−d−α} and no normalising constant.
//!
//! The d-dimensional principal value reduces to κ_proj times a one-dimensional
//! one, which is split into
//! * s ≤ 0, where F vanishes (closed form),
//! * (0, x/2) and (3x/2, ∞), integrated by tanh-sinh (the far tail after the
//!   map s = x + x/(2u)),
//! * the symmetric window |s − x| < x/2, written as
//!   ∫_0^{x/2} (F(x+t) + F(x−t) − 2F(x)) t^{−1−α} dt so the odd term cancels,
//!   with the second-order Taylor term used below a small cut.

use crate::error::{Error, Result};
use crate::moduli::{fit_theta, ModulusSpec};
use crate::quadrature::{gauss_kronrod_points, gauss_legendre, tanh_sinh, QuadOptions};
use crate::scalar::Real;
use crate::stablelaw::{c_dap, stable_constants, BarrierParams, BarrierVariant, StableIndex};

/// A profile F on (0, ∞), extended by zero to (−∞, 0].
pub trait Profile<T: Real>: Send + Sync {
    /// F(s) for s > 0.
    fn value(&self, s: T) -> T;

    /// Exponent g with F(s) = O(s^g) as s → ∞; must be below α.
    fn growth_exponent(&self) -> T;

    /// F″(s), if known in closed form. Otherwise five-point differences are used.
    fn second_derivative(&self, _s: T) -> Option<T> {
        None
    }

    /// Points in (0, ∞) where F is not C².
    fn kinks(&self) -> Vec<T> {
        Vec::new()
    }

    /// F(x + t) + F(x − t) − 2F(x) for 0 < t < x. Override when it can be
    /// formed without cancellation.
    fn second_difference(&self, x: T, t: T) -> T {
        self.value(x + t) + self.value(x - t) - T::lit(2.0) * self.value(x)
    }
}

fn five_point_second<T: Real, P: Profile<T> + ?Sized>(p: &P, x: T) -> T {
    let h = x * T::lit(2e-3);
    let f = |s: T| p.value(s);
    (-f(x + h * T::lit(2.0)) + T::lit(16.0) * f(x + h) - T::lit(30.0) * f(x) + T::lit(16.0) * f(x - h)
        - f(x - h * T::lit(2.0)))
        / (T::lit(12.0) * h * h)
}

/// F(s) = s^p.
#[derive(Clone, Copy, Debug)]
pub struct PowerProfile<T> {
    pub p: T,
}

impl<T: Real> PowerProfile<T> {
    pub fn new(p: T) -> Self {
        Self { p }
    }
}

impl<T: Real> Profile<T> for PowerProfile<T> {
    fn value(&self, s: T) -> T {
        s.powf(self.p)
    }

    fn growth_exponent(&self) -> T {
        self.p
    }

    fn second_derivative(&self, s: T) -> Option<T> {
        Some(self.p * (self.p - T::one()) * s.powf(self.p - T::lit(2.0)))
    }

    fn second_difference(&self, x: T, t: T) -> T {
        let u = t / x;
        let up = (self.p * u.ln_1p()).exp_m1();
        let dn = (self.p * (-u).ln_1p()).exp_m1();
        x.powf(self.p) * (up + dn)
    }
}

/// A profile given by a closure, with finite-difference curvature.
pub struct FnProfile<F> {
    f: F,
    growth: f64,
    kinks: Vec<f64>,
}

impl<F> FnProfile<F> {
    pub fn new(f: F, growth: f64) -> Self {
        Self {
            f,
            growth,
            kinks: Vec::new(),
        }
    }

    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }
}

impl<T: Real, F: Fn(T) -> T + Send + Sync> Profile<T> for FnProfile<F> {
    fn value(&self, s: T) -> T {
        (self.f)(s)
    }

    fn growth_exponent(&self) -> T {
        T::lit(self.growth)
    }

    fn kinks(&self) -> Vec<T> {
        self.kinks.iter().map(|&k| T::lit(k)).collect()
    }
}

/// s ↦ F(c s).
pub struct Scaled<P, T> {
    pub inner: P,
    pub c: T,
}

impl<T: Real, P: Profile<T>> Profile<T> for Scaled<P, T> {
    fn value(&self, s: T) -> T {
        self.inner.value(self.c * s)
    }

    fn growth_exponent(&self) -> T {
        self.inner.growth_exponent()
    }

    fn second_derivative(&self, s: T) -> Option<T> {
        self.inner.second_derivative(self.c * s).map(|v| v * self.c * self.c)
    }

    fn kinks(&self) -> Vec<T> {
        self.inner.kinks().into_iter().map(|k| k / self.c).collect()
    }

    fn second_difference(&self, x: T, t: T) -> T {
        self.inner.second_difference(self.c * x, self.c * t)
    }
}

/// Φ, Ψ or χ viewed as a profile.
///
/// Near a point x the Φ/Ψ ratio F(s)/F(x) is formed from
/// ∫_{kx}^{ks} ℓ(u ∧ R)/u du with a fixed Gauss rule, which is smooth in s and
/// keeps the symmetric difference free of adaptive-quadrature noise.
#[derive(Clone, Debug)]
pub struct BarrierProfile<T> {
    pub params: BarrierParams<T>,
    pub variant: BarrierVariant,
}

impl<T: Real> BarrierProfile<T> {
    pub fn new(params: BarrierParams<T>, variant: BarrierVariant) -> Self {
        Self { params, variant }
    }

    /// ∫ ℓ(u ∧ R)/u du from u = a to u = a·e^δ, in the variable v = ln u.
    fn local_integral(&self, a: T, delta: T) -> T {
        let ell = &self.params.ell;
        let lr = ell.value(self.params.radius);
        let la = a.ln();
        let to_r = self.params.radius.ln() - la;
        // v measured from ln a; the part past ln R has the constant integrand ℓ(R)
        let piece = |v0: T, v1: T| -> T {
            if v0 >= to_r {
                lr * (v1 - v0)
            } else {
                gauss_legendre(|v: T| ell.value((la + v).exp()), v0, v1)
            }
        };
        let (lo, hi, sign) = if delta >= T::zero() {
            (T::zero(), delta, T::one())
        } else {
            (delta, T::zero(), -T::one())
        };
        let total = if lo < to_r && hi > to_r {
            piece(lo, to_r) + piece(to_r, hi)
        } else {
            piece(lo, hi)
        };
        sign * total
    }

    /// ln(F(x + t)/F(x)) for Φ/Ψ, with |t| < x.
    fn log_ratio(&self, x: T, t: T) -> T {
        let sigma = match self.variant {
            BarrierVariant::Phi => T::one(),
            _ => -T::one(),
        };
        let delta = (t / x).ln_1p();
        self.params.alpha * T::lit(0.5) * delta + sigma * self.params.lambda * self.local_integral(self.params.k * x, delta)
    }
}

impl<T: Real> Profile<T> for BarrierProfile<T> {
    fn value(&self, s: T) -> T {
        self.params.eval(s, self.variant).unwrap_or_else(|_| T::nan())
    }

    fn growth_exponent(&self) -> T {
        let half = self.params.alpha * T::lit(0.5);
        let lr = self.params.ell.value(self.params.radius);
        match self.variant {
            BarrierVariant::Phi => half + self.params.lambda * lr,
            BarrierVariant::Psi => half - self.params.lambda * lr,
            BarrierVariant::Chi => T::zero(),
        }
    }

    fn second_derivative(&self, s: T) -> Option<T> {
        match self.variant {
            BarrierVariant::Chi => {
                let r = self.params.radius;
                if s >= r {
                    return Some(T::zero());
                }
                let q = self.params.alpha * T::lit(0.5) + self.params.eta?;
                Some(q * (q - T::one()) * (s / r).powf(q) / (s * s))
            }
            v => self.params.derivatives(s, v).ok().map(|d| d.2),
        }
    }

    fn kinks(&self) -> Vec<T> {
        match self.variant {
            BarrierVariant::Chi => vec![self.params.radius],
            _ => vec![self.params.radius / self.params.k],
        }
    }

    fn second_difference(&self, x: T, t: T) -> T {
        match self.variant {
            BarrierVariant::Chi => self.value(x + t) + self.value(x - t) - T::lit(2.0) * self.value(x),
            _ => {
                let up = self.log_ratio(x, t).exp_m1();
                let dn = self.log_ratio(x, -t).exp_m1();
                self.value(x) * (up + dn)
            }
        }
    }
}

/// Accuracy controls for [`frac_lap_profile_with`].
#[derive(Clone, Copy, Debug)]
pub struct FracLapOptions<T> {
    /// Target relative accuracy against the scale |F(x)| x^{−α}.
    pub rel_tol: T,
    /// Below t = taylor_cut · x the symmetric difference is replaced by F″(x) t².
    pub taylor_cut: T,
}

impl<T: Real> Default for FracLapOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-7),
            taylor_cut: T::lit(1e-5),
        }
    }
}

impl<T: Real> FracLapOptions<T> {
    /// Halves both the tolerance and the Taylor cut.
    pub fn refined(self) -> Self {
        Self {
            rel_tol: self.rel_tol * T::lit(0.5),
            taylor_cut: self.taylor_cut * T::lit(0.5),
        }
    }
}

/// p.v.∫_{ℝ^d} (F((y_d)_+) − F(x)) |x e_d − y|^{−d−α} dy at default accuracy.
pub fn frac_lap_profile<T: Real, P: Profile<T> + ?Sized>(idx: &StableIndex<T>, profile: &P, x: T) -> Result<T> {
    frac_lap_profile_with(idx, profile, x, &FracLapOptions::default())
}

/// As [`frac_lap_profile`] with explicit accuracy controls.
pub fn frac_lap_profile_with<T: Real, P: Profile<T> + ?Sized>(
    idx: &StableIndex<T>,
    profile: &P,
    x: T,
    opts: &FracLapOptions<T>,
) -> Result<T> {
    let alpha = idx.alpha();
    if !(x > T::zero() && x.is_finite()) {
        return Err(Error::Domain(format!("evaluation point must be positive, got {}", x.as_f64())));
    }
    let g = profile.growth_exponent();
    if !(g < alpha) {
        return Err(Error::Config {
            path: "profile".into(),
            message: format!(
                "growth exponent {} is not below α = {}; the tail is not integrable",
                g.as_f64(),
                alpha.as_f64()
            ),
        });
    }
    let one = T::one();
    let two = T::lit(2.0);
    let half_x = x * T::lit(0.5);
    let fx = profile.value(x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("profile is not finite at x = {}", x.as_f64())));
    }
    let scale = fx.abs().max(T::min_positive_value()) * x.powf(-alpha);
    let inner_tol = (opts.rel_tol * T::lit(1e-2)).max(T::epsilon() * T::lit(64.0));
    let qopts = QuadOptions {
        rel_tol: inner_tol,
        abs_tol: inner_tol * scale,
        max_subdivisions: 14,
    };
    let gk_opts = QuadOptions {
        max_subdivisions: 2000,
        ..qopts
    };
    let kinks = profile.kinks();

    // s ≤ 0: F = 0, so the contribution is −F(x) ∫_x^∞ t^{−1−α} dt.
    let negative = -fx * x.powf(-alpha) / alpha;

    // s ∈ (0, x/2)
    let mut cuts = vec![T::zero()];
    cuts.extend(kinks.iter().copied().filter(|&k| k > T::zero() && k < half_x));
    cuts.push(half_x);
    let mut left = T::zero();
    for w in cuts.windows(2) {
        let v = tanh_sinh(
            |s: T, _da: T, _db: T| {
                if s <= T::zero() {
                    return T::zero();
                }
                (profile.value(s) - fx) * (x - s).powf(-one - alpha)
            },
            w[0],
            w[1],
            &qopts,
        )?;
        left = left + v.value;
    }

    // s ∈ (3x/2, ∞) via s = x + x/(2u), u ∈ (0, 1]
    let mut ucuts = vec![T::zero()];
    let mut kink_u: Vec<T> = kinks
        .iter()
        .copied()
        .filter(|&k| k > x + half_x)
        .map(|k| half_x / (k - x))
        .collect();
    kink_u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ucuts.extend(kink_u);
    ucuts.push(one);
    let mut right = T::zero();
    let pref = half_x.powf(-alpha);
    for w in ucuts.windows(2) {
        let v = tanh_sinh(
            |u: T, _da: T, _db: T| {
                if u <= T::zero() {
                    return T::zero();
                }
                let s = x + half_x / u;
                if !s.is_finite() {
                    return T::zero();
                }
                (profile.value(s) - fx) * pref * u.powf(alpha - one)
            },
            w[0],
            w[1],
            &qopts,
        )?;
        right = right + v.value;
    }

    // symmetric window, t ∈ (0, x/2), integrated in v = ln t above the Taylor cut
    let tau = opts.taylor_cut * x;
    let f2 = profile
        .second_derivative(x)
        .unwrap_or_else(|| five_point_second(profile, x));
    let taylor = f2 * tau.powf(two - alpha) / (two - alpha);
    let (lo, hi) = (tau.ln(), half_x.ln());
    let mut vcuts = vec![lo];
    let mut kv: Vec<T> = kinks
        .iter()
        .map(|&k| (k - x).abs())
        .filter(|&d| d > tau && d < half_x)
        .map(|d| d.ln())
        .collect();
    kv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vcuts.extend(kv);
    vcuts.push(hi);
    let window = gauss_kronrod_points(
        |v: T| {
            let t = v.exp();
            profile.second_difference(x, t) * t.powf(-alpha)
        },
        &vcuts,
        &gk_opts,
    )?
    .value;

    let total = negative + left + right + taylor + window;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite fractional Laplacian at x = {}", x.as_f64())));
    }
    Ok(stable_constants(idx).kappa_proj * total)
}

/// Closed form for F = s^p: (C(d,α,p) − C(d,α,α/2)) x^{p−α}.
pub fn power_closed_form<T: Real>(idx: &StableIndex<T>, p: T, x: T) -> Result<T> {
    let alpha = idx.alpha();
    Ok((c_dap(idx, p)? - c_dap(idx, alpha * T::lit(0.5))?) * x.powf(p - alpha))
}

/// Measured operator value against the predicted floor λ x^{−α} ℓ(kx) F(x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierMargin<T> {
    pub value: T,
    pub predicted_floor: T,
}

impl<T: Real> BarrierMargin<T> {
    /// value / predicted_floor (positive when the sign contract holds).
    pub fn ratio(&self) -> T {
        self.value / self.predicted_floor
    }
}

/// Fractional Laplacian of Φ or Ψ at x against λ x^{−α} ℓ(kx) F(x) (negated for Ψ).
pub fn barrier_margin<T: Real>(
    idx: &StableIndex<T>,
    params: &BarrierParams<T>,
    x: T,
    variant: BarrierVariant,
) -> Result<BarrierMargin<T>> {
    barrier_margin_with(idx, params, x, variant, &FracLapOptions::default())
}

pub fn barrier_margin_with<T: Real>(
    idx: &StableIndex<T>,
    params: &BarrierParams<T>,
    x: T,
    variant: BarrierVariant,
    opts: &FracLapOptions<T>,
) -> Result<BarrierMargin<T>> {
    if variant == BarrierVariant::Chi {
        return Err(Error::Parameter {
            name: "variant",
            reason: "barrier margins are defined for Φ and Ψ".into(),
        });
    }
    let eta = params.eta.ok_or_else(|| Error::Parameter {
        name: "theta",
        reason: "the margin check needs η, so θ must be supplied".into(),
    })?;
    let lr = params.ell.eval(params.radius)?;
    if !(params.lambda * lr < eta) {
        return Err(Error::Config {
            path: "lambda".into(),
            message: format!("hypothesis λ·ℓ(R) < η fails: {} ≥ {}", (params.lambda * lr).as_f64(), eta.as_f64()),
        });
    }
    if !(x > T::zero() && params.k * x < params.radius) {
        return Err(Error::Domain(format!(
            "margin needs 0 < k·x < R, got k·x = {}",
            (params.k * x).as_f64()
        )));
    }
    let profile = BarrierProfile::new(params.clone(), variant);
    let value = frac_lap_profile_with(idx, &profile, x, opts)?;
    let f = params.eval(x, variant)?;
    let floor = params.lambda * x.powf(-idx.alpha()) * params.ell.eval(params.k * x)? * f;
    let predicted_floor = if variant == BarrierVariant::Phi { floor } else { -floor };
    Ok(BarrierMargin { value, predicted_floor })
}

/// θ for the barrier exponent: the declared value if any, else the log-log fit on [1e-6, 1].
/// The flag reports whether the value was fitted.
pub fn theta_for<T: Real>(ell: &ModulusSpec<T>) -> Result<(T, bool)> {
    match ell.theta() {
        Some(t) => Ok((t, false)),
        None => Ok((fit_theta(ell)?, true)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRow<T> {
    pub p: T,
    pub x: T,
    pub computed: T,
    pub closed_form: T,
    /// |computed − closed form| / (1 + |closed form|).
    pub residual: T,
}

#[derive(Clone, Debug)]
pub struct ResidualTable<T> {
    pub rows: Vec<ResidualRow<T>>,
    pub max_residual: T,
}

impl<T: Real> ResidualTable<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,x,computed,closed_form,residual\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.6e}\n",
                r.p.as_f64(),
                r.x.as_f64(),
                r.computed.as_f64(),
                r.closed_form.as_f64(),
                r.residual.as_f64()
            ));
        }
        out
    }
}

/// Power-profile operator values against their closed forms over a grid.
pub fn signed_residual_report<T: Real>(idx: &StableIndex<T>, p_grid: &[T], x_grid: &[T]) -> Result<ResidualTable<T>> {
    signed_residual_report_with(idx, p_grid, x_grid, &FracLapOptions::default())
}

pub fn signed_residual_report_with<T: Real>(
    idx: &StableIndex<T>,
    p_grid: &[T],
    x_grid: &[T],
    opts: &FracLapOptions<T>,
) -> Result<ResidualTable<T>> {
    let mut rows = Vec::with_capacity(p_grid.len() * x_grid.len());
    let mut max_residual = T::zero();
    for &p in p_grid {
        let profile = PowerProfile::new(p);
        let c = c_dap(idx, p)? - c_dap(idx, idx.alpha() * T::lit(0.5))?;
        for &x in x_grid {
            let computed = frac_lap_profile_with(idx, &profile, x, opts)?;
            let closed_form = c * x.powf(p - idx.alpha());
            let residual = (computed - closed_form).abs() / (T::one() + closed_form.abs());
            max_residual = max_residual.max(residual);
            rows.push(ResidualRow {
                p,
                x,
                computed,
                closed_form,
                residual,
            });
        }
    }
    Ok(ResidualTable { rows, max_residual })
}
