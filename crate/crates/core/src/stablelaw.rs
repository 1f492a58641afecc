//! Closed-form objects of the isotropic α-stable theory: normalising
//! constants, the half-space Poisson kernel, the centre-start ball exit law
//! and the barrier profiles Φ, Ψ, χ.

use crate::error::{param, Error, Result};
use crate::moduli::ModulusSpec;
use crate::quadrature::{tanh_sinh, QuadOptions};
use crate::scalar::{dist, norm, Real};
use crate::special::{beta_reg, ln_gamma};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// Stability index α ∈ (0, 2) and dimension d ≥ 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableIndex<T> {
    alpha: T,
    d: usize,
}

impl<T: Real> StableIndex<T> {
    pub fn new(alpha: T, d: usize) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::lit(2.0)) {
            return Err(param("alpha", "stability index must lie in (0, 2)"));
        }
        if d < 2 {
            return Err(param("d", "dimension must be at least 2"));
        }
        Ok(Self { alpha, d })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableConstants<T> {
    /// A_{d,α}, the generator normalisation.
    pub a: T,
    /// C_{d,α}, the ball and half-space Poisson kernel constant.
    pub c: T,
    /// ∫_{ℝ^{d-1}} (|z|² + 1)^{-(d+α)/2} dz.
    pub kappa_proj: T,
}

pub fn stable_constants<T: Real>(idx: &StableIndex<T>) -> StableConstants<T> {
    let a = idx.alpha.as_f64();
    let d = idx.d as f64;
    let pi = std::f64::consts::PI;
    // |Γ(-α/2)| = Γ(1 - α/2)/(α/2)
    let ln_abs_gamma_neg = ln_gamma(1.0 - a / 2.0) - (a / 2.0).ln();
    let big_a = (a * 2f64.ln() + ln_gamma((d + a) / 2.0) - d / 2.0 * pi.ln() - ln_abs_gamma_neg).exp();
    let c = (ln_gamma(d / 2.0) - (d / 2.0 + 1.0) * pi.ln()).exp() * (pi * a / 2.0).sin();
    let kappa = ((d - 1.0) / 2.0 * pi.ln() + ln_gamma((1.0 + a) / 2.0) - ln_gamma((d + a) / 2.0)).exp();
    StableConstants {
        a: T::lit(big_a),
        c: T::lit(c),
        kappa_proj: T::lit(kappa),
    }
}

/// ∫_0^1 (t^p − 1)(1 − t^{α−p−1})/(1 − t)^{1+α} dt, the one-dimensional
/// principal-value integral p.v.∫_0^∞ (s^p − 1)|s − 1|^{-1-α} ds folded onto (0, 1).
///
/// On [1/2, 1] the product form is integrated directly. On [0, 1/2] the
/// integrand is expanded into power terms c t^e (1 − t)^{-1-α}; terms with
/// e < 0 have their singular part c t^e integrated exactly, which keeps the
/// p → α⁻ and p → −1⁺ growth under control.
pub fn profile_integral<T: Real>(alpha: T, p: T, rel_tol: T) -> Result<T> {
    let one = T::one();
    let q = alpha - p - one;
    let opts = QuadOptions {
        rel_tol,
        abs_tol: rel_tol * T::lit(1e-2),
        max_subdivisions: 14,
    };
    let right = |_t: T, _da: T, db: T| {
        let lt = (-db).ln_1p();
        let num = (p * lt).exp_m1() * -(q * lt).exp_m1();
        num / db.powf(one + alpha)
    };
    let half = T::lit(0.5);
    let upper = tanh_sinh(right, half, one, &opts)?.value;
    let terms = [(one, p), (-one, alpha - one), (-one, T::zero()), (one, q)];
    let left = |t: T, _da: T, _db: T| {
        let lt = t.ln();
        let wm1 = (-(one + alpha) * (-t).ln_1p()).exp_m1();
        terms
            .iter()
            .map(|&(c, e)| {
                let pw = c * (e * lt).exp();
                if e < T::zero() {
                    pw * wm1
                } else {
                    pw * (wm1 + one)
                }
            })
            .sum::<T>()
    };
    let regular = tanh_sinh(left, T::zero(), half, &opts)?.value;
    let exact: T = terms
        .iter()
        .filter(|&&(_, e)| e < T::zero())
        .map(|&(c, e)| c * half.powf(e + one) / (e + one))
        .sum();
    Ok(upper + regular + exact)
}

/// C(d, α, p) = κ_proj · ∫_0^1 (t^p − 1)(1 − t^{α−p−1})/(1 − t)^{1+α} dt, so that
/// p.v.∫_{ℝ^d_+}(y_d^p − x_d^p)|x − y|^{-d-α} dy = C(d, α, p) x_d^{p−α}.
pub fn c_dap<T: Real>(idx: &StableIndex<T>, p: T) -> Result<T> {
    if !(p > -T::one() && p < idx.alpha) {
        return Err(Error::Domain(format!(
            "C(d, α, p) needs p ∈ (−1, α); got p = {} with α = {}",
            p.as_f64(),
            idx.alpha.as_f64()
        )));
    }
    let k = stable_constants(idx).kappa_proj;
    let tol = T::lit(1e-11).max(T::epsilon() * T::lit(64.0));
    Ok(k * profile_integral(idx.alpha, p, tol)?)
}

/// Half-space Poisson kernel C_{d,α} x_d^{α/2} / (|z_d|^{α/2} |x − z|^d).
pub fn halfspace_poisson<T: Real>(idx: &StableIndex<T>, x: &[T], z: &[T]) -> Result<T> {
    let d = idx.d;
    if x.len() != d || z.len() != d {
        return Err(Error::Domain("point dimension mismatch".into()));
    }
    if !(x[d - 1] > T::zero()) || !(z[d - 1] < T::zero()) {
        return Err(Error::Domain("Poisson kernel needs x_d > 0 and z_d < 0".into()));
    }
    let c = stable_constants(idx).c;
    let half = idx.alpha * T::lit(0.5);
    Ok(c * x[d - 1].powf(half) / ((-z[d - 1]).powf(half) * dist(x, z).powi(d as i32)))
}

/// Poisson kernel of B(0, r) from the centre: C_{d,α} r^α / ((|y|² − r²)^{α/2} |y|^d).
pub fn ball_poisson_center<T: Real>(idx: &StableIndex<T>, r: T, y: &[T]) -> Result<T> {
    let ny = norm(y);
    if y.len() != idx.d || !(ny > r) {
        return Err(Error::Domain("ball Poisson kernel needs |y| > r".into()));
    }
    let c = stable_constants(idx).c;
    Ok(c * r.powf(idx.alpha) / ((ny * ny - r * r).powf(idx.alpha * T::lit(0.5)) * ny.powi(idx.d as i32)))
}

/// Exit position of the stable process from the unit ball started at its centre:
/// radius W^{-1/2} with W ~ Beta(α/2, 1 − α/2), uniform direction.
#[derive(Clone, Debug)]
pub struct BallExitLaw {
    alpha: f64,
    dim: usize,
    beta: Beta<f64>,
}

impl BallExitLaw {
    pub fn new<T: Real>(idx: &StableIndex<T>) -> Self {
        let alpha = idx.alpha.as_f64();
        Self {
            alpha,
            dim: idx.d,
            beta: Beta::new(alpha / 2.0, 1.0 - alpha / 2.0).expect("valid beta parameters"),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exit radius ρ > 1 from the unit ball.
    #[inline]
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let w = self.beta.sample(rng);
            let r = w.powf(-0.5);
            if w > 0.0 && r > 1.0 && r.is_finite() {
                return r;
            }
        }
    }

    /// Writes a uniform unit vector into `out`.
    #[inline]
    pub fn sample_direction<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        if self.dim == 2 {
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            out[0] = T::lit(th.cos());
            out[1] = T::lit(th.sin());
            return;
        }
        loop {
            let mut n2 = 0.0;
            for o in out.iter_mut() {
                let g: f64 = StandardNormal.sample(rng);
                *o = T::lit(g);
                n2 += g * g;
            }
            if n2 > 0.0 {
                let n = T::lit(n2.sqrt());
                for o in out.iter_mut() {
                    *o = *o / n;
                }
                return;
            }
        }
    }

    /// Exit point from the unit ball, written into `out`.
    pub fn sample_into<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        let rho = self.sample_radius(rng);
        self.sample_direction(rng, out);
        for o in out.iter_mut() {
            *o = *o * T::lit(rho);
        }
    }

    /// P(ρ ≤ r) = 1 − I_{1/r²}(α/2, 1 − α/2).
    pub fn radius_cdf(&self, r: f64) -> f64 {
        if r <= 1.0 {
            0.0
        } else {
            1.0 - beta_reg(self.alpha / 2.0, 1.0 - self.alpha / 2.0, 1.0 / (r * r))
        }
    }

    /// Radial density (2/π) sin(πα/2) ρ^{-1}(ρ² − 1)^{-α/2} on ρ > 1.
    pub fn radius_density(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return 0.0;
        }
        let pi = std::f64::consts::PI;
        2.0 / pi * (pi * self.alpha / 2.0).sin() / r * (r * r - 1.0).powf(-self.alpha / 2.0)
    }
}

/// One exact exit point from the unit ball started at the centre.
pub fn ball_exit_sample<T: Real, R: Rng + ?Sized>(idx: &StableIndex<T>, rng: &mut R) -> Vec<T> {
    let law = BallExitLaw::new(idx);
    let mut out = vec![T::zero(); idx.d];
    law.sample_into(rng, &mut out);
    out
}

/// η = ((α − 2θ) ∧ (2 − α))/4.
pub fn eta<T: Real>(alpha: T, theta: T) -> T {
    (alpha - T::lit(2.0) * theta).min(T::lit(2.0) - alpha) * T::lit(0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierVariant {
    Phi,
    Psi,
    Chi,
}

/// Parameters of the barrier profiles Φ_{R,λ,k}, Ψ_{R,λ,k} and χ_R.
#[derive(Clone, Debug)]
pub struct BarrierParams<T> {
    pub alpha: T,
    pub radius: T,
    pub lambda: T,
    pub k: T,
    pub ell: ModulusSpec<T>,
    pub eta: Option<T>,
}

impl<T: Real> BarrierParams<T> {
    /// Validates the parameters; with `theta` given, η is set and λℓ(R) < η is enforced.
    pub fn new(idx: &StableIndex<T>, radius: T, lambda: T, k: T, ell: ModulusSpec<T>, theta: Option<T>) -> Result<Self> {
        if !(radius > T::zero() && radius <= T::one()) {
            return Err(param("R", "must lie in (0, 1]"));
        }
        if !(lambda > T::zero()) {
            return Err(param("lambda", "must be positive"));
        }
        if !(k > T::zero()) {
            return Err(param("k", "must be positive"));
        }
        let eta = theta.map(|th| eta(idx.alpha, th));
        let p = Self {
            alpha: idx.alpha,
            radius,
            lambda,
            k,
            ell,
            eta,
        };
        p.check_hypothesis()?;
        Ok(p)
    }

    fn check_hypothesis(&self) -> Result<()> {
        if let Some(eta) = self.eta {
            if !(eta > T::zero()) {
                return Err(Error::Config {
                    path: "eta".into(),
                    message: format!("η = {} is not positive (needs 2θ < α)", eta.as_f64()),
                });
            }
            let lr = self.ell.eval(self.radius)?;
            if !(self.lambda * lr < eta) {
                return Err(Error::Config {
                    path: "lambda".into(),
                    message: format!(
                        "hypothesis λ·ℓ(R) < η fails: {} · {} = {} ≥ {}",
                        self.lambda.as_f64(),
                        lr.as_f64(),
                        (self.lambda * lr).as_f64(),
                        eta.as_f64()
                    ),
                });
            }
        }
        Ok(())
    }

    /// ∫_{kr}^R ℓ(u ∧ R)/u du (negative when kr > R).
    pub fn exponent_integral(&self, r: T) -> Result<T> {
        let kr = self.k * r;
        if kr <= self.radius {
            self.ell.dini_integral(kr, self.radius)
        } else {
            Ok(-self.ell.eval(self.radius)? * (kr / self.radius).ln())
        }
    }

    fn sign(variant: BarrierVariant) -> T {
        match variant {
            BarrierVariant::Phi => -T::one(),
            _ => T::one(),
        }
    }

    /// Φ, Ψ or χ at r.
    pub fn eval(&self, r: T, variant: BarrierVariant) -> Result<T> {
        if r <= T::zero() {
            return Ok(T::zero());
        }
        let half = self.alpha * T::lit(0.5);
        match variant {
            BarrierVariant::Chi => {
                let eta = self.eta.ok_or_else(|| param("eta", "χ needs η (supply θ)"))?;
                Ok((r / self.radius).powf(half + eta).min(T::one()))
            }
            _ => {
                let g = self.exponent_integral(r)?;
                Ok((r / self.radius).powf(half) * (Self::sign(variant) * self.lambda * g).exp())
            }
        }
    }

    /// Logarithmic slope g(r) = r F′(r)/F(r) and its derivative g′(r) for Φ/Ψ.
    pub fn log_slope(&self, r: T, variant: BarrierVariant) -> (T, T) {
        let half = self.alpha * T::lit(0.5);
        let s = -Self::sign(variant);
        let kr = self.k * r;
        if kr < self.radius {
            let (l, dl, _) = self.ell.derivatives(kr);
            (half + s * self.lambda * l, s * self.lambda * self.k * dl)
        } else {
            (half + s * self.lambda * self.ell.value(self.radius), T::zero())
        }
    }

    /// (F, F′, F″) for Φ/Ψ using F″ = F (g² − g + r g′)/r².
    pub fn derivatives(&self, r: T, variant: BarrierVariant) -> Result<(T, T, T)> {
        let f = self.eval(r, variant)?;
        let (g, dg) = self.log_slope(r, variant);
        Ok((f, f * g / r, f * (g * g - g + r * dg) / (r * r)))
    }
}

/// Outcome of the iteration lemma check.
#[derive(Clone, Copy, Debug)]
pub struct IterationCheck {
    /// min_{0≤n≤n_max} c0 n!/b^n.
    pub min_over_n: f64,
    pub argmin: usize,
    /// e^{3/2} c0 e^{-b/2}.
    pub lemma_bound: f64,
    /// max_{0≤n≤n_max} b^n/(c0 n!).
    pub max_over_n: f64,
    /// e^{-3/2} c0^{-1} e^{b/2}.
    pub dual_bound: f64,
    pub holds: bool,
    pub dual_holds: bool,
}

/// Enumerates c0 n!/b^n in log space and compares with the lemma's bounds.
pub fn iteration_bound_check(b: f64, c0: f64, n_max: usize) -> Result<IterationCheck> {
    if !(b > 0.0) || !(c0 > 0.0) {
        return Err(param("b", "b and c0 must be positive"));
    }
    if (n_max as f64) < b.ceil() + 2.0 {
        return Err(param("n_max", "must be at least ceil(b) + 2"));
    }
    let lc = c0.ln();
    let mut best = f64::INFINITY;
    let mut argmin = 0;
    for n in 0..=n_max {
        let v = lc + ln_gamma(n as f64 + 1.0) - n as f64 * b.ln();
        if v < best {
            best = v;
            argmin = n;
        }
    }
    let lemma_ln = 1.5 + lc - b / 2.0;
    let dual_ln = -1.5 - lc + b / 2.0;
    let max_ln = -best;
    Ok(IterationCheck {
        min_over_n: best.exp(),
        argmin,
        lemma_bound: lemma_ln.exp(),
        max_over_n: max_ln.exp(),
        dual_bound: dual_ln.exp(),
        holds: best <= lemma_ln + 1e-12,
        dual_holds: max_ln >= dual_ln - 1e-12,
    })
}

/// n! ≤ e n^{1/2} (n/e)^n, checked in log space.
pub fn stirling_holds(n: u64) -> bool {
    if n == 0 {
        return true;
    }
    let nf = n as f64;
    let lhs = ln_gamma(nf + 1.0);
    let rhs = 1.0 + 0.5 * nf.ln() + nf * (nf.ln() - 1.0);
    lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
}

/// Shape of the free transition density envelope, t^{-d/α} ∧ t/|x − y|^{d+α}.
pub fn free_kernel_envelope<T: Real>(idx: &StableIndex<T>, t: T, x: &[T], y: &[T]) -> Result<(T, T)> {
    if !(t > T::zero()) {
        return Err(param("t", "time must be positive"));
    }
    let d = T::from_usize_lossy(idx.d);
    let r = dist(x, y);
    let near = t.powf(-d / idx.alpha);
    let v = if r == T::zero() {
        near
    } else {
        near.min(t / r.powf(d + idx.alpha))
    };
    Ok((v, v))
}
