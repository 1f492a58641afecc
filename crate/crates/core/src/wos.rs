//! Walk-on-spheres for the killed isotropic α-stable process.
//!
//! From x the walker jumps to x + r(x)·Y with Y the exit position of the unit
//! ball started at its centre and r(x) a certified interior radius. Since the
//! process started at the centre of a ball inside D leaves that ball at a point
//! distributed as r·Y, the first landing point outside D is an exact draw of
//! X_{τ_D}.

use crate::engine::{run_blocks, run_blocks_with, ProgressHook, Sample, Tally};
use crate::error::{Error, Result};
use crate::geometry::{classify_collar, CollarClass, Domain, GraphSign};
use crate::moduli::ModulusSpec;
use crate::scalar::{dist, Real};
use crate::stablelaw::{BallExitLaw, StableIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Membership test for an exit-position target.
pub type TargetFn<'a> = &'a (dyn Fn(&[f64]) -> bool + Sync);

/// Walk parameters.
#[derive(Clone)]
pub struct WosOptions {
    /// Safety factor γ applied to the certified distance.
    pub safety: f64,
    pub max_steps: u64,
    /// Largest tolerated fraction of truncated walks.
    pub max_discard_fraction: f64,
    /// Estimator used for ball targets.
    pub ball_estimator: BallEstimator,
    pub progress: Option<ProgressHook>,
}

/// How a ball target B(c, b) lying outside the domain is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallEstimator {
    /// 1 if the exit point lies in the ball.
    Indicator,
    /// Sum over steps of the probability that the next jump lands in the
    /// ball. Jumps into the ball end the walk, so the sum has the same mean
    /// as the indicator and a much smaller variance for small targets.
    NextJump,
}

impl Default for WosOptions {
    fn default() -> Self {
        Self {
            safety: 0.999,
            max_steps: 100_000,
            max_discard_fraction: 1e-6,
            ball_estimator: BallEstimator::NextJump,
            progress: None,
        }
    }
}

impl fmt::Debug for WosOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WosOptions")
            .field("safety", &self.safety)
            .field("max_steps", &self.max_steps)
            .field("max_discard_fraction", &self.max_discard_fraction)
            .field("ball_estimator", &self.ball_estimator)
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

/// Exit position of one walk.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkOutcome<T> {
    pub exit_point: Vec<T>,
    pub steps: u64,
    /// Largest distance from the start over the visited points.
    pub max_excursion: T,
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_walks: u64,
    pub seed: u64,
    pub mean_steps: f64,
    pub discarded: u64,
}

impl Estimate {
    /// Estimate of an indicator: stderr = √(p̂(1 − p̂)/n).
    pub fn from_indicator(t: &Tally, seed: u64) -> Self {
        let n = t.n.max(1) as f64;
        let p = t.hits as f64 / n;
        Self {
            mean: p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            n_walks: t.n,
            seed,
            mean_steps: t.steps as f64 / n,
            discarded: t.discarded,
        }
    }

    /// Estimate of a general mean with the sample standard deviation.
    pub fn from_values(t: &Tally, seed: u64) -> Self {
        let n = t.n.max(1) as f64;
        let mean = t.sum / n;
        let var = if t.n > 1 {
            ((t.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
            n_walks: t.n,
            seed,
            mean_steps: t.steps as f64 / n,
            discarded: t.discarded,
        }
    }

    /// Multiplies mean and stderr by `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.mean *= c;
        self.stderr *= c;
        self
    }

    /// stderr / mean (infinite for a zero mean).
    pub fn relative_error(&self) -> f64 {
        if self.mean == 0.0 {
            f64::INFINITY
        } else {
            self.stderr / self.mean.abs()
        }
    }
}

/// One walk from `start` until it lands outside `domain`.
pub fn run_walk<T: Real, R: Rng + ?Sized>(
    domain: &Domain<T>,
    law: &BallExitLaw,
    start: &[T],
    rng: &mut R,
    max_steps: u64,
    safety: T,
) -> Result<WalkOutcome<T>> {
    run_walk_observed(domain, law, start, rng, max_steps, safety, |_, _| Ok(()))
}

/// As [`run_walk`], calling `observe(x, r)` before each jump from x with radius r.
pub fn run_walk_observed<T: Real, R: Rng + ?Sized, O: FnMut(&[T], T) -> Result<()>>(
    domain: &Domain<T>,
    law: &BallExitLaw,
    start: &[T],
    rng: &mut R,
    max_steps: u64,
    safety: T,
    mut observe: O,
) -> Result<WalkOutcome<T>> {
    if start.len() != domain.dim() || law.dim() != domain.dim() {
        return Err(Error::Domain("walk start, law and domain dimensions differ".into()));
    }
    let mut r = domain
        .locate(start, safety)
        .ok_or_else(|| Error::Domain("walk start lies outside the domain".into()))?;
    let d = start.len();
    let mut x = start.to_vec();
    let mut y = vec![T::zero(); d];
    let mut excursion = T::zero();
    for step in 1..=max_steps {
        if !(r > T::zero()) {
            return Err(Error::Geometry(format!("non-positive interior radius {}", r.as_f64())));
        }
        observe(&x, r)?;
        law.sample_into(rng, &mut y);
        for k in 0..d {
            x[k] = x[k] + r * y[k];
        }
        excursion = excursion.max(dist(&x, start));
        match domain.locate(&x, safety) {
            Some(next) => r = next,
            None => {
                return Ok(WalkOutcome {
                    exit_point: x,
                    steps: step,
                    max_excursion: excursion,
                })
            }
        }
    }
    Err(Error::Truncation {
        discarded: 1,
        total: 1,
    })
}

/// Batch walk runner shared by the estimators.
#[derive(Clone, Debug)]
pub struct Wos<T> {
    pub domain: Domain<T>,
    pub law: BallExitLaw,
    pub opts: WosOptions,
}

impl<T: Real> Wos<T> {
    pub fn new(idx: &StableIndex<T>, domain: Domain<T>) -> Result<Self> {
        if idx.dim() != domain.dim() {
            return Err(Error::Domain("index and domain dimensions differ".into()));
        }
        Ok(Self {
            domain,
            law: BallExitLaw::new(idx),
            opts: WosOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: WosOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Runs n walks and accumulates `score(exit)`; discards truncated walks.
    pub fn tally<F>(&self, start: &[T], n: u64, seed: u64, score: F) -> Result<Tally>
    where
        F: Fn(&WalkOutcome<T>) -> Result<f64> + Sync,
    {
        if n == 0 {
            return Err(Error::Parameter {
                name: "n",
                reason: "need at least one walk".into(),
            });
        }
        if self.domain.locate(start, T::lit(self.opts.safety)).is_none() {
            return Err(Error::Domain("walk start lies outside the domain".into()));
        }
        let safety = T::lit(self.opts.safety);
        let failure = std::sync::Mutex::new(None::<Error>);
        let tally = run_blocks(
            n,
            seed,
            |_, rng| match run_walk(&self.domain, &self.law, start, rng, self.opts.max_steps, safety) {
                Ok(w) => match score(&w) {
                    Ok(value) => Sample::Value { value, steps: w.steps },
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        Sample::Discarded
                    }
                },
                Err(Error::Truncation { .. }) => Sample::Discarded,
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    Sample::Discarded
                }
            },
            self.opts.progress.as_ref(),
        );
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        if tally.discarded as f64 > self.opts.max_discard_fraction * n as f64 {
            return Err(Error::Truncation {
                discarded: tally.discarded,
                total: n,
            });
        }
        Ok(tally)
    }

    /// P_start(X_τ ∈ A) for the indicator `target`.
    pub fn harmonic_measure<F>(&self, start: &[T], target: F, n: u64, seed: u64) -> Result<Estimate>
    where
        F: Fn(&[T]) -> bool + Sync,
    {
        let t = self.tally(start, n, seed, |w| Ok(if target(&w.exit_point) { 1.0 } else { 0.0 }))?;
        Ok(Estimate::from_indicator(&t, seed))
    }

    /// P_start(X_τ ∈ B(center, radius)) for a ball outside the domain, scored
    /// with `opts.ball_estimator`.
    pub fn ball_measure(&self, start: &[T], center: &[T], radius: T, n: u64, seed: u64) -> Result<Estimate> {
        if !ball_outside(&self.domain, center, radius)? {
            return Err(Error::Config {
                path: "target".into(),
                message: "the target ball is not certified to lie outside the domain, so exits into it are not \
                          well defined for this estimator"
                    .into(),
            });
        }
        match self.opts.ball_estimator {
            BallEstimator::Indicator => self.harmonic_measure(start, |z| dist(z, center) < radius, n, seed),
            BallEstimator::NextJump => {
                if self.domain.locate(start, T::lit(self.opts.safety)).is_none() {
                    return Err(Error::Domain("walk start lies outside the domain".into()));
                }
                let safety = T::lit(self.opts.safety);
                let c: Vec<f64> = center.iter().map(|v| v.as_f64()).collect();
                let b = radius.as_f64();
                let failure = std::sync::Mutex::new(None::<Error>);
                let tally = run_blocks(
                    n,
                    seed,
                    |_, rng| {
                        let mut acc = 0.0;
                        let res = run_walk_observed(&self.domain, &self.law, start, rng, self.opts.max_steps, safety, |x, r| {
                            acc += next_jump_probability(&self.law, x, r.as_f64(), &c, b)?;
                            Ok(())
                        });
                        match res {
                            Ok(w) => Sample::Value { value: acc, steps: w.steps },
                            Err(Error::Truncation { .. }) => Sample::Discarded,
                            Err(e) => {
                                failure.lock().unwrap().get_or_insert(e);
                                Sample::Discarded
                            }
                        }
                    },
                    self.opts.progress.as_ref(),
                );
                if let Some(e) = failure.into_inner().unwrap() {
                    return Err(e);
                }
                if tally.discarded as f64 > self.opts.max_discard_fraction * n as f64 {
                    return Err(Error::Truncation {
                        discarded: tally.discarded,
                        total: n,
                    });
                }
                Ok(Estimate::from_values(&tally, seed))
            }
        }
    }

    /// E_start g(X_τ) for a general exterior function.
    pub fn harmonic_expectation<F>(&self, start: &[T], g: F, n: u64, seed: u64) -> Result<Estimate>
    where
        F: Fn(&[T]) -> f64 + Sync,
    {
        let t = self.tally(start, n, seed, |w| Ok(g(&w.exit_point)))?;
        Ok(Estimate::from_values(&t, seed))
    }

    /// Several indicator targets scored on the same walks.
    pub fn harmonic_measures<F>(&self, start: &[T], targets: &[F], n: u64, seed: u64) -> Result<Vec<Estimate>>
    where
        F: Fn(&[T]) -> bool + Sync,
    {
        if self.domain.locate(start, T::lit(self.opts.safety)).is_none() {
            return Err(Error::Domain("walk start lies outside the domain".into()));
        }
        let safety = T::lit(self.opts.safety);
        let k = targets.len();
        let failure = std::sync::Mutex::new(None::<Error>);
        let tallies = run_blocks_with(
            n,
            seed,
            || vec![Tally::default(); k],
            |_, rng, acc: &mut Vec<Tally>| {
                match run_walk(&self.domain, &self.law, start, rng, self.opts.max_steps, safety) {
                    Ok(w) => {
                        for (t, f) in acc.iter_mut().zip(targets) {
                            let value = if f(&w.exit_point) { 1.0 } else { 0.0 };
                            t.push(Sample::Value { value, steps: w.steps });
                        }
                    }
                    Err(e) => {
                        if !matches!(e, Error::Truncation { .. }) {
                            failure.lock().unwrap().get_or_insert(e);
                        }
                        acc.iter_mut().for_each(|t| t.push(Sample::Discarded));
                    }
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y)),
            |a| a.first().map(|t| (t.n, t.discarded)).unwrap_or((0, 0)),
            self.opts.progress.as_ref(),
        );
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        if let Some(t) = tallies.first() {
            if t.discarded as f64 > self.opts.max_discard_fraction * n as f64 {
                return Err(Error::Truncation {
                    discarded: t.discarded,
                    total: n,
                });
            }
        }
        Ok(tallies.iter().map(|t| Estimate::from_indicator(t, seed)).collect())
    }
}

/// Whether B(center, radius) is certified to lie outside `domain`.
pub fn ball_outside<T: Real>(domain: &Domain<T>, center: &[T], radius: T) -> Result<bool> {
    use crate::geometry::DomainKind;
    let d = domain.dim();
    if center.len() != d {
        return Err(Error::Domain("target centre has the wrong dimension".into()));
    }
    Ok(match domain.kind() {
        DomainKind::Whole => false,
        DomainKind::HalfSpace => center[d - 1] + radius <= T::zero(),
        DomainKind::Ball { center: c, radius: r } => dist(center, c) >= *r + radius,
        DomainKind::Collar { base, width } => {
            base.contains(center) && base.dist_to_boundary(center)?.0 - radius >= *width
        }
        DomainKind::IntersectBall { center: c, radius: r, .. } => dist(center, c) >= *r + radius,
        DomainKind::Graph { .. } => false,
    })
}

/// Probability that the jump from x with ball radius ρ lands in B(c, b).
///
/// The landing point is x + ρ S U with S of density
/// (2/π) sin(πα/2) s^{−1}(s² − 1)^{−α/2} on s > 1 and U uniform on the sphere.
/// At distance t = ρ s the fraction of the sphere of radius t inside B(c, b) is
/// the cap of half-angle φ, and with t = D − b cos ψ (D = |c − x|) one has
/// 1 − cos φ = b² sin²ψ / (2tD), so the ψ-integrand is smooth. When the jump
/// ball nearly touches the target the density peaks at ψ ≈ 0 with width
/// √(gap/b); Gauss–Legendre panels are refined geometrically there.
pub fn next_jump_probability<T: Real>(law: &BallExitLaw, x: &[T], rho: f64, c: &[f64], b: f64) -> Result<f64> {
    use crate::quadrature::gauss_legendre;
    use crate::special::beta_reg;
    use std::f64::consts::PI;
    let big_d = x
        .iter()
        .zip(c)
        .map(|(xi, ci)| (ci - xi.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt();
    let gap = big_d - b - rho;
    if !(gap > 0.0) {
        return Err(Error::Geometry(format!(
            "jump ball of radius {rho} from a walk point reaches the target ball (gap {gap})"
        )));
    }
    let alpha = law.alpha();
    let dim = law.dim();
    let pref = 2.0 / PI * (PI * alpha / 2.0).sin() * rho.powf(alpha);
    let integrand = |psi: f64| -> f64 {
        let (sp, sh) = (psi.sin(), (psi * 0.5).sin());
        let t = big_d - b * psi.cos();
        let t_minus = gap + 2.0 * b * sh * sh;
        let density = pref / t * (t_minus * (t + rho)).powf(-alpha / 2.0);
        let one_minus = (b * b * sp * sp / (2.0 * t * big_d)).min(2.0);
        let cap = if dim == 2 {
            2.0 * (one_minus * 0.5).sqrt().min(1.0).asin() / PI
        } else {
            let sin2 = (one_minus * (2.0 - one_minus)).clamp(0.0, 1.0);
            let half_cap = 0.5 * beta_reg((dim as f64 - 1.0) / 2.0, 0.5, sin2);
            if one_minus <= 1.0 {
                half_cap
            } else {
                1.0 - half_cap
            }
        };
        density * cap * b * sp
    };
    let mut lo = 0.0;
    let mut hi = 2.0 * (gap / b).sqrt();
    let mut total = 0.0;
    while hi < PI * 0.5 {
        total += gauss_legendre(integrand, lo, hi);
        lo = hi;
        hi *= 2.0;
    }
    total += gauss_legendre(integrand, lo, PI);
    Ok(total)
}

/// P_x(X_{τ_{D(R)}} ∈ D): the walk runs in the collar D(R) = {x ∈ D : δ_D(x) < R}
/// and succeeds when it leaves through the deep part {δ_D ≥ R}.
pub fn collar_survival<T: Real>(
    idx: &StableIndex<T>,
    base: &Domain<T>,
    radius: T,
    start: &[T],
    n: u64,
    seed: u64,
    opts: &WosOptions,
) -> Result<Estimate> {
    let collar = Domain::collar(base.clone(), radius)?;
    let wos = Wos::new(idx, collar)?.with_options(opts.clone());
    let t = wos.tally(start, n, seed, |w| match classify_collar(base, radius, &w.exit_point) {
        CollarClass::Outside => Ok(0.0),
        CollarClass::Deep => Ok(1.0),
        CollarClass::Inside { .. } => Err(Error::Geometry(
            "walk exited the collar at a point still inside it".into(),
        )),
    })?;
    Ok(Estimate::from_indicator(&t, seed))
}

/// Which of the two renormalised exit probabilities to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaXi {
    /// Collar of D_ℓ of width 32KR, target B(34KR e_d, R), K = 1 + ℓ(8).
    Theta,
    /// Collar of D_{−ℓ} of width 8LR, target B(10LR e_d, R), L = 1 + ℓ(1).
    Xi,
}

/// Geometry of a Θ/Ξ experiment at scale R.
#[derive(Clone, Debug)]
pub struct ThetaXiSetup<T> {
    pub base: Domain<T>,
    pub collar_width: T,
    pub target_center: Vec<T>,
    pub target_radius: T,
}

impl<T: Real> ThetaXiSetup<T> {
    pub fn new(variant: ThetaXi, d: usize, ell: &ModulusSpec<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero() && radius <= T::one()) {
            return Err(Error::Parameter {
                name: "R",
                reason: "must lie in (0, 1]".into(),
            });
        }
        let (sign, width, height) = match variant {
            ThetaXi::Theta => {
                let k = T::one() + ell.eval(T::lit(8.0))?;
                (GraphSign::Above, T::lit(32.0) * k * radius, T::lit(34.0) * k * radius)
            }
            ThetaXi::Xi => {
                let l = T::one() + ell.eval(T::one())?;
                (GraphSign::Below, T::lit(8.0) * l * radius, T::lit(10.0) * l * radius)
            }
        };
        let base = Domain::graph(d, ell.clone(), sign)?;
        let mut c = vec![T::zero(); d];
        c[d - 1] = height;
        let (lower, _) = base.dist_to_boundary(&c)?;
        if lower - radius < width {
            return Err(Error::Config {
                path: "ell".into(),
                message: format!(
                    "target ball B({}·e_d, {}) meets the collar of width {} (δ(centre) ≥ {} only); \
                     the boundary graph is too steep at this scale, use a modulus with smaller ℓ(1)",
                    height.as_f64(),
                    radius.as_f64(),
                    width.as_f64(),
                    lower.as_f64()
                ),
            });
        }
        Ok(Self {
            base,
            collar_width: width,
            target_center: c,
            target_radius: radius,
        })
    }

    pub fn in_target(&self, z: &[T]) -> bool {
        dist(z, &self.target_center) < self.target_radius
    }
}

/// Θ(r) or Ξ(r): (R/r)^{α/2} times the probability that the walk from r e_d
/// leaves the collar into the target ball.
#[allow(clippy::too_many_arguments)]
pub fn theta_xi<T: Real>(
    idx: &StableIndex<T>,
    variant: ThetaXi,
    ell: &ModulusSpec<T>,
    radius: T,
    r: T,
    n: u64,
    seed: u64,
    opts: &WosOptions,
) -> Result<Estimate> {
    if !(r > T::zero() && r <= radius) {
        return Err(Error::Domain(format!(
            "Θ/Ξ need 0 < r ≤ R, got r = {} and R = {}",
            r.as_f64(),
            radius.as_f64()
        )));
    }
    let d = idx.dim();
    let setup = ThetaXiSetup::new(variant, d, ell, radius)?;
    let collar = Domain::collar(setup.base.clone(), setup.collar_width)?;
    let wos = Wos::new(idx, collar)?.with_options(opts.clone());
    let mut start = vec![T::zero(); d];
    start[d - 1] = r;
    let e = wos.ball_measure(&start, &setup.target_center, setup.target_radius, n, seed)?;
    let scale = (radius / r).as_f64().powf(idx.alpha().as_f64() * 0.5);
    Ok(e.scaled(scale))
}
