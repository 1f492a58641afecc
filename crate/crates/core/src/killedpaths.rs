//! Time-resolved simulation of the killed process on discrete skeletons.
//!
//! Increments come from subordination: a positive (α/2)-stable time change of
//! Brownian motion. Skeleton steps shrink near the boundary; survival is
//! biased high because excursions between skeleton points are missed, and the
//! bias is reported as the difference between step h and h/2.

use crate::engine::run_blocks_with;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::scalar::Real;
use crate::stablelaw::StableIndex;
use crate::wos::{collar_survival, Estimate, WosOptions};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Skeleton discretisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    /// Base time step away from the boundary.
    pub h: f64,
    /// Distance scale below which the step is refined: h·min(1, (δ/σ)^α).
    pub sigma: f64,
    /// Floor for the refined step, as a fraction of h.
    pub min_step_fraction: f64,
    /// Per-path step budget; exceeding it is reported as step underflow.
    pub max_steps: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            sigma: 1.0,
            min_step_fraction: 1e-9,
            max_steps: 10_000_000,
        }
    }
}

impl PathConfig {
    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        let bad = |name: &'static str, reason: &'static str| {
            Err(Error::Parameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h", "must be positive and finite");
        }
        if self.h > horizon {
            return bad("h", "must not exceed the horizon");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma", "must be positive");
        }
        if !(self.min_step_fraction > 0.0 && self.min_step_fraction <= 1.0) {
            return bad("min_step_fraction", "must lie in (0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be positive");
        }
        Ok(())
    }

    /// Step used at distance `delta` from the boundary.
    pub fn step(&self, alpha: f64, delta: f64) -> f64 {
        let refine = if delta >= self.sigma {
            1.0
        } else {
            (delta / self.sigma).max(0.0).powf(alpha)
        };
        self.h * refine.max(self.min_step_fraction)
    }
}

/// Standard positive a-stable variable, E[e^{−λS}] = e^{−λ^a}, 0 < a < 1,
/// by Kanter's representation from a uniform angle and an exponential.
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    loop {
        let u = rng.random::<f64>() * std::f64::consts::PI;
        let e: f64 = Exp1.sample(rng);
        if u <= 0.0 || e <= 0.0 {
            continue;
        }
        // S = (A(U)/E)^{(1−a)/a}, A(u) = (sin(au)^a sin((1−a)u)^{1−a} / sin u)^{1/(1−a)}
        let ln_s = (a * u).sin().ln() - u.sin().ln() / a + (1.0 - a) / a * (((1.0 - a) * u).sin().ln() - e.ln());
        let s = ln_s.exp();
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

/// Samples X_h − X_0 into `out`: √(2S)·Z with S = h^{2/α}·S₁, so that the
/// characteristic function is e^{−h|ξ|^α}.
pub fn stable_increment<T: Real, R: Rng + ?Sized>(idx: &StableIndex<T>, h: f64, rng: &mut R, out: &mut [T]) {
    let alpha = idx.alpha().as_f64();
    let s1 = positive_stable(alpha / 2.0, rng);
    let scale = h.powf(1.0 / alpha) * (2.0 * s1).sqrt();
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = T::lit(scale * z);
    }
}

/// Skeleton time of the first point outside `domain`, if it is ≤ `horizon`,
/// together with the number of steps taken.
pub fn kill_time<T: Real, R: Rng + ?Sized>(
    idx: &StableIndex<T>,
    domain: &Domain<T>,
    start: &[T],
    horizon: f64,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<(Option<f64>, u64)> {
    let alpha = idx.alpha().as_f64();
    let mut x = start.to_vec();
    let mut dx = vec![T::zero(); x.len()];
    let mut t = 0.0;
    let mut steps = 0u64;
    while t < horizon {
        if steps >= cfg.max_steps {
            return Err(Error::Numeric(format!(
                "skeleton step underflow: {steps} steps reached time {t:.3e} of {horizon:.3e}"
            )));
        }
        let (_, delta) = domain.dist_to_boundary(&x)?;
        let h = cfg.step(alpha, delta.as_f64());
        stable_increment(idx, h, rng, &mut dx);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi = *xi + *di;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("skeleton left the representable range".into()));
        }
        t += h;
        steps += 1;
        if t <= horizon && !domain.contains(&x) {
            return Ok((Some(t), steps));
        }
    }
    Ok((None, steps))
}

#[derive(Clone, Debug, Default)]
struct SurvivalAcc {
    n: u64,
    alive: Vec<u64>,
    steps: u64,
}

/// Survival fractions at each of `times` from one set of skeletons (so the
/// curve is nonincreasing walk by walk).
pub fn survival_curve<T: Real>(
    idx: &StableIndex<T>,
    domain: &Domain<T>,
    start: &[T],
    times: &[f64],
    cfg: &PathConfig,
    n: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Parameter {
            name: "times",
            reason: "need at least one positive finite time".into(),
        });
    }
    if n == 0 {
        return Err(Error::Parameter {
            name: "n",
            reason: "need at least one path".into(),
        });
    }
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    cfg.validate(horizon)?;
    if start.len() != domain.dim() || !domain.contains(start) {
        return Err(Error::Domain("path start lies outside the domain".into()));
    }
    let failure = std::sync::Mutex::new(None::<Error>);
    let acc = run_blocks_with(
        n,
        seed,
        || SurvivalAcc {
            alive: vec![0; times.len()],
            ..Default::default()
        },
        |_, rng, a: &mut SurvivalAcc| match kill_time(idx, domain, start, horizon, cfg, rng) {
            Ok((killed, steps)) => {
                a.n += 1;
                a.steps += steps;
                for (c, &t) in a.alive.iter_mut().zip(times) {
                    if killed.is_none_or(|k| k > t) {
                        *c += 1;
                    }
                }
            }
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
            }
        },
        |a, b| {
            a.n += b.n;
            a.steps += b.steps;
            for (x, y) in a.alive.iter_mut().zip(&b.alive) {
                *x += y;
            }
        },
        |a| (a.n, 0),
        None,
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let nn = acc.n as f64;
    Ok(acc
        .alive
        .iter()
        .map(|&k| {
            let p = k as f64 / nn;
            Estimate {
                mean: p,
                stderr: (p * (1.0 - p) / nn).sqrt(),
                n_walks: acc.n,
                seed,
                mean_steps: acc.steps as f64 / nn,
                discarded: 0,
            }
        })
        .collect())
}

/// Survival at one horizon with its skeleton-bias estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub h: f64,
    /// Estimate at step h.
    pub survival: Estimate,
    /// Estimate at step h/2 with the same seed.
    pub refined: Estimate,
    /// survival − refined: first-order size of the skeleton bias.
    pub bias_estimate: f64,
}

/// P_x(τ_D > t) on skeletons of step h, with the h/2 difference as bias.
pub fn survival_probability<T: Real>(
    idx: &StableIndex<T>,
    domain: &Domain<T>,
    start: &[T],
    t: f64,
    cfg: &PathConfig,
    n: u64,
    seed: u64,
) -> Result<SurvivalEstimate> {
    let coarse = survival_curve(idx, domain, start, &[t], cfg, n, seed)?[0];
    let fine_cfg = cfg.with_step(cfg.h / 2.0);
    let fine = survival_curve(idx, domain, start, &[t], &fine_cfg, n, seed)?[0];
    Ok(SurvivalEstimate {
        t,
        h: cfg.h,
        survival: coarse,
        refined: fine,
        bias_estimate: coarse.mean - fine.mean,
    })
}

/// One line of the survival CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub x_tag: String,
    pub delta: f64,
    pub t: f64,
    pub survival: f64,
    pub stderr: f64,
    pub h: f64,
    pub bias_estimate: f64,
}

impl SurvivalRow {
    pub fn new(x_tag: impl Into<String>, delta: f64, s: &SurvivalEstimate) -> Self {
        Self {
            x_tag: x_tag.into(),
            delta,
            t: s.t,
            survival: s.survival.mean,
            stderr: s.survival.stderr,
            h: s.h,
            bias_estimate: s.bias_estimate,
        }
    }
}

pub const SURVIVAL_HEADER: &str = "x_tag,delta,t,survival,stderr,h,bias_estimate";

/// Renders survival rows as CSV ('.' decimals, LF line ends).
pub fn survival_csv(rows: &[SurvivalRow]) -> String {
    let mut s = String::from(SURVIVAL_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.x_tag, r.delta, r.t, r.survival, r.stderr, r.h, r.bias_estimate
        );
    }
    s
}

/// Settings for [`factorization_check`].
#[derive(Clone, Debug)]
pub struct FactorizationConfig {
    pub path: PathConfig,
    /// Collar width is ε₁·t^{1/α}.
    pub epsilon: f64,
    pub wos: WosOptions,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            path: PathConfig::default(),
            epsilon: 0.1,
            wos: WosOptions::default(),
        }
    }
}

/// Survival row plus the exact collar exit factor and their ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationRow {
    #[serde(flatten)]
    pub survival: SurvivalRow,
    pub boundary_factor: f64,
    pub boundary_stderr: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationTable {
    pub epsilon: f64,
    pub collar_width: f64,
    /// Survival from the deep reference point (the y-factor of the product form).
    pub reference: SurvivalEstimate,
    pub rows: Vec<FactorizationRow>,
    /// max ratio / min ratio over the grid.
    pub spread: f64,
}

impl FactorizationTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SURVIVAL_HEADER},boundary_factor,boundary_stderr,ratio,ratio_stderr\n");
        for r in &self.rows {
            let v = &r.survival;
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                v.x_tag,
                v.delta,
                v.t,
                v.survival,
                v.stderr,
                v.h,
                v.bias_estimate,
                r.boundary_factor,
                r.boundary_stderr,
                r.ratio,
                r.ratio_stderr
            );
        }
        s
    }
}

/// Compares skeleton survival P_x(τ_D > t) with the exact collar exit
/// probability P_x(X_{τ_{D(ε₁t^{1/α})}} ∈ D) along `x_grid`; the product form
/// of the heat kernel predicts a two-sided bounded ratio.
#[allow(clippy::too_many_arguments)]
pub fn factorization_check<T: Real>(
    idx: &StableIndex<T>,
    domain: &Domain<T>,
    t: f64,
    x_grid: &[Vec<T>],
    y_ref: &[T],
    cfg: &FactorizationConfig,
    n: u64,
    seed: u64,
) -> Result<FactorizationTable> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Parameter {
            name: "epsilon",
            reason: "must be positive".into(),
        });
    }
    let alpha = idx.alpha().as_f64();
    let width = cfg.epsilon * t.powf(1.0 / alpha);
    let reference = survival_probability(idx, domain, y_ref, t, &cfg.path, n, crate::engine::derive_seed(seed, u64::MAX))?;
    let mut rows = Vec::with_capacity(x_grid.len());
    for (k, x) in x_grid.iter().enumerate() {
        let (_, delta) = domain.dist_to_boundary(x)?;
        let delta = delta.as_f64();
        let s = survival_probability(idx, domain, x, t, &cfg.path, n, crate::engine::derive_seed(seed, 2 * k as u64))?;
        let b = if delta >= width {
            Estimate {
                mean: 1.0,
                stderr: 0.0,
                n_walks: 0,
                seed,
                mean_steps: 0.0,
                discarded: 0,
            }
        } else {
            collar_survival(
                idx,
                domain,
                T::lit(width),
                x,
                n,
                crate::engine::derive_seed(seed, 2 * k as u64 + 1),
                &cfg.wos,
            )?
        };
        if b.mean == 0.0 {
            return Err(Error::Numeric(format!("boundary factor vanished at grid point {k}")));
        }
        let ratio = s.survival.mean / b.mean;
        let ratio_stderr = ratio * (s.survival.relative_error().powi(2) + b.relative_error().powi(2)).sqrt();
        rows.push(FactorizationRow {
            survival: SurvivalRow::new(format!("x{k}"), delta, &s),
            boundary_factor: b.mean,
            boundary_stderr: b.stderr,
            ratio,
            ratio_stderr: if ratio_stderr.is_finite() { ratio_stderr } else { f64::INFINITY },
        });
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    Ok(FactorizationTable {
        epsilon: cfg.epsilon,
        collar_width: width,
        reference,
        rows,
        spread: hi / lo,
    })
}
