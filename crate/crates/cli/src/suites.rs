//! Property suites behind `stabledecay verify`.

use crate::report::{Artifact, Check, SuiteReport};
use rand::Rng;
use stabledecay::engine::{derive_seed, run_blocks_with, walk_rng};
use stabledecay::fraclap::{barrier_margin, frac_lap_profile, signed_residual_report, PowerProfile};
use stabledecay::moduli::{
    check_invariants, classify_dini, geometric_grid, regularization_report, regularize,
};
use stabledecay::quadrature::{gauss_kronrod, QuadOptions};
use stabledecay::special::gamma;
use stabledecay::stablelaw::{
    ball_poisson_center, c_dap, eta, iteration_bound_check, stable_constants, BallExitLaw, BarrierVariant,
};
use stabledecay::{BarrierParams, Modulus, StableIndex};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Constants,
    Fraclap,
    Sampler,
    Moduli,
    Barriers,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Constants, Suite::Fraclap, Suite::Sampler, Suite::Moduli, Suite::Barriers];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Constants => "constants",
            Suite::Fraclap => "fraclap",
            Suite::Sampler => "sampler",
            Suite::Moduli => "moduli",
            Suite::Barriers => "barriers",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected one of constants, fraclap, sampler, moduli, barriers)"))
    }
}

/// Sizes of the randomised parts of the suites.
#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Ball-exit radii per α in the sampler suite.
    pub samples: u64,
    /// Random (s, r) pairs in the barrier suite.
    pub pairs: usize,
    /// Random (x, ℓ, λ) configurations for the sign dichotomy.
    pub margin_configs: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            samples: 1_000_000,
            pairs: 1000,
            margin_configs: 100,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rep = SuiteReport::new(suite.name(), opts.seed);
    let res = match suite {
        Suite::Constants => constants(&mut rep),
        Suite::Fraclap => fraclap(&mut rep),
        Suite::Sampler => sampler(&mut rep, opts),
        Suite::Moduli => moduli(&mut rep),
        Suite::Barriers => barriers(&mut rep, opts),
    };
    if let Err(e) = res {
        rep.fail(e.to_string());
    }
    rep.wall_seconds = start.elapsed().as_secs_f64();
    rep
}

type SuiteResult = stabledecay::Result<()>;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// x_d^α ∫ over the lower half-plane of |x − y|^{−2−α} dy at x = (0, 1), by polar-type
/// coordinates y_1 = h tan θ, h = e^w; equals C(2, α, α/2).
fn lower_halfplane_integral(alpha: f64) -> f64 {
    let angular = 2.0 * simpson(|v: f64| (v * v).sin().powf(alpha) * 2.0 * v, 0.0, (PI / 2.0).sqrt(), 20_000);
    let radial = simpson(|w: f64| (-alpha * w).exp(), 0.0, 60.0 / alpha, 200_000);
    angular * radial
}

fn constants(rep: &mut SuiteReport) -> SuiteResult {
    let mut csv = String::from("alpha,d,A,C,kappa_proj,c_half\n");
    for &a in &[0.5, 1.0, 1.5] {
        for d in [2usize, 3] {
            let i = StableIndex::new(a, d)?;
            let k = stable_constants(&i);
            let df = d as f64;
            let tag = format!("alpha={a} d={d}");
            let a_direct = 2f64.powf(a) * gamma((df + a) / 2.0) / (PI.powf(df / 2.0) * gamma(-a / 2.0).abs());
            rep.push(Check::at_most(format!("A vs gamma form [{tag}]"), rel(k.a, a_direct), 1e-12));
            let c_direct = gamma(df / 2.0) * PI.powf(-df / 2.0 - 1.0) * (PI * a / 2.0).sin();
            rep.push(Check::at_most(format!("C vs gamma form [{tag}]"), rel(k.c, c_direct), 1e-12));
            let area = 2.0 * PI.powf((df - 1.0) / 2.0) / gamma((df - 1.0) / 2.0);
            let radial = gauss_kronrod(
                |u: f64| {
                    let r = u / (1.0 - u);
                    r.powf(df - 2.0) * (r * r + 1.0).powf(-(df + a) / 2.0) / ((1.0 - u) * (1.0 - u))
                },
                0.0,
                1.0,
                &QuadOptions::relative(1e-12),
            )?
            .value;
            rep.push(Check::at_most(format!("kappa_proj vs quadrature [{tag}]"), rel(area * radial, k.kappa_proj), 1e-9));
            // the centre-start ball kernel integrated over spheres is the sampler's radial density
            let law = BallExitLaw::new(&i);
            let sphere = 2.0 * PI.powf(df / 2.0) / gamma(df / 2.0);
            let mut worst: f64 = 0.0;
            for &rho in &[1.2f64, 3.0, 10.0] {
                let mut y = vec![0.0; d];
                y[d - 1] = rho;
                let radial = sphere * rho.powf(df - 1.0) * ball_poisson_center(&i, 1.0, &y)?;
                worst = worst.max(rel(radial, law.radius_density(rho)));
            }
            rep.push(Check::at_most(format!("C vs ball exit density [{tag}]"), worst, 1e-12));
            let c_half = c_dap(&i, a / 2.0)?;
            csv.push_str(&format!("{a},{d},{:.17e},{:.17e},{:.17e},{:.17e}\n", k.a, k.c, k.kappa_proj, c_half));
            if d == 2 {
                rep.push(Check::at_most(
                    format!("C(d,a,a/2) vs lower half-plane integral [{tag}]"),
                    rel(c_half, lower_halfplane_integral(a)),
                    1e-8,
                ));
            }
            let again = c_dap(&i, a / 2.0)?;
            rep.push(Check::flag(format!("C(d,a,p) bitwise deterministic [{tag}]"), again.to_bits() == c_half.to_bits()));
        }
    }
    let k = stable_constants(&StableIndex::new(1.0, 2)?);
    let closed = rel(k.a, 1.0 / (2.0 * PI)).max(rel(k.c, 1.0 / (PI * PI))).max(rel(k.kappa_proj, 2.0));
    rep.push(Check::at_most("closed forms at alpha=1 d=2", closed, 1e-14));
    rep.artifacts.push(Artifact {
        name: "constants.csv".into(),
        contents: csv,
    });
    Ok(())
}

/// Harmonic and power identities of the one-dimensional operator.
pub fn fraclap(rep: &mut SuiteReport) -> SuiteResult {
    let xs = geometric_grid(1e-3, 10.0, 9);
    let mut csv = String::new();
    for &a in &[0.5, 1.0, 1.5] {
        let i = StableIndex::new(a, 2)?;
        let harmonic = PowerProfile::new(a / 2.0);
        let worst = xs
            .iter()
            .map(|&x| frac_lap_profile(&i, &harmonic, x).map(f64::abs))
            .collect::<stabledecay::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rep.push(Check::at_most(format!("|L s^(a/2)| [alpha={a}]"), worst, 1e-7));
        let t = signed_residual_report(&i, &[a / 4.0, 3.0 * a / 4.0], &xs)?;
        rep.push(Check::at_most(format!("max residual s^p, p in {{a/4, 3a/4}} [alpha={a}]"), t.max_residual, 1e-6));
        let body = t.to_csv();
        if csv.is_empty() {
            csv.push_str("alpha,");
            csv.push_str(body.lines().next().unwrap_or_default());
            csv.push('\n');
        }
        for line in body.lines().skip(1) {
            csv.push_str(&format!("{a},{line}\n"));
        }
    }
    rep.artifacts.push(Artifact {
        name: "fraclap_residuals.csv".into(),
        contents: csv,
    });
    Ok(())
}

/// Exit radii for one α, drawn from per-sample streams in deterministic blocks.
pub fn exit_radii(law: &BallExitLaw, n: u64, seed: u64) -> Vec<f64> {
    run_blocks_with(
        n,
        seed,
        Vec::new,
        |_, rng, acc: &mut Vec<f64>| acc.push(law.sample_radius(rng)),
        |a, b| a.extend_from_slice(b),
        |a| (a.len() as u64, 0),
        None,
    )
}

/// Two-sided Kolmogorov distance of sorted samples against a CDF.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d: f64, (k, &x)| {
        let f = cdf(x);
        d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n)
    })
}

pub fn sampler(rep: &mut SuiteReport, opts: &SuiteOptions) -> SuiteResult {
    let mut csv = String::from("alpha,n,ks_distance,inv_sq_mean,inv_sq_stderr\n");
    for (j, &a) in [0.5, 1.0, 1.5].iter().enumerate() {
        let i = StableIndex::new(a, 2)?;
        let law = BallExitLaw::new(&i);
        let mut r = exit_radii(&law, opts.samples, derive_seed(opts.seed, j as u64));
        let n = r.len() as f64;
        let inv: Vec<f64> = r.iter().map(|x| 1.0 / (x * x)).collect();
        let mean = inv.iter().sum::<f64>() / n;
        let se = (inv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        rep.push(Check::at_most(format!("E[1/rho^2] - a/2 in stderr units [alpha={a}]"), (mean - a / 2.0).abs() / se, 3.0));
        if a == 1.0 {
            let p = r.iter().filter(|&&x| x > 2f64.sqrt()).count() as f64 / n;
            rep.push(
                Check::at_most("P(rho > sqrt 2) - 1/2 in stderr units [alpha=1]", (p - 0.5).abs() / (0.25 / n).sqrt(), 3.0)
                    .with_detail(format!("P = {p:.6}")),
            );
        }
        r.sort_by(f64::total_cmp);
        let ks = ks_distance(&r, |x| law.radius_cdf(x));
        rep.push(Check::at_most(format!("KS distance at n={} [alpha={a}]", r.len()), ks, 0.002));
        csv.push_str(&format!("{a},{},{ks:.6e},{mean:.9e},{se:.3e}\n", r.len()));
    }
    rep.artifacts.push(Artifact {
        name: "sampler.csv".into(),
        contents: csv,
    });
    Ok(())
}

fn builtin_moduli() -> stabledecay::Result<Vec<(&'static str, Modulus)>> {
    Ok(vec![
        ("logpower(1)", Modulus::logpower(1.0)?),
        ("logpower(2)", Modulus::logpower(2.0)?),
        ("logpower(0.5)", Modulus::logpower(0.5)?),
        ("power(1,0.5)", Modulus::power(1.0, 0.5)?),
        ("power(0.1,0.2)", Modulus::power(0.1, 0.2)?),
    ])
}

pub fn moduli(rep: &mut SuiteReport) -> SuiteResult {
    let expected_dini = [false, true, false, true, true];
    for ((name, ell), dini) in builtin_moduli()?.into_iter().zip(expected_dini) {
        let inv = check_invariants(&ell)?;
        rep.push(Check::flag(format!("monotone [{name}]"), inv.monotone));
        rep.push(Check::at_most(format!("almost-decreasing constant [{name}]"), inv.almost_decreasing_constant, 4.0));
        rep.push(Check::at_most(format!("scaling constant c0 [{name}]"), inv.theta_constant, 1e6).with_detail(format!("theta = {:.4}", inv.theta)));
        let bar = regularize(&ell)?;
        let coarse = regularization_report(&ell, &bar, 1000)?;
        let fine = regularization_report(&ell, &bar, 2000)?;
        rep.push(Check::at_most(format!("max bar/ell [{name}]"), fine.upper_ratio, 1.0 + 1e-12));
        rep.push(Check::at_least(format!("min bar/(ell(r/4)/4) [{name}]"), fine.lower_ratio, 1.0 - 1e-12));
        rep.push(Check::at_least(format!("min r bar'/bar [{name}]"), fine.min_log_slope, 0.0));
        rep.push(
            Check::at_most(
                format!("derivative constant refinement drift [{name}]"),
                rel(coarse.derivative_constant, fine.derivative_constant),
                0.01,
            )
            .with_detail(format!("constant = {:.6}", fine.derivative_constant)),
        );
        rep.push(Check::flag(
            format!("derivative constant finite [{name}]"),
            fine.derivative_constant.is_finite(),
        ));
        let d = classify_dini(&ell, 1e-12)?;
        rep.push(
            Check::flag(format!("Dini classification = {dini} [{name}]"), d.is_dini == dini)
                .with_detail(format!("tail heuristic says {}", d.heuristic)),
        );
        let db = classify_dini(&bar, 1e-12)?;
        rep.push(Check::flag(format!("regularization keeps Dini class [{name}]"), db.is_dini == dini));
    }
    let zero = classify_dini(&Modulus::zero(), 1e-12)?;
    rep.push(Check::flag("zero modulus is Dini", zero.is_dini));
    Ok(())
}

/// A random barrier with λℓ(R) < η and its (α, θ, R, ℓ name).
fn random_barrier<R: Rng>(rng: &mut R, d: usize) -> stabledecay::Result<(BarrierParams, String)> {
    let alphas = [0.5, 1.0, 1.5];
    let a = alphas[rng.random_range(0..alphas.len())];
    let theta = rng.random_range(0.05..0.45) * a;
    let e = eta(a, theta);
    let mods = builtin_moduli()?;
    let (name, ell) = mods[rng.random_range(0..mods.len())].clone();
    let big_r = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
    let k = rng.random_range(1.5..8.0);
    let frac = rng.random_range(0.05..0.95);
    let lambda = frac * e / ell.eval(big_r)?;
    let i = StableIndex::new(a, d)?;
    let b = BarrierParams::new(&i, big_r, lambda, k, ell, Some(theta))?;
    Ok((b, format!("alpha={a} theta={theta:.3} R={big_r} k={k:.3} lambda={lambda:.4} ell={name}")))
}

pub fn barriers(rep: &mut SuiteReport, opts: &SuiteOptions) -> SuiteResult {
    let mut rng = walk_rng(opts.seed, 0xBA);
    let (mut scaling_lo, mut scaling_hi, mut convex, mut kcomp_lo, mut kcomp_hi) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut envelope: f64 = 0.0;
    let mut fd_mismatch: f64 = 0.0;
    let mut worst_cfg = String::new();
    for _ in 0..opts.pairs {
        let (b, tag) = random_barrier(&mut rng, 2)?;
        let e = b.eta.expect("theta supplied");
        let top = b.radius / b.k;
        let lr = |rng: &mut rand_chacha::ChaCha8Rng| top * (rng.random_range(1e-6f64.ln()..0.0)).exp();
        let (x, y) = (lr(&mut rng), lr(&mut rng));
        let (s, r) = (x.min(y), x.max(y));
        let phi = |t: f64| b.eval(t, BarrierVariant::Phi);
        let (fr, fs) = (phi(r)?, phi(s)?);
        let q = r / s;
        let ratio = fr / fs;
        scaling_lo += usize::from(ratio < q.powf(b.alpha / 2.0) * (1.0 - 1e-12));
        scaling_hi += usize::from(ratio > q.powf(b.alpha / 2.0 + e) * (1.0 + 1e-12));
        convex += usize::from(fr - fs > 2.0 * fr * (r - s) / r * (1.0 + 1e-12) + 1e-300);
        // k-comparison against a smaller l
        let l = b.k * rng.random_range(0.2..0.95);
        let bl = BarrierParams { k: l, ..b.clone() };
        let kq = phi(r)? / bl.eval(r, BarrierVariant::Phi)?;
        kcomp_lo += usize::from(kq < 1.0 - 1e-12);
        kcomp_hi += usize::from(kq > (b.k / l).powf(e) * (1.0 + 1e-12));
        // derivative envelope with a finite-difference third derivative, kept inside (0, R/k)
        let t = r.min(top * 0.99);
        for v in [BarrierVariant::Phi, BarrierVariant::Psi] {
            let (f, d1, d2) = b.derivatives(t, v)?;
            let h = t * 1e-4;
            let fd1 = (b.eval(t + h, v)? - b.eval(t - h, v)?) / (2.0 * h);
            fd_mismatch = fd_mismatch.max(rel(fd1, d1));
            let h3 = t * 1e-3;
            let d3 = (b.derivatives(t + h3, v)?.2 - b.derivatives(t - h3, v)?.2) / (2.0 * h3);
            let c = (t * d1).abs() / f + (t * t * d2).abs() / f + (t.powi(3) * d3).abs() / f;
            if c > envelope {
                envelope = c;
                worst_cfg = tag.clone();
            }
        }
    }
    let n = opts.pairs as f64;
    rep.push(Check::at_most("scaling sandwich lower violations", scaling_lo as f64, 0.0).with_detail(format!("{n} pairs")));
    rep.push(Check::at_most("scaling sandwich upper violations", scaling_hi as f64, 0.0));
    rep.push(Check::at_most("convexity bound violations", convex as f64, 0.0));
    rep.push(Check::at_most("k-comparison lower violations", kcomp_lo as f64, 0.0));
    rep.push(Check::at_most("k-comparison upper violations", kcomp_hi as f64, 0.0));
    rep.push(Check::at_most("first derivative vs finite difference", fd_mismatch, 1e-6));
    rep.push(Check::at_most("derivative envelope constant C", envelope, 1e3).with_detail(format!("worst at {worst_cfg}")));

    let mut phi_bad = 0usize;
    let mut psi_bad = 0usize;
    let mut min_ratio = f64::INFINITY;
    let mut csv = String::from("config,x,phi_margin,phi_floor,psi_margin,psi_floor\n");
    for _ in 0..opts.margin_configs {
        let (b, tag) = random_barrier(&mut rng, 2)?;
        let i = StableIndex::new(b.alpha, 2)?;
        let top = b.radius / (2.0 * b.k);
        let x = top * rng.random_range(1e-4f64.ln()..0.0).exp();
        let phi = barrier_margin(&i, &b, x, BarrierVariant::Phi)?;
        let psi = barrier_margin(&i, &b, x, BarrierVariant::Psi)?;
        phi_bad += usize::from(!(phi.value > 0.0));
        psi_bad += usize::from(!(psi.value < 0.0));
        min_ratio = min_ratio.min(phi.ratio()).min(psi.ratio());
        csv.push_str(&format!(
            "\"{tag}\",{x:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            phi.value, phi.predicted_floor, psi.value, psi.predicted_floor
        ));
    }
    rep.push(
        Check::at_most("Phi margin <= 0 count", phi_bad as f64, 0.0).with_detail(format!("{} configurations", opts.margin_configs)),
    );
    rep.push(Check::at_most("Psi margin >= 0 count", psi_bad as f64, 0.0));
    rep.push(Check::at_least("min margin / predicted floor", min_ratio, 0.0));

    let mut iter_bad = 0usize;
    for _ in 0..1000 {
        let b = rng.random_range(0.1..300.0);
        let c0 = rng.random_range(0.1..10.0);
        let c = iteration_bound_check(b, c0, (b.ceil() as usize + 2).max(400))?;
        iter_bad += usize::from(!(c.holds && c.dual_holds));
    }
    rep.push(Check::at_most("iteration lemma violations (1000 random b, c0)", iter_bad as f64, 0.0));
    rep.artifacts.push(Artifact {
        name: "barrier_margins.csv".into(),
        contents: csv,
    });
    Ok(())
}
