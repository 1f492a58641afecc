use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stabledecay::error::Error;
use stabledecay::geometry::Domain;
use stabledecay::killedpaths::*;
use stabledecay::stablelaw::StableIndex;
use statrs::function::erf::erfc;

fn idx(alpha: f64, d: usize) -> StableIndex<f64> {
    StableIndex::new(alpha, d).unwrap()
}

fn ks_one(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            ((k + 1) as f64 / n - f).abs().max((f - k as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn ks_two(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn subordinator_laplace_transform() {
    let n = 1_000_000;
    for &a in &[0.25, 0.5, 0.75, 0.95] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..n).map(|_| positive_stable(a, &mut rng)).collect();
        for &lam in &[0.5f64, 1.0, 2.0] {
            let v: Vec<f64> = s.iter().map(|x| (-lam * x).exp()).collect();
            let m = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let exact = (-lam.powf(a)).exp();
            assert!((m - exact).abs() < 3.0 * (var / n as f64).sqrt(), "a={a} λ={lam}: {m} vs {exact}");
        }
    }
}

#[test]
fn half_stable_subordinator_is_levy_distributed() {
    // a = 1/2: S = 1/(2Z²), so P(S ≤ s) = erfc(1/(2√s))
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s: Vec<f64> = (0..n).map(|_| positive_stable(0.5, &mut rng)).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d = ks_one(&s, |x| erfc(1.0 / (2.0 * x.sqrt())));
    assert!(d < 1.95 / (n as f64).sqrt(), "KS {d}");
}

#[test]
fn planar_cauchy_increment_radial_law() {
    // α = 1, d = 2, h = 1: P(|X| > u) = (1 + u²)^{−1/2}
    let i = idx(1.0, 2);
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = [0.0; 2];
    let mut r: Vec<f64> = (0..n)
        .map(|_| {
            stable_increment(&i, 1.0, &mut rng, &mut out);
            out[0].hypot(out[1])
        })
        .collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d = ks_one(&r, |u| 1.0 - 1.0 / (1.0 + u * u).sqrt());
    assert!(d < 1.95 / (n as f64).sqrt(), "KS {d}");
}

#[test]
fn increments_are_isotropic() {
    let i = idx(1.3, 3);
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum = [0.0; 3];
    let mut out = [0.0; 3];
    for _ in 0..n {
        stable_increment(&i, 0.5, &mut rng, &mut out);
        let norm = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
        for k in 0..3 {
            sum[k] += out[k] / norm;
        }
    }
    // each coordinate of a uniform unit vector in 3-D has variance 1/3
    let se = (1.0 / 3.0 / n as f64).sqrt();
    for s in sum {
        assert!((s / n as f64).abs() < 3.0 * se);
    }
}

#[test]
fn increments_are_self_similar() {
    let n = 1_000_000;
    for &(alpha, c) in &[(0.8, 2.0), (1.5, 0.5)] {
        let i = idx(alpha, 2);
        let mut out = [0.0; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a: Vec<f64> = (0..n)
            .map(|_| {
                stable_increment(&i, 1.0, &mut rng, &mut out);
                out[0].hypot(out[1])
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut b: Vec<f64> = (0..n)
            .map(|_| {
                stable_increment(&i, c, &mut rng, &mut out);
                out[0].hypot(out[1]) * c.powf(-1.0 / alpha)
            })
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let d = ks_two(&a, &b);
        assert!(d < 1.95 * (2.0 / n as f64).sqrt(), "α={alpha}: KS {d}");
    }
}

#[test]
fn increment_tail_index() {
    let n = 1_000_000;
    for &alpha in &[0.7, 1.0, 1.3] {
        let i = idx(alpha, 2);
        let mut out = [0.0; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r: Vec<f64> = (0..n)
            .map(|_| {
                stable_increment(&i, 1.0, &mut rng, &mut out);
                out[0].hypot(out[1])
            })
            .collect();
        let us: Vec<f64> = (0..=8).map(|k| 10f64.powf(1.0 + k as f64 / 4.0)).collect();
        let pts: Vec<(f64, f64, f64)> = us
            .iter()
            .map(|&u| {
                let c = r.iter().filter(|&&x| x > u).count() as f64;
                (u.ln(), (c / n as f64).ln(), c)
            })
            .collect();
        // weighted by counts (Poisson variance of the log tail)
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y, w) in &pts {
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
        }
        let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
        assert!((slope + alpha).abs() < 0.05, "α={alpha}: slope {slope}");
    }
}

#[test]
fn no_killing_in_whole_space() {
    let i = idx(1.0, 2);
    let s = survival_probability(&i, &Domain::whole(2).unwrap(), &[0.0, 0.0], 1.0, &PathConfig::default().with_step(0.05), 2000, 1).unwrap();
    assert_eq!(s.survival.mean, 1.0);
    assert_eq!(s.bias_estimate, 0.0);
}

#[test]
fn halfspace_survival_scales_like_square_root() {
    let i = idx(1.0, 2);
    let hs = Domain::halfspace(2).unwrap();
    let cfg = PathConfig::default().with_step(1e-2);
    let ratios: Vec<f64> = [0.1, 0.03, 0.01]
        .iter()
        .enumerate()
        .map(|(k, &xd)| {
            let s = survival_probability(&i, &hs, &[0.0, xd], 1.0, &cfg, 10_000, k as u64).unwrap();
            assert!(s.bias_estimate.abs() < 0.05);
            s.survival.mean / xd.sqrt()
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.3, "{ratios:?}");
}

#[test]
fn survival_curve_is_nonincreasing() {
    let i = idx(1.5, 2);
    let hs = Domain::halfspace(2).unwrap();
    let times = [0.1, 0.2, 0.5, 1.0, 2.0];
    let c = survival_curve(&i, &hs, &[0.0, 0.3], &times, &PathConfig::default().with_step(1e-2), 5000, 3).unwrap();
    for w in c.windows(2) {
        assert!(w[1].mean <= w[0].mean);
    }
    assert!(c[0].mean < 1.0 && c[4].mean > 0.0);
    // a single-horizon run at t = 0.5 reproduces the curve's value there
    let one = survival_curve(&i, &hs, &[0.0, 0.3], &[0.5], &PathConfig::default().with_step(1e-2), 5000, 3).unwrap();
    assert!((one[0].mean - c[2].mean).abs() < 4.0 * c[2].stderr);
}

#[test]
fn coarse_skeletons_overestimate_survival() {
    let i = idx(1.0, 2);
    let hs = Domain::halfspace(2).unwrap();
    let cfg = PathConfig {
        sigma: 1e-9,
        ..PathConfig::default()
    };
    let coarse = survival_curve(&i, &hs, &[0.0, 0.1], &[1.0], &cfg.with_step(0.2), 40_000, 8).unwrap()[0];
    let fine = survival_curve(&i, &hs, &[0.0, 0.1], &[1.0], &cfg.with_step(0.01), 40_000, 9).unwrap()[0];
    let se = (coarse.stderr.powi(2) + fine.stderr.powi(2)).sqrt();
    assert!(coarse.mean - fine.mean > 3.0 * se, "{} vs {}", coarse.mean, fine.mean);
}

#[test]
fn halfspace_factorization_ratio_is_bounded() {
    let i = idx(1.0, 2);
    let hs = Domain::halfspace(2).unwrap();
    let grid: Vec<Vec<f64>> = [0.005, 0.01, 0.02, 0.05].iter().map(|&x| vec![0.0, x]).collect();
    for eps in [0.05, 0.1, 0.2] {
        let cfg = FactorizationConfig {
            path: PathConfig::default().with_step(1e-2),
            epsilon: eps,
            ..Default::default()
        };
        let tab = factorization_check(&i, &hs, 1.0, &grid, &[0.0, 2.0], &cfg, 5000, 11).unwrap();
        assert_eq!(tab.rows.len(), 4);
        assert!((tab.collar_width - eps).abs() < 1e-15);
        assert!(tab.spread.is_finite() && tab.spread < 4.0, "ε={eps}: spread {}", tab.spread);
        assert!(tab.reference.survival.mean > 0.5);
        let csv = tab.to_csv();
        assert!(csv.starts_with("x_tag,delta,t,survival,stderr,h,bias_estimate,boundary_factor"));
        assert_eq!(csv.lines().count(), 5);
    }
}

#[test]
fn survival_csv_columns() {
    let i = idx(1.0, 2);
    let s = survival_probability(&i, &Domain::halfspace(2).unwrap(), &[0.0, 0.5], 0.5, &PathConfig::default().with_step(0.05), 1000, 1).unwrap();
    let csv = survival_csv(&[SurvivalRow::new("a", 0.5, &s)]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SURVIVAL_HEADER));
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
    assert!(csv.ends_with('\n') && !csv.contains('\r'));
}

#[test]
fn error_paths() {
    let i = idx(1.0, 2);
    let hs = Domain::halfspace(2).unwrap();
    let cfg = PathConfig::default();
    assert!(matches!(survival_probability(&i, &hs, &[0.0, -1.0], 1.0, &cfg, 10, 1), Err(Error::Domain(_))));
    assert!(matches!(survival_probability(&i, &hs, &[0.0, 1.0], 1e-4, &cfg, 10, 1), Err(Error::Parameter { .. })));
    assert!(survival_probability(&i, &hs, &[0.0, 1.0], 1.0, &cfg, 0, 1).is_err());
    let tiny = PathConfig {
        max_steps: 3,
        ..cfg
    };
    assert!(matches!(survival_probability(&i, &hs, &[0.0, 1.0], 1.0, &tiny, 10, 1), Err(Error::Numeric(_))));
}

#[test]
fn reproducible_across_thread_counts() {
    let i = idx(1.0, 2);
    let hs = Domain::halfspace(2).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| survival_probability(&i, &hs, &[0.0, 0.1], 1.0, &PathConfig::default().with_step(0.02), 10_000, 5).unwrap())
    };
    assert_eq!(run(1), run(4));
}
