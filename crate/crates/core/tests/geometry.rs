use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabledecay::geometry::*;
use stabledecay::moduli::regularize;
use stabledecay::Modulus;

fn brute_graph_distance(ell: &Modulus, s: f64, a: f64, b: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        let y = s * gamma_ell(ell, t);
        best = best.min((t - a).hypot(y - b));
    }
    best
}

#[test]
fn gamma_examples() {
    let l = Modulus::power(1.0, 1.0).unwrap();
    assert_eq!(gamma_ell(&l, -0.3), 0.0);
    assert_eq!(gamma_ell(&l, 0.0), 0.0);
    assert_eq!(gamma_ell(&l, 0.5), 0.25);
    assert_eq!(gamma_ell_derivative(&l, 0.5), 1.0);
}

#[test]
fn gamma_gradient_controlled_by_modulus() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ell in [Modulus::logpower(1.0).unwrap(), Modulus::power(0.5, 0.5).unwrap()] {
        let bar = regularize(&ell).unwrap();
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| (rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)))
            .collect();
        let c = gamma_gradient_constant(&bar, &pairs);
        assert!(c.is_finite() && c > 0.0 && c < 50.0, "constant {c}");
    }
}

#[test]
fn halfspace_distance_closed_form() {
    let h = Domain::<f64>::halfspace(3).unwrap();
    assert_eq!(h.dist_to_boundary(&[5.0, -2.0, 0.7]).unwrap(), (0.7, 0.7));
    let g = Domain::graph(2, Modulus::zero(), GraphSign::Above).unwrap();
    assert_eq!(g.dist_to_boundary(&[3.0, 0.25]).unwrap().1, 0.25);
    assert!(h.dist_to_boundary(&[0.0, 0.0, -1.0]).is_err());
}

#[test]
fn graph_distance_matches_dense_discretization() {
    let l = Modulus::power(1.0, 1.0).unwrap();
    let d = Domain::graph(3, l.clone(), GraphSign::Above).unwrap();
    let (cert, est) = d.dist_to_boundary(&[-1.0, 0.0, 1.0]).unwrap();
    let brute = brute_graph_distance(&l, 1.0, -1.0, 1.0, -3.0, 3.0, 1_000_000);
    assert!((est - brute).abs() < 1e-6, "{est} vs {brute}");
    assert!(cert <= est && cert >= est * (1.0 - 2e-9));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (ell, sign) in [
        (Modulus::logpower(1.0).unwrap(), GraphSign::Below),
        (Modulus::logpower(1.0).unwrap(), GraphSign::Above),
        (Modulus::power(2.0, 0.5).unwrap(), GraphSign::Above),
    ] {
        let dom = Domain::graph(2, ell.clone(), sign).unwrap();
        let s = if sign == GraphSign::Above { 1.0 } else { -1.0 };
        for _ in 0..20 {
            let a: f64 = rng.random_range(-1.5..1.5);
            let b = s * gamma_ell(&ell, a) + rng.random_range(1e-3..1.0);
            let (_, est) = dom.dist_to_boundary(&[a, b]).unwrap();
            let brute = brute_graph_distance(&ell, s, a, b, a - 2.0, a + 2.0, 400_000);
            assert!(est <= brute + 1e-12);
            assert!((est - brute).abs() < 1e-6, "a={a} b={b}: {est} vs {brute}");
        }
    }
}

#[test]
fn inner_radius_examples() {
    let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    assert_eq!(ball.inner_radius(&[0.0, 0.0], 1.0).unwrap(), 1.0);
    let collar = Domain::collar(Domain::<f64>::halfspace(2).unwrap(), 1.0).unwrap();
    assert!((collar.inner_radius(&[0.0, 0.3], 1.0).unwrap() - 0.3).abs() < 1e-15);
    assert!((collar.inner_radius(&[0.0, 0.8], 1.0).unwrap() - 0.2).abs() < 1e-15);
    assert!(collar.inner_radius(&[0.0, 1.5], 1.0).is_err());
}

fn sphere_inside(dom: &Domain<f64>, x: &[f64], r: f64, rng: &mut ChaCha8Rng, samples: usize) -> bool {
    let d = x.len();
    let mut p = vec![0.0; d];
    for _ in 0..samples {
        let mut n = 0.0;
        for v in p.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
            n += *v * *v;
        }
        let n = n.sqrt();
        let rho = r * rng.random::<f64>().powf(0.1);
        for (v, c) in p.iter_mut().zip(x) {
            *v = c + rho * *v / n;
        }
        if !dom.contains(&p) {
            return false;
        }
    }
    true
}

fn random_interior(dom: &Domain<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dom.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut x = x;
        let last = x.len() - 1;
        // concentrate near the boundary
        x[last] = x[last].signum() * x[last].abs().powi(3);
        if dom.contains(&x) {
            return x;
        }
    }
}

#[test]
fn interior_balls_contained_graph_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dom = Domain::graph(2, Modulus::logpower(1.0).unwrap(), GraphSign::Below).unwrap();
    for _ in 0..100_000 {
        let x = random_interior(&dom, &mut rng);
        let r = dom.locate(&x, 1.0).unwrap();
        assert!(r > 0.0);
        assert!(sphere_inside(&dom, &x, r, &mut rng, 1000), "x={x:?} r={r}");
    }
}

#[test]
fn interior_balls_contained_every_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lp = Modulus::logpower(1.0).unwrap();
    let bar = regularize(&lp).unwrap();
    let domains = vec![
        Domain::halfspace(2).unwrap(),
        Domain::ball(vec![0.0, 0.2, 0.1], 1.0).unwrap(),
        Domain::graph(3, lp.clone(), GraphSign::Above).unwrap(),
        Domain::graph(2, bar.clone(), GraphSign::Below).unwrap(),
        Domain::graph(2, Modulus::power(1.0, 1.0).unwrap(), GraphSign::Above).unwrap(),
        Domain::collar(Domain::graph(2, bar, GraphSign::Below).unwrap(), 0.3).unwrap(),
        Domain::collar(Domain::halfspace(2).unwrap(), 0.5).unwrap(),
        Domain::intersect_ball(Domain::graph(2, lp, GraphSign::Below).unwrap(), vec![0.0, 0.0], 1.0).unwrap(),
    ];
    for dom in &domains {
        for _ in 0..10_000 {
            let x = random_interior(dom, &mut rng);
            let r = dom.locate(&x, 1.0).unwrap();
            assert!(r > 0.0);
            let r2 = dom.inner_radius(&x, 0.999).unwrap();
            assert!(r2 > 0.0);
            assert!(sphere_inside(dom, &x, r.max(r2), &mut rng, 100), "{dom:?} x={x:?} r={r}");
        }
    }
}

#[test]
fn collar_trichotomy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = Domain::graph(2, Modulus::logpower(1.0).unwrap(), GraphSign::Below).unwrap();
    let collar = Domain::collar(base.clone(), 0.25).unwrap();
    for _ in 0..20_000 {
        let x = random_interior(&base, &mut rng);
        let (_, d) = base.dist_to_boundary(&x).unwrap();
        let in_collar = collar.contains(&x);
        let class = classify_collar(&base, 0.25, &x);
        assert_eq!(in_collar, d < 0.25);
        match class {
            CollarClass::Inside { .. } => assert!(in_collar),
            CollarClass::Deep => assert!(!in_collar && d >= 0.25 * (1.0 - 1e-9)),
            CollarClass::Outside => panic!("interior point classified outside"),
        }
    }
}

#[test]
fn monotone_inclusion_of_graph_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ell = Modulus::logpower(1.0).unwrap();
    let plus = Domain::graph(3, ell.clone(), GraphSign::Above).unwrap();
    let minus = Domain::graph(3, ell, GraphSign::Below).unwrap();
    let half = Domain::halfspace(3).unwrap();
    for _ in 0..100_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        if plus.contains(&x) {
            assert!(half.contains(&x));
        }
        if half.contains(&x) {
            assert!(minus.contains(&x));
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() < 8.0 {
                assert!(minus.contains(&x));
            }
        }
    }
}

#[test]
fn fat_probe_witnesses() {
    let ell = Modulus::logpower(1.0).unwrap();
    let plus = Domain::graph(3, ell.clone(), GraphSign::Above).unwrap();
    let c = plus.fat_probe(&[0.0, 0.0, 0.0], 1.0).unwrap();
    assert_eq!(c.witness, vec![-0.25, 0.0, 0.25]);
    assert_eq!(c.radius, 0.25);
    assert!(c.depth_ratio >= 0.25 * (1.0 - 1e-9));
    let minus = Domain::graph(3, ell.clone(), GraphSign::Below).unwrap();
    let c = minus.fat_probe(&[0.0, 0.0, 0.0], 1.0).unwrap();
    assert_eq!(c.witness, vec![0.25, 0.0, 0.25]);
    let h = Domain::<f64>::halfspace(2).unwrap();
    let c = h.fat_probe(&[0.0, 0.0], 1.0).unwrap();
    assert_eq!(c.witness[1], 0.25);
    // boundary points away from the origin at several scales
    for &t in &[-0.7, 0.05, 0.4, 0.9] {
        for &r in &[1e-3, 0.1, 1.0] {
            let y = gamma_ell(&ell, t);
            plus.fat_probe(&[t, 0.0, y], r).unwrap();
            minus.fat_probe(&[t, 0.0, -y], r).unwrap();
        }
    }
}

#[test]
fn generic_over_f32() {
    let ell = stabledecay::moduli::ModulusSpec::<f32>::logpower(1.0).unwrap();
    let dom = Domain::graph(2, ell, GraphSign::Below).unwrap();
    let (c, e) = dom.dist_to_boundary(&[0.3f32, 0.2]).unwrap();
    let ell64 = Modulus::logpower(1.0).unwrap();
    let d64 = Domain::graph(2, ell64, GraphSign::Below).unwrap();
    let (_, e64) = d64.dist_to_boundary(&[0.3, 0.2]).unwrap();
    assert!(c <= e && ((e as f64) - e64).abs() < 1e-5);
}
