//! Domains (half-space, balls, the graph domains D_ℓ and D_{-ℓ}, collars,
//! ball sections) with membership and certified interior radii.
//!
//! Axis convention: the last coordinate is the graph direction `e_d`, the
//! first coordinate is the graph parameter `x_1`, and the remaining ones are
//! transverse.

use crate::error::{param, Error, Result};
use crate::moduli::ModulusSpec;
use crate::scalar::{dist, Real};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Relative gap used by the walk-on-spheres radius oracle.
pub const HOT_GAP: f64 = 1e-2;
/// Relative gap used by [`Domain::dist_to_boundary`].
pub const TIGHT_GAP: f64 = 1e-11;
/// Relative shrink applied to numerical distance estimates.
pub const CERTIFY_SHRINK: f64 = 1e-9;

/// Orientation of a graph domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphSign {
    /// D_ℓ = {x_d > Γ_ℓ(x_1)}.
    Above,
    /// D_{-ℓ} = {x_d > -Γ_ℓ(x_1)}.
    Below,
}

impl GraphSign {
    pub fn from_int(s: i32) -> Result<Self> {
        match s {
            1 => Ok(GraphSign::Above),
            -1 => Ok(GraphSign::Below),
            _ => Err(param("sign", "graph sign must be +1 or -1")),
        }
    }

    pub fn as_int(self) -> i32 {
        match self {
            GraphSign::Above => 1,
            GraphSign::Below => -1,
        }
    }

    fn factor<T: Real>(self) -> T {
        match self {
            GraphSign::Above => T::one(),
            GraphSign::Below => -T::one(),
        }
    }
}

/// Γ_ℓ(x_1) = x_1 ℓ(x_1) for x_1 > 0, else 0.
#[inline]
pub fn gamma_ell<T: Real>(ell: &ModulusSpec<T>, x1: T) -> T {
    if x1 > T::zero() {
        x1 * ell.value(x1)
    } else {
        T::zero()
    }
}

/// Γ_ℓ′(x_1) = ℓ(x_1) + x_1 ℓ′(x_1) for x_1 > 0, else 0.
pub fn gamma_ell_derivative<T: Real>(ell: &ModulusSpec<T>, x1: T) -> T {
    if x1 > T::zero() {
        let (v, d, _) = ell.derivatives(x1);
        v + x1 * d
    } else {
        T::zero()
    }
}

/// max |Γ′(x) − Γ′(y)| / ℓ(|x − y|) over the given pairs.
pub fn gamma_gradient_constant<T: Real>(ell: &ModulusSpec<T>, pairs: &[(T, T)]) -> T {
    pairs
        .iter()
        .filter(|(x, y)| x != y)
        .map(|&(x, y)| {
            let num = (gamma_ell_derivative(ell, x) - gamma_ell_derivative(ell, y)).abs();
            num / ell.value((x - y).abs())
        })
        .fold(T::zero(), T::max)
}

#[derive(Clone, Debug)]
pub enum DomainKind<T> {
    /// All of ℝ^d.
    Whole,
    /// {x_d > 0}.
    HalfSpace,
    Ball { center: Vec<T>, radius: T },
    Graph { ell: ModulusSpec<T>, sign: GraphSign },
    /// D(R) = {x ∈ base : δ_base(x) < width}.
    Collar { base: Box<Domain<T>>, width: T },
    /// base ∩ B(center, radius).
    IntersectBall { base: Box<Domain<T>>, center: Vec<T>, radius: T },
}

/// An open subset of ℝ^d.
#[derive(Clone, Debug)]
pub struct Domain<T> {
    dim: usize,
    kind: DomainKind<T>,
}

/// Position of a point relative to a collar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CollarClass<T> {
    /// Not in the base domain.
    Outside,
    /// In the base with δ < width; bounds on δ.
    Inside { lower: T, upper: T },
    /// In the base with δ ≥ width.
    Deep,
}

/// Witness ball for the fatness property at `x` and scale `scale`.
#[derive(Clone, Debug)]
pub struct FatnessCertificate<T> {
    pub x: Vec<T>,
    pub scale: T,
    pub witness: Vec<T>,
    pub radius: T,
    /// Measured δ_D(witness)/scale.
    pub depth_ratio: T,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(param("d", "dimension must be at least 2"));
    }
    Ok(())
}

impl<T: Real> Domain<T> {
    pub fn whole(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            dim: d,
            kind: DomainKind::Whole,
        })
    }

    pub fn halfspace(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            dim: d,
            kind: DomainKind::HalfSpace,
        })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > T::zero()) {
            return Err(param("radius", "ball radius must be positive"));
        }
        Ok(Self {
            dim: center.len(),
            kind: DomainKind::Ball { center, radius },
        })
    }

    pub fn graph(d: usize, ell: ModulusSpec<T>, sign: GraphSign) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            dim: d,
            kind: DomainKind::Graph { ell, sign },
        })
    }

    pub fn collar(base: Domain<T>, width: T) -> Result<Self> {
        if !(width > T::zero()) {
            return Err(param("R", "collar width must be positive"));
        }
        Ok(Self {
            dim: base.dim,
            kind: DomainKind::Collar {
                base: Box::new(base),
                width,
            },
        })
    }

    pub fn intersect_ball(base: Domain<T>, center: Vec<T>, radius: T) -> Result<Self> {
        if center.len() != base.dim {
            return Err(param("center", "dimension mismatch"));
        }
        if !(radius > T::zero()) {
            return Err(param("radius", "ball radius must be positive"));
        }
        Ok(Self {
            dim: base.dim,
            kind: DomainKind::IntersectBall {
                base: Box::new(base),
                center,
                radius,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "point of dimension {} in a {}-dimensional domain",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Membership in the open set.
    pub fn contains(&self, x: &[T]) -> bool {
        match &self.kind {
            DomainKind::Whole => true,
            DomainKind::HalfSpace => x[self.dim - 1] > T::zero(),
            DomainKind::Ball { center, radius } => dist(x, center) < *radius,
            DomainKind::Graph { ell, sign } => x[self.dim - 1] > sign.factor::<T>() * gamma_ell(ell, x[0]),
            DomainKind::Collar { base, width } => {
                matches!(classify_collar(base, *width, x), CollarClass::Inside { .. })
            }
            DomainKind::IntersectBall { base, center, radius } => {
                dist(x, center) < *radius && base.contains(x)
            }
        }
    }

    /// Bounds (lower, upper) on δ(x) for a point inside; the upper bound is
    /// attained by a boundary point. `gap` is the relative tolerance for
    /// numerically located distances.
    pub fn distance_bounds(&self, x: &[T], gap: T) -> (T, T) {
        match &self.kind {
            DomainKind::Whole => (T::infinity(), T::infinity()),
            DomainKind::HalfSpace => {
                let h = x[self.dim - 1];
                (h, h)
            }
            DomainKind::Ball { center, radius } => {
                let h = *radius - dist(x, center);
                (h, h)
            }
            DomainKind::Graph { ell, sign } => {
                graph_distance(ell, sign.factor(), x[0], x[self.dim - 1], gap)
            }
            DomainKind::Collar { base, width } => match classify_collar_with(base, *width, x, gap) {
                CollarClass::Inside { lower, upper } => (lower.min(*width - upper), upper.min(*width - upper)),
                _ => (T::zero(), T::zero()),
            },
            DomainKind::IntersectBall { base, center, radius } => {
                let (lo, hi) = base.distance_bounds(x, gap);
                let h = *radius - dist(x, center);
                (lo.min(h), hi.min(h))
            }
        }
    }

    /// (certified lower bound, estimate) of δ(x).
    pub fn dist_to_boundary(&self, x: &[T]) -> Result<(T, T)> {
        self.check_point(x)?;
        if !self.contains(x) {
            return Err(Error::Domain("distance requested for a point outside the domain".into()));
        }
        let (lo, est) = self.distance_bounds(x, T::lit(TIGHT_GAP));
        let shrink = T::one() - T::lit(CERTIFY_SHRINK);
        let certified = if self.is_analytic() { lo } else { lo.min(est * shrink) };
        if !(certified > T::zero()) && !matches!(self.kind, DomainKind::Whole) {
            return Err(Error::Geometry(format!(
                "non-positive certified distance {} for an interior point",
                certified.as_f64()
            )));
        }
        Ok((certified, est))
    }

    fn is_analytic(&self) -> bool {
        match &self.kind {
            DomainKind::Whole | DomainKind::HalfSpace | DomainKind::Ball { .. } => true,
            DomainKind::Graph { ell, .. } => ell.is_zero(),
            DomainKind::Collar { base, .. } | DomainKind::IntersectBall { base, .. } => base.is_analytic(),
        }
    }

    /// γ times the certified lower bound on δ(x).
    pub fn inner_radius(&self, x: &[T], safety: T) -> Result<T> {
        if !(safety > T::zero() && safety <= T::one()) {
            return Err(param("safety", "must lie in (0, 1]"));
        }
        Ok(safety * self.dist_to_boundary(x)?.0)
    }

    /// Hot-loop variant: `None` if `x` is outside, else a certified interior
    /// radius scaled by `safety`.
    #[inline]
    pub fn locate(&self, x: &[T], safety: T) -> Option<T> {
        match &self.kind {
            DomainKind::Collar { base, width } => match classify_collar(base, *width, x) {
                CollarClass::Inside { lower, upper } => Some(safety * lower.min(*width - upper)),
                _ => None,
            },
            _ => {
                if !self.contains(x) {
                    return None;
                }
                let (lo, _) = self.distance_bounds(x, T::lit(HOT_GAP));
                Some(safety * lo)
            }
        }
    }

    /// Witness ball B(z, R/4) ⊂ D ∩ B(x, R) for x in the closure of a
    /// half-space or graph domain.
    pub fn fat_probe(&self, x: &[T], scale: T) -> Result<FatnessCertificate<T>> {
        self.check_point(x)?;
        if !(scale > T::zero()) {
            return Err(param("R", "scale must be positive"));
        }
        let quarter = scale * T::lit(0.25);
        let d = self.dim;
        let mut z = x.to_vec();
        match &self.kind {
            DomainKind::HalfSpace => {
                if x[d - 1] < T::zero() {
                    return Err(Error::Domain("fat_probe point outside the closure".into()));
                }
                z[d - 1] = z[d - 1] + quarter;
            }
            DomainKind::Graph { ell, sign } => {
                if x[d - 1] < sign.factor::<T>() * gamma_ell(ell, x[0]) {
                    return Err(Error::Domain("fat_probe point outside the closure".into()));
                }
                z[0] = match sign {
                    GraphSign::Above => z[0] - quarter,
                    GraphSign::Below => z[0] + quarter,
                };
                z[d - 1] = z[d - 1] + quarter;
            }
            _ => {
                return Err(Error::Geometry(
                    "fat_probe is defined for half-space and graph domains".into(),
                ))
            }
        }
        // B(z, R/4) ⊂ B(x, R): |z − x| + R/4 ≤ R.
        if dist(&z, x) + quarter > scale {
            return Err(Error::Geometry("witness ball leaves B(x, R)".into()));
        }
        // Γ depends on x_1 only, so the sphere's extreme points lie in the (x_1, x_d) plane.
        let shrink = T::one() - T::lit(CERTIFY_SHRINK);
        let samples = 512;
        let mut p = z.clone();
        for k in 0..samples {
            let th = T::lit(2.0) * T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(samples);
            p[0] = z[0] + quarter * shrink * th.cos();
            p[d - 1] = z[d - 1] + quarter * shrink * th.sin();
            if !self.contains(&p) {
                return Err(Error::Geometry(format!(
                    "witness sphere point {:?} outside the domain",
                    p.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
                )));
            }
        }
        let (lower, est) = self.distance_bounds(&z, T::lit(TIGHT_GAP));
        if lower < quarter * shrink {
            return Err(Error::Geometry(format!(
                "witness depth {} below R/4 = {}",
                lower.as_f64(),
                quarter.as_f64()
            )));
        }
        Ok(FatnessCertificate {
            x: x.to_vec(),
            scale,
            witness: z,
            radius: quarter,
            depth_ratio: est / scale,
        })
    }
}

/// Collar classification with progressively tighter distance bounds.
pub fn classify_collar<T: Real>(base: &Domain<T>, width: T, x: &[T]) -> CollarClass<T> {
    classify_collar_with(base, width, x, T::lit(HOT_GAP))
}

fn classify_collar_with<T: Real>(base: &Domain<T>, width: T, x: &[T], first_gap: T) -> CollarClass<T> {
    if !base.contains(x) {
        return CollarClass::Outside;
    }
    let mut gap = first_gap;
    loop {
        let (lo, hi) = base.distance_bounds(x, gap);
        if hi < width {
            return CollarClass::Inside { lower: lo, upper: hi };
        }
        if lo >= width {
            return CollarClass::Deep;
        }
        if gap < T::lit(1e-13) {
            return CollarClass::Deep;
        }
        gap = gap * T::lit(1e-3);
    }
}

struct Cell<T> {
    lb: T,
    lo: T,
    hi: T,
    glo: T,
    ghi: T,
}

impl<T: Real> PartialEq for Cell<T> {
    fn eq(&self, o: &Self) -> bool {
        self.lb == o.lb
    }
}
impl<T: Real> Eq for Cell<T> {}
impl<T: Real> PartialOrd for Cell<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Cell<T> {
    // Reversed: BinaryHeap pops the smallest lower bound first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.lb.partial_cmp(&self.lb).unwrap_or(Ordering::Equal)
    }
}

#[inline]
fn box_distance<T: Real>(a: T, b: T, x0: T, x1: T, y0: T, y1: T) -> T {
    let dx = (x0 - a).max(a - x1).max(T::zero());
    let dy = (y0 - b).max(b - y1).max(T::zero());
    dx.hypot(dy)
}

/// Distance from (a, b) to the curve {(t, s Γ(t))}: (lower bound, attained distance).
///
/// Γ is nondecreasing on t > 0, so each parameter cell's arc lies in the box
/// spanned by its endpoint values, whose distance is a valid lower bound.
/// Branch and bound on these boxes brackets the global minimiser; for tight
/// gaps the surviving cells are then refined by golden-section search and the
/// refined value is cross-checked against the branch-and-bound bound.
pub fn graph_distance<T: Real>(ell: &ModulusSpec<T>, s: T, a: T, b: T, gap: T) -> (T, T) {
    let refine_gap = T::lit(1e-4);
    if gap >= refine_gap {
        let bb = branch_and_bound(ell, s, a, b, gap, false);
        return (bb.lower, bb.best);
    }
    let bb = branch_and_bound(ell, s, a, b, refine_gap, true);
    if bb.lower == bb.best {
        return (bb.lower, bb.best);
    }
    let phi = |t: T| (t - a).hypot(s * gamma_ell(ell, t) - b);
    let mut best = bb.best;
    for (lo, hi) in bb.candidates {
        best = best.min(golden_section(&phi, lo, hi));
    }
    let lower = if best >= bb.lower {
        (best * (T::one() - gap)).max(bb.lower)
    } else {
        bb.lower.min(best)
    };
    (lower.min(best), best)
}

fn golden_section<T: Real, F: Fn(T) -> T>(f: &F, lo: T, hi: T) -> T {
    let g = T::lit(0.618_033_988_749_894_9);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = f(lo).min(f(hi)).min(fc).min(fd);
    let tol = T::lit(1e-12) * (lo.abs() + hi.abs() + T::lit(1e-300));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
            best = best.min(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
            best = best.min(fd);
        }
    }
    best
}

struct BranchBound<T> {
    lower: T,
    best: T,
    candidates: Vec<(T, T)>,
}

fn branch_and_bound<T: Real>(ell: &ModulusSpec<T>, s: T, a: T, b: T, gap: T, keep: bool) -> BranchBound<T> {
    let flat = if a <= T::zero() { b.abs() } else { a.hypot(b) };
    let exact = |v: T| BranchBound {
        lower: v,
        best: v,
        candidates: Vec::new(),
    };
    if ell.is_zero() {
        return exact(b.abs());
    }
    let gamma = |t: T| s * gamma_ell(ell, t);
    let mut best = flat;
    if a > T::zero() {
        best = best.min((b - gamma(a)).abs());
    }
    let lo = (a - best).max(T::zero());
    let hi = a + best;
    if hi <= T::zero() {
        return exact(best);
    }
    let (glo, ghi) = (gamma(lo), gamma(hi));
    best = best.min((lo - a).hypot(glo - b)).min((hi - a).hypot(ghi - b));
    let cell = |lo: T, hi: T, glo: T, ghi: T| Cell {
        lb: box_distance(a, b, lo, hi, glo.min(ghi), glo.max(ghi)),
        lo,
        hi,
        glo,
        ghi,
    };
    let mut heap = BinaryHeap::new();
    heap.push(cell(lo, hi, glo, ghi));
    let mut settled = T::infinity();
    let mut parked: Vec<(T, T, T)> = Vec::new();
    let tiny = T::epsilon() * T::lit(8.0);
    let mut iterations = 0usize;
    while let Some(c) = heap.pop() {
        let target = best * (T::one() - gap);
        if c.lb >= target {
            settled = settled.min(c.lb);
            if keep {
                parked.push((c.lb, c.lo, c.hi));
            }
            break;
        }
        iterations += 1;
        let width = c.hi - c.lo;
        if width <= tiny * (c.hi.abs() + best) || iterations > 20_000 {
            settled = settled.min(c.lb);
            if keep {
                parked.push((c.lb, c.lo, c.hi));
            }
            continue;
        }
        let mid = (c.lo + c.hi) * T::lit(0.5);
        let gm = gamma(mid);
        best = best.min((mid - a).hypot(gm - b));
        let target = best * (T::one() - gap);
        for child in [cell(c.lo, mid, c.glo, gm), cell(mid, c.hi, gm, c.ghi)] {
            if child.lb < target {
                heap.push(child);
            } else {
                settled = settled.min(child.lb);
                if keep {
                    parked.push((child.lb, child.lo, child.hi));
                }
            }
        }
    }
    let mut candidates = Vec::new();
    if keep {
        parked.extend(heap.into_iter().map(|c| (c.lb, c.lo, c.hi)));
        let mut live: Vec<(T, T)> = parked
            .into_iter()
            .filter(|&(lb, _, _)| lb <= best)
            .map(|(_, lo, hi)| (lo, hi))
            .collect();
        live.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        for (lo, hi) in live {
            match candidates.last_mut() {
                Some((_, h)) if lo <= *h => *h = (*h).max(hi),
                _ => candidates.push((lo, hi)),
            }
        }
    }
    BranchBound {
        lower: settled.min(best),
        best,
        candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distance_cases() {
        assert_eq!(box_distance(0.0, 0.0, 1.0, 2.0, -1.0, 1.0), 1.0);
        assert_eq!(box_distance(1.5, 0.0, 1.0, 2.0, -1.0, 1.0), 0.0);
        assert!((box_distance(0.0f64, 0.0, 3.0, 4.0, 4.0, 5.0) - 5.0).abs() < 1e-15);
    }
}
