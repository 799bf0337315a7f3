//! Convex regions in ℝⁿ: closed balls, H-polyhedra and lazily expanded
//! polyhedra, with the morphological contraction/expansion used to build
//! robust formulas.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

/// Rows with a squared norm below this are rejected as degenerate.
const MIN_ROW_NORM: f64 = 1e-12;
/// Feasibility slack used when checking projection candidates.
const FEAS_TOL: f64 = 1e-10;
/// Above this many active-set candidates the exterior distance falls back to
/// Dykstra's alternating projections.
const MAX_ACTIVE_SETS: usize = 20_000;
const DYKSTRA_SWEEPS: usize = 200;
const DYKSTRA_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("dimension mismatch: region has dimension {expected}, point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("contraction by {eps} leaves an empty set")]
    EmptyResult { eps: f64 },
    #[error("region contains arbitrarily large balls")]
    Unbounded,
    #[error("invalid region: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, RegionError>;

/// H-polyhedron `{x : aᵢ·x ≤ bᵢ}` with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl Polyhedron {
    /// Builds a polyhedron from raw rows; every row is rescaled to unit norm.
    pub fn new(rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(RegionError::Invalid("polyhedron needs at least one row".into()));
        }
        if rows.len() != offsets.len() {
            return Err(RegionError::Invalid(format!("{} rows but {} offsets", rows.len(), offsets.len())));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(RegionError::Invalid("zero-dimensional polyhedron".into()));
        }
        let mut normals = Vec::with_capacity(rows.len());
        let mut scaled = Vec::with_capacity(rows.len());
        for (i, (row, b)) in rows.into_iter().zip(offsets).enumerate() {
            if row.len() != dim {
                return Err(RegionError::Invalid(format!(
                    "row {i} has length {}, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().chain(std::iter::once(&b)).any(|v| !v.is_finite()) {
                return Err(RegionError::Invalid(format!("row {i} is not finite")));
            }
            let norm = dot(&row, &row).sqrt();
            if norm * norm < MIN_ROW_NORM {
                return Err(RegionError::Invalid(format!("row {i} has zero normal")));
            }
            normals.push(row.iter().map(|a| a / norm).collect());
            scaled.push(b / norm);
        }
        Ok(Self { dim, normals, offsets: scaled })
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`.
    pub fn axis_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(RegionError::Invalid("box bounds differ in length".into()));
        }
        let n = lower.len();
        let mut rows = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut hi = vec![0.0; n];
            hi[i] = 1.0;
            rows.push(hi);
            b.push(upper[i]);
            let mut lo = vec![0.0; n];
            lo[i] = -1.0;
            rows.push(lo);
            b.push(-lower[i]);
        }
        Self::new(rows, b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.normals.iter().map(Vec::as_slice).zip(self.offsets.iter().copied())
    }

    /// Largest row slack `max(aᵢ·x − bᵢ)`; nonpositive exactly on the set.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows().map(|(a, b)| dot(a, x) - b).fold(f64::NEG_INFINITY, f64::max)
    }

    fn shifted(&self, delta: f64) -> Self {
        Self {
            dim: self.dim,
            normals: self.normals.clone(),
            offsets: self.offsets.iter().map(|b| b - delta).collect(),
        }
    }

    /// Chebyshev LP: maximize ρ subject to aᵢ·x + ρ ≤ bᵢ with x and ρ free.
    /// A negative optimum means the polyhedron is empty.
    fn chebyshev(&self) -> Result<(f64, Vec<f64>)> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xs: Vec<_> = (0..self.dim).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        let rho = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        for (a, b) in self.rows() {
            let mut expr: Vec<_> = xs.iter().copied().zip(a.iter().copied()).collect();
            expr.push((rho, 1.0));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, b);
        }
        match lp.solve() {
            // minilp can report an unbounded optimum as an infinite value.
            Ok(sol) if !sol[rho].is_finite() => Err(RegionError::Unbounded),
            Ok(sol) => Ok((sol[rho], xs.iter().map(|&v| sol[v]).collect())),
            Err(minilp::Error::Unbounded) => Err(RegionError::Unbounded),
            Err(minilp::Error::Infeasible) => {
                Err(RegionError::Invalid("Chebyshev program infeasible".into()))
            }
        }
    }

    /// Euclidean distance to the polyhedron for a point outside it.
    fn exterior_distance(&self, x: &[f64]) -> f64 {
        let m = self.normals.len();
        let k_max = self.dim.min(m);
        if active_set_count(m, k_max) <= MAX_ACTIVE_SETS {
            self.distance_by_active_sets(x, k_max)
        } else {
            self.distance_by_dykstra(x)
        }
    }

    /// Exact projection by enumerating candidate faces: the projection lies on
    /// the affine hull of at most `dim` active rows.
    fn distance_by_active_sets(&self, x: &[f64], k_max: usize) -> f64 {
        let m = self.normals.len();
        let mut best = f64::INFINITY;
        let mut subset = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            subset.clear();
            subset.extend(0..k);
            loop {
                if let Some(y) = self.project_onto_active(x, &subset) {
                    if self.max_violation(&y) <= FEAS_TOL {
                        let d = dist(x, &y);
                        if d < best {
                            best = d;
                        }
                    }
                }
                if !next_combination(&mut subset, m) {
                    break;
                }
            }
        }
        best
    }

    fn project_onto_active(&self, x: &[f64], active: &[usize]) -> Option<Vec<f64>> {
        let k = active.len();
        let gram =
            nalgebra::DMatrix::from_fn(k, k, |i, j| dot(&self.normals[active[i]], &self.normals[active[j]]));
        let resid = nalgebra::DVector::from_iterator(
            k,
            active.iter().map(|&i| dot(&self.normals[i], x) - self.offsets[i]),
        );
        let lu = gram.lu();
        if lu.determinant().abs() < 1e-12 {
            return None;
        }
        let lambda = lu.solve(&resid)?;
        let mut y = x.to_vec();
        for (idx, &row) in active.iter().enumerate() {
            for (yj, aj) in y.iter_mut().zip(&self.normals[row]) {
                *yj -= lambda[idx] * aj;
            }
        }
        Some(y)
    }

    fn distance_by_dykstra(&self, x: &[f64]) -> f64 {
        let m = self.normals.len();
        let mut y = x.to_vec();
        let mut corrections = vec![vec![0.0; self.dim]; m];
        for _ in 0..DYKSTRA_SWEEPS {
            let before = y.clone();
            for (i, (a, b)) in self.normals.iter().zip(&self.offsets).enumerate() {
                let z: Vec<f64> = y.iter().zip(&corrections[i]).map(|(p, q)| p + q).collect();
                let viol = dot(a, &z) - b;
                let proj: Vec<f64> = if viol > 0.0 {
                    z.iter().zip(a).map(|(zj, aj)| zj - viol * aj).collect()
                } else {
                    z.clone()
                };
                corrections[i] = z.iter().zip(&proj).map(|(p, q)| p - q).collect();
                y = proj;
            }
            if dist(&before, &y) < DYKSTRA_TOL {
                break;
            }
        }
        // Dykstra may stop slightly outside; the row bound is a valid lower bound.
        dist(x, &y).max(self.max_violation(x))
    }
}

/// A closed convex region.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Polyhedron(Polyhedron),
    /// `{x : dist(x, base) ≤ margin}` for a polyhedral base.
    Expanded {
        base: Box<Region>,
        margin: f64,
    },
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(RegionError::Invalid("ball center is empty".into()));
        }
        if !(radius >= 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(RegionError::Invalid(format!("bad ball radius {radius}")));
        }
        Ok(Region::Ball { center, radius })
    }

    pub fn polyhedron(rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        Polyhedron::new(rows, offsets).map(Region::Polyhedron)
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Polyhedron(p) => p.dim(),
            Region::Expanded { base, .. } => base.dim(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RegionError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(match self {
            Region::Ball { center, radius } => dist(x, center) <= *radius,
            Region::Polyhedron(p) => p.max_violation(x) <= 0.0,
            Region::Expanded { margin, .. } => self.base_distance(x) <= *margin,
        })
    }

    /// Negative inside, positive outside, zero on the boundary.
    ///
    /// Outside a polyhedron this is the exact Euclidean distance; inside it is
    /// the largest row slack, which shares its sign and zero set with the true
    /// signed distance.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.signed_distance_unchecked(x))
    }

    pub(crate) fn signed_distance_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => dist(x, center) - radius,
            Region::Polyhedron(p) => {
                let slack = p.max_violation(x);
                if slack <= 0.0 {
                    slack
                } else {
                    p.exterior_distance(x)
                }
            }
            Region::Expanded { base, margin } => base.signed_distance_unchecked(x) - margin,
        }
    }

    fn base_distance(&self, x: &[f64]) -> f64 {
        match self {
            Region::Expanded { base, .. } => base.signed_distance_unchecked(x),
            other => other.signed_distance_unchecked(x),
        }
    }

    /// ε-contraction `{y : B_y(ε) ⊆ r}`.
    pub fn contract(&self, eps: f64) -> Result<Region> {
        check_eps(eps)?;
        if eps == 0.0 {
            return Ok(self.clone());
        }
        match self {
            Region::Ball { center, radius } => {
                if *radius < eps {
                    return Err(RegionError::EmptyResult { eps });
                }
                Ok(Region::Ball { center: center.clone(), radius: radius - eps })
            }
            Region::Polyhedron(p) => {
                match p.chebyshev() {
                    Ok((rho, _)) if rho < eps => return Err(RegionError::EmptyResult { eps }),
                    Ok(_) | Err(RegionError::Unbounded) => {}
                    Err(e) => return Err(e),
                }
                Ok(Region::Polyhedron(p.shifted(eps)))
            }
            Region::Expanded { base, margin } => {
                if eps < *margin {
                    Ok(Region::Expanded { base: base.clone(), margin: margin - eps })
                } else if eps == *margin {
                    Ok((**base).clone())
                } else {
                    base.contract(eps - margin)
                }
            }
        }
    }

    /// ε-expansion `{x : dist(x, r) ≤ ε}`.
    pub fn expand(&self, eps: f64) -> Result<Region> {
        check_eps(eps)?;
        if eps == 0.0 {
            return Ok(self.clone());
        }
        Ok(match self {
            Region::Ball { center, radius } => Region::Ball { center: center.clone(), radius: radius + eps },
            Region::Polyhedron(_) => Region::Expanded { base: Box::new(self.clone()), margin: eps },
            Region::Expanded { base, margin } => {
                Region::Expanded { base: base.clone(), margin: margin + eps }
            }
        })
    }

    /// Radius of the largest ball inside the region.
    pub fn inner_radius(&self) -> Result<f64> {
        match self {
            Region::Ball { radius, .. } => Ok(*radius),
            Region::Polyhedron(p) => {
                let (rho, _) = p.chebyshev()?;
                if rho < -FEAS_TOL {
                    return Err(RegionError::Invalid("polyhedron is empty".into()));
                }
                Ok(rho.max(0.0))
            }
            Region::Expanded { base, margin } => Ok(base.inner_radius()? + margin),
        }
    }

    /// Sub-interval `[s₀, s₁] ⊆ [0, 1]` of the segment `p + s(q − p)` lying in
    /// the region. Convexity guarantees the intersection is a single interval.
    pub(crate) fn segment_overlap(&self, p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
        match self {
            Region::Ball { center, radius } => ball_segment(center, *radius, p, q),
            Region::Polyhedron(poly) => polyhedron_segment(poly, p, q),
            Region::Expanded { .. } => convex_segment(self, p, q),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(RegionError::Invalid(format!("margin must be finite and ≥ 0, got {eps}")));
    }
    Ok(())
}

fn lerp(p: &[f64], q: &[f64], s: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| a + s * (b - a)).collect()
}

fn ball_segment(center: &[f64], radius: f64, p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let w: Vec<f64> = p.iter().zip(center).map(|(a, b)| a - b).collect();
    let a = dot(&d, &d);
    let b = dot(&d, &w);
    let c = dot(&w, &w) - radius * radius;
    if a == 0.0 {
        return (c <= 0.0).then_some((0.0, 1.0));
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // Cancellation-free pair of roots.
    let qv = -(b + b.signum() * root);
    let (mut s0, mut s1) = if qv == 0.0 { (0.0, 0.0) } else { (qv / a, c / qv) };
    if s0 > s1 {
        std::mem::swap(&mut s0, &mut s1);
    }
    let lo = s0.max(0.0);
    let hi = s1.min(1.0);
    (lo <= hi).then_some((lo, hi))
}

fn polyhedron_segment(poly: &Polyhedron, p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for (a, b) in poly.rows() {
        let rate = dot(a, &d);
        let slack = b - dot(a, p);
        if rate == 0.0 {
            if slack < 0.0 {
                return None;
            }
        } else if rate > 0.0 {
            hi = hi.min(slack / rate);
        } else {
            lo = lo.max(slack / rate);
        }
        if lo > hi {
            return None;
        }
    }
    Some((lo, hi))
}

/// Generic convex case: the signed distance is convex along the segment, so
/// its sublevel set is found by golden-section minimization followed by
/// bisection on each side.
fn convex_segment(region: &Region, p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
    let sd = |s: f64| region.signed_distance_unchecked(&lerp(p, q, s));
    let tol = 1e-10;
    let f0 = sd(0.0);
    let f1 = sd(1.0);
    let inside = |v: f64| v <= 0.0;
    if inside(f0) && inside(f1) {
        return Some((0.0, 1.0));
    }
    let s_in = if inside(f0) {
        0.0
    } else if inside(f1) {
        1.0
    } else {
        let (s_min, f_min) = golden_min(&sd, 0.0, 1.0, tol);
        if !inside(f_min) {
            return None;
        }
        s_min
    };
    let lo = if inside(f0) { 0.0 } else { bisect_boundary(&sd, 0.0, s_in, tol) };
    let hi = if inside(f1) { 1.0 } else { bisect_boundary(&sd, 1.0, s_in, tol) };
    Some((lo, hi))
}

/// Bisects between an outside parameter and an inside one; returns the
/// parameter closest to `outside` that is still inside.
fn bisect_boundary(f: &impl Fn(f64) -> f64, outside: f64, inside: f64, tol: f64) -> f64 {
    let (mut out, mut inn) = (outside, inside);
    while (out - inn).abs() > tol {
        let mid = 0.5 * (out + inn);
        if f(mid) <= 0.0 {
            inn = mid;
        } else {
            out = mid;
        }
    }
    inn
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= 0.0 {
            return (c, fc);
        }
        if fd <= 0.0 {
            return (d, fd);
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let s = 0.5 * (a + b);
    (s, f(s))
}

fn active_set_count(m: usize, k_max: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for k in 1..=k_max {
        binom = binom.saturating_mul(m - k + 1) / k;
        total = total.saturating_add(binom);
    }
    total
}

fn next_combination(subset: &mut [usize], m: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < m - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box() -> Region {
        Region::Polyhedron(Polyhedron::axis_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap())
    }

    fn square01() -> Region {
        Region::Polyhedron(Polyhedron::axis_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap())
    }

    fn triangle() -> Region {
        Region::polyhedron(vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]], vec![0.0, 0.0, 1.0])
            .unwrap()
    }

    #[test]
    fn membership() {
        let b = Region::ball(vec![0.0, 0.0], 0.1).unwrap();
        assert!(b.contains(&[0.0, 0.0]).unwrap());
        assert!(!b.contains(&[0.2, 0.0]).unwrap());
        assert!(unit_box().contains(&[1.0, 1.0]).unwrap());
        assert_eq!(b.contains(&[0.0]), Err(RegionError::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn rows_are_normalized() {
        let r = Region::polyhedron(vec![vec![3.0, 4.0]], vec![5.0]).unwrap();
        let Region::Polyhedron(p) = &r else { unreachable!() };
        let (a, b) = p.rows().next().unwrap();
        assert_abs_diff_eq!(dot(a, a), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
        assert!(Region::polyhedron(vec![vec![0.0, 0.0]], vec![1.0]).is_err());
    }

    #[test]
    fn signed_distances() {
        let b = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.signed_distance(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(b.signed_distance(&[0.0, 0.0]).unwrap(), -1.0);
        let half = Region::polyhedron(vec![vec![1.0, 0.0]], vec![0.0]).unwrap();
        assert_abs_diff_eq!(half.signed_distance(&[0.3, 5.0]).unwrap(), 0.3, epsilon = 1e-15);
        // Corner region: distance to vertex (1,1) from (2,2).
        assert_abs_diff_eq!(unit_box().signed_distance(&[2.0, 2.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn contraction_cases() {
        let b = Region::ball(vec![0.0, 0.0], 0.1).unwrap();
        match b.contract(0.05).unwrap() {
            Region::Ball { radius, .. } => assert_abs_diff_eq!(radius, 0.05, epsilon = 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        let shrunk = square01().contract(0.1).unwrap();
        let expected = Polyhedron::axis_box(&[0.1, 0.1], &[0.9, 0.9]).unwrap();
        let Region::Polyhedron(p) = &shrunk else { panic!() };
        for ((a1, b1), (a2, b2)) in p.rows().zip(expected.rows()) {
            assert_eq!(a1, a2);
            assert_abs_diff_eq!(b1, b2, epsilon = 1e-15);
        }
        assert_eq!(square01().contract(0.0).unwrap(), square01());
        assert_eq!(b.contract(0.2), Err(RegionError::EmptyResult { eps: 0.2 }));
        assert_eq!(square01().contract(0.6), Err(RegionError::EmptyResult { eps: 0.6 }));
    }

    #[test]
    fn expansion_cases() {
        let b = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.expand(0.25).unwrap(), Region::ball(vec![0.0, 0.0], 1.25).unwrap());
        assert_eq!(unit_box().expand(0.0).unwrap(), unit_box());
        let grown = unit_box().expand(0.1).unwrap();
        assert!(grown.contains(&[1.05, 0.5]).unwrap());
        assert!(!grown.contains(&[1.15, 0.5]).unwrap());
        // expand of expand merges margins
        match grown.expand(0.2).unwrap() {
            Region::Expanded { base, margin } => {
                assert_abs_diff_eq!(margin, 0.3, epsilon = 1e-15);
                assert!(matches!(*base, Region::Polyhedron(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
        // contraction of an expanded region
        let back = grown.contract(0.1).unwrap();
        assert_eq!(back, unit_box());
        let deeper = grown.contract(0.3).unwrap();
        assert!(deeper.contains(&[0.8, 0.8]).unwrap());
        assert!(!deeper.contains(&[0.85, 0.0]).unwrap());
    }

    #[test]
    fn inner_radii() {
        assert_eq!(Region::ball(vec![1.0], 0.1).unwrap().inner_radius().unwrap(), 0.1);
        assert_abs_diff_eq!(square01().inner_radius().unwrap(), 0.5, epsilon = 1e-9);
        let half = Region::polyhedron(vec![vec![1.0, 0.0]], vec![0.0]).unwrap();
        assert_eq!(half.inner_radius(), Err(RegionError::Unbounded));
        assert_abs_diff_eq!(unit_box().expand(0.2).unwrap().inner_radius().unwrap(), 1.2, epsilon = 1e-9);
    }

    /// Grid search of the Chebyshev radius: maximize min row slack.
    fn chebyshev_by_grid(r: &Region) -> f64 {
        let Region::Polyhedron(p) = r else { panic!() };
        let slack = |x: f64, y: f64| -p.max_violation(&[x, y]);
        let (mut best, mut bx, mut by) = (f64::NEG_INFINITY, 0.0, 0.0);
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                let s = slack(x, y);
                if s > best {
                    (best, bx, by) = (s, x, y);
                }
            }
        }
        let mut step = 1.0 / n as f64;
        while step > 1e-7 {
            let mut improved = false;
            for (dx, dy) in [
                (step, 0.0),
                (-step, 0.0),
                (0.0, step),
                (0.0, -step),
                (step, step),
                (step, -step),
                (-step, step),
                (-step, -step),
            ] {
                let s = slack(bx + dx, by + dy);
                if s > best {
                    (best, bx, by) = (s, bx + dx, by + dy);
                    improved = true;
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        best
    }

    #[test]
    fn triangle_chebyshev_radius_matches_grid_oracle() {
        let oracle = chebyshev_by_grid(&triangle());
        assert_abs_diff_eq!(oracle, 0.292_893, epsilon = 1e-4);
        assert_abs_diff_eq!(triangle().inner_radius().unwrap(), oracle, epsilon = 1e-4);
        assert_abs_diff_eq!(triangle().inner_radius().unwrap(), (2.0 - 2f64.sqrt()) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn dykstra_agrees_with_active_sets() {
        let Region::Polyhedron(p) = triangle() else { panic!() };
        for x in [[2.0, 2.0], [-1.0, 0.3], [-0.5, -0.5], [0.9, -2.0]] {
            let exact = p.distance_by_active_sets(&x, 2);
            let approx = p.distance_by_dykstra(&x);
            assert_abs_diff_eq!(exact, approx, epsilon = 1e-8);
        }
    }

    #[test]
    fn segment_chord() {
        let b = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let (lo, hi) = b.segment_overlap(&[-2.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(lo, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.75, epsilon = 1e-15);
        assert!(b.segment_overlap(&[-2.0, 2.0], &[2.0, 2.0]).is_none());
        let (lo, hi) = unit_box().segment_overlap(&[-3.0, 0.0], &[3.0, 0.0]).unwrap();
        assert_abs_diff_eq!(lo, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 2.0 / 3.0, epsilon = 1e-15);
        let grown = unit_box().expand(0.5).unwrap();
        let (lo, hi) = grown.segment_overlap(&[-3.0, 0.0], &[3.0, 0.0]).unwrap();
        assert_abs_diff_eq!(lo, 1.5 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 4.5 / 6.0, epsilon = 1e-9);
    }
}
