//! Unordered Q-tuples of points in ℝⁿ and the optimal-assignment metric 𝒢.

use alloc::vec;
use alloc::vec::Vec;

use crate::assignment::{canonical_assignment, hungarian};
use crate::error::{invalid, Error, Result};
use crate::math::{dist_sq, dot};
#[allow(unused_imports)]
use crate::math::Real;

/// A member of 𝐐_Q(ℝⁿ): Q points of ℝⁿ, repetitions allowed, order irrelevant.
///
/// Coordinates are stored sheet-major, `points[j * n + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint {
    q: usize,
    n: usize,
    points: Vec<f64>,
}

impl QPoint {
    pub fn new(q: usize, n: usize, points: Vec<f64>) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(invalid("Q and n must be positive"));
        }
        if points.len() != q * n {
            return Err(invalid(alloc::format!(
                "expected {} coordinates for Q = {q}, n = {n}, got {}",
                q * n,
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        Ok(Self { q, n, points })
    }

    /// Builds a point from a list of sheets, each of length `n`.
    pub fn from_sheets<S: AsRef<[f64]>>(n: usize, sheets: &[S]) -> Result<Self> {
        let mut points = Vec::with_capacity(sheets.len() * n);
        for s in sheets {
            let s = s.as_ref();
            if s.len() != n {
                return Err(invalid("sheet dimension mismatch"));
            }
            points.extend_from_slice(s);
        }
        Self::new(sheets.len(), n, points)
    }

    /// `Q[[a]]`.
    pub fn constant(q: usize, a: &[f64]) -> Result<Self> {
        let sheets: Vec<&[f64]> = (0..q).map(|_| a).collect();
        Self::from_sheets(a.len(), &sheets)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sheet(&self, j: usize) -> &[f64] {
        &self.points[j * self.n..(j + 1) * self.n]
    }

    pub fn sheets(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.n)
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub(crate) fn from_raw(q: usize, n: usize, points: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), q * n);
        Self { q, n, points }
    }

    /// Largest pairwise distance between sheets.
    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for a in 0..self.q {
            for b in a + 1..self.q {
                d2 = d2.max(dist_sq(self.sheet(a), self.sheet(b)));
            }
        }
        d2.sqrt()
    }

    /// Coincidence tolerance used when no explicit one is given.
    pub fn default_dedup_tol(&self) -> f64 {
        1e-9 * (1.0 + self.diameter())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.q != other.q || self.n != other.n {
            return Err(invalid(alloc::format!(
                "shape mismatch: (Q, n) = ({}, {}) vs ({}, {})",
                self.q,
                self.n,
                other.q,
                other.n
            )));
        }
        Ok(())
    }
}

/// `spt(p)` with multiplicities: `Σᵢ ℓᵢ [[qᵢ]]` with distinct sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportDecomposition {
    n: usize,
    sites: Vec<f64>,
    multiplicities: Vec<usize>,
}

impl SupportDecomposition {
    pub fn new(n: usize, sites: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if n == 0 || sites.len() != n * multiplicities.len() || multiplicities.is_empty() {
            return Err(invalid("site list and multiplicities disagree"));
        }
        if multiplicities.iter().any(|&m| m == 0) {
            return Err(invalid("multiplicities must be positive"));
        }
        Ok(Self {
            n,
            sites,
            multiplicities,
        })
    }

    pub fn count(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total multiplicity Σℓᵢ.
    pub fn q(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.n..(i + 1) * self.n]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[f64]> {
        self.sites.chunks_exact(self.n)
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Index of the site nearest to `y`.
    pub fn nearest_site(&self, y: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.sites().enumerate() {
            let d = dist_sq(s, y);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// The multiset `Σ ℓᵢ [[qᵢ]]`, sheets grouped by site.
    pub fn rebuild(&self) -> QPoint {
        let mut points = Vec::with_capacity(self.q() * self.n);
        for (s, &m) in self.sites().zip(&self.multiplicities) {
            for _ in 0..m {
                points.extend_from_slice(s);
            }
        }
        QPoint::from_raw(self.q(), self.n, points)
    }
}

/// Squared 𝒢 between two sheet arrays of shape `q × n`, writing the optimal
/// `perm` (sheet `i` of `a` ↔ sheet `perm[i]` of `b`).
pub(crate) fn match_sheets(a: &[f64], b: &[f64], q: usize, n: usize, perm: &mut [usize]) -> f64 {
    match q {
        1 => {
            perm[0] = 0;
            dist_sq(a, b)
        }
        2 => {
            let (a0, a1) = (&a[..n], &a[n..2 * n]);
            let (b0, b1) = (&b[..n], &b[n..2 * n]);
            let straight = dist_sq(a0, b0) + dist_sq(a1, b1);
            let crossed = dist_sq(a0, b1) + dist_sq(a1, b0);
            if crossed < straight {
                perm[0] = 1;
                perm[1] = 0;
                crossed
            } else {
                perm[0] = 0;
                perm[1] = 1;
                straight
            }
        }
        _ => {
            let mut cost = vec![0.0; q * q];
            for i in 0..q {
                for j in 0..q {
                    cost[i * q + j] = dist_sq(&a[i * n..(i + 1) * n], &b[j * n..(j + 1) * n]);
                }
            }
            let res = hungarian(&cost, q);
            perm.copy_from_slice(&res.perm);
            res.cost
        }
    }
}

/// Squared 𝒢 between raw sheet arrays.
pub(crate) fn metric_sq_sheets(a: &[f64], b: &[f64], q: usize, n: usize) -> f64 {
    let mut perm = [0usize; 8];
    if q <= 8 {
        match_sheets(a, b, q, n, &mut perm[..q])
    } else {
        let mut perm = vec![0usize; q];
        match_sheets(a, b, q, n, &mut perm)
    }
}

/// 𝒢(p, r) = min over permutations σ of (Σᵢ |pᵢ − r_σ(i)|²)^{1/2}.
pub fn metric_g(p: &QPoint, r: &QPoint) -> Result<f64> {
    p.check_compatible(r)?;
    Ok(metric_sq_sheets(&p.points, &r.points, p.q, p.n).max(0.0).sqrt())
}

/// An optimal matching with its distance; ties resolve to the
/// lexicographically smallest permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub distance: f64,
    /// Sheet `i` of the first argument is paired with sheet `perm[i]` of the second.
    pub perm: Vec<usize>,
}

pub fn optimal_matching(p: &QPoint, r: &QPoint) -> Result<Matching> {
    p.check_compatible(r)?;
    let q = p.q;
    let mut cost = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            cost[i * q + j] = dist_sq(p.sheet(i), r.sheet(j));
        }
    }
    let a = canonical_assignment(&cost, q, 1e-12);
    Ok(Matching {
        distance: a.cost.max(0.0).sqrt(),
        perm: a.perm,
    })
}

/// Clusters sheets closer than `dedup_tol` (single linkage) into sites.
///
/// Each site is the first sheet of its cluster in sheet order.
pub fn support(p: &QPoint, dedup_tol: f64) -> SupportDecomposition {
    let q = p.q;
    let mut label = vec![usize::MAX; q];
    let mut sites = Vec::new();
    let mut mult = Vec::new();
    let tol2 = dedup_tol * dedup_tol;
    for j in 0..q {
        if label[j] != usize::MAX {
            continue;
        }
        let id = mult.len();
        label[j] = id;
        let mut count = 1;
        let mut stack = vec![j];
        while let Some(a) = stack.pop() {
            for b in 0..q {
                if label[b] == usize::MAX && dist_sq(p.sheet(a), p.sheet(b)) <= tol2 {
                    label[b] = id;
                    count += 1;
                    stack.push(b);
                }
            }
        }
        sites.extend_from_slice(p.sheet(j));
        mult.push(count);
    }
    SupportDecomposition {
        n: p.n,
        sites,
        multiplicities: mult,
    }
}

/// Minimum distance between distinct sites; `+∞` for a single site.
pub fn min_separation(s: &SupportDecomposition) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..s.count() {
        for j in i + 1..s.count() {
            best = best.min(dist_sq(s.site(i), s.site(j)));
        }
    }
    if best.is_finite() {
        best.sqrt()
    } else {
        best
    }
}

/// `(Π_α)_# p = Σⱼ [[⟨α, pⱼ⟩]]`, a member of 𝐐_Q(ℝ).
pub fn pushforward_projection(alpha_dir: &[f64], p: &QPoint) -> Result<QPoint> {
    if alpha_dir.len() != p.n {
        return Err(invalid("direction dimension mismatch"));
    }
    let len = dot(alpha_dir, alpha_dir).sqrt();
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(alloc::format!(
            "direction must be a unit vector (|v| = {len})"
        )));
    }
    let proj = p.sheets().map(|s| dot(alpha_dir, s)).collect();
    Ok(QPoint::from_raw(p.q, 1, proj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(n: usize, sheets: &[&[f64]]) -> QPoint {
        QPoint::from_sheets(n, sheets).unwrap()
    }

    #[test]
    fn metric_identity_and_sqrt2_example() {
        let p = qp(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        let r = qp(2, &[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert_eq!(metric_g(&p, &p).unwrap(), 0.0);
        assert!((metric_g(&p, &r).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_rejects_shape_mismatch() {
        let p = qp(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        let r = qp(2, &[&[0.0, 0.0]]);
        assert!(matches!(metric_g(&p, &r), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        assert!(QPoint::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(QPoint::new(2, 2, vec![0.0; 3]).is_err());
        assert!(QPoint::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn support_examples() {
        let a = [0.3, -1.0];
        let s = support(&QPoint::constant(3, &a).unwrap(), 1e-9);
        assert_eq!(s.count(), 1);
        assert_eq!(s.site(0), &a);
        assert_eq!(s.multiplicities(), &[3]);

        let s = support(&qp(2, &[&[0.0, 0.0], &[1.0, 0.0]]), 1e-9);
        assert_eq!(s.multiplicities(), &[1, 1]);
    }

    #[test]
    fn min_separation_examples() {
        let s = support(&QPoint::constant(2, &[1.0, 1.0]).unwrap(), 1e-9);
        assert_eq!(min_separation(&s), f64::INFINITY);
        let s = support(&qp(2, &[&[0.0, 0.0], &[2.5, 0.0]]), 1e-9);
        assert_eq!(min_separation(&s), 2.5);
    }

    #[test]
    fn pushforward_on_axis() {
        let p = qp(2, &[&[3.0, 4.0], &[5.0, 6.0]]);
        let pr = pushforward_projection(&[1.0, 0.0], &p).unwrap();
        assert_eq!(pr.coords(), &[3.0, 5.0]);
        assert_eq!(pr.q(), 2);
        assert!(pushforward_projection(&[1.0, 1.0], &p).is_err());
    }

    #[test]
    fn canonical_matching_on_ties() {
        let p = qp(1, &[&[0.0], &[0.0]]);
        let r = qp(1, &[&[1.0], &[-1.0]]);
        let m = optimal_matching(&p, &r).unwrap();
        assert_eq!(m.perm, vec![0, 1]);
        assert!((m.distance - 2f64.sqrt()).abs() < 1e-15);
    }
}
