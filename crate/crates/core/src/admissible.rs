//! Angle-separated coordinate frames, admissible balls and nested ball chains.
//!
//! An admissible ball `𝔹_τ(q)` around `q = Σ ℓᵢ[[qᵢ]]` is one whose site balls
//! `B_τ(qᵢ)` have pairwise disjoint projections on every frame axis. Inside
//! such a ball each sheet of `p` belongs to exactly one site, which makes the
//! sheet-wise subtraction `q ⊖ p` and the interpolation `p(s)` well defined.
//!
//! [`nested_chain`] runs the standard modification procedure: sites closer
//! than a rapidly growing threshold are merged level by level, producing radii
//! `0 = ρ₀ < σ₀ < ρ₁ < … < ρ_L < σ_L = ∞`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::ProjectionFrame;
use crate::error::{invalid, Error, Result};
use crate::math::{dist_sq, dot, norm};
#[allow(unused_imports)]
use crate::math::Real;
use crate::qspace::{metric_g, min_separation, support, QPoint, SupportDecomposition};

/// Guaranteed angle between difference directions and the frame hyperplanes.
///
/// `π/2` for `n = 1`, otherwise `2^{-(n−1)(Q(Q−1)−1)} · arcsin(1/√n)`.
pub fn theta0(n: usize, q: usize) -> f64 {
    if n <= 1 {
        return FRAC_PI_2;
    }
    let pairs = (q * q.saturating_sub(1)).saturating_sub(1);
    let exponent = (n - 1) * pairs;
    libm::pow(0.5, exponent as f64) * (1.0 / (n as f64).sqrt()).asin()
}

/// `δ_ℓ = arcsin(1/√n) · 2^{-(n−1)(ℓ−1)}`.
pub fn delta_cascade(n: usize, ell: usize) -> f64 {
    let exponent = (n.saturating_sub(1)) * ell.saturating_sub(1);
    (1.0 / (n as f64).sqrt()).asin() * libm::pow(0.5, exponent as f64)
}

/// How the frame of an [`AngleSeparatedFrame`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameConstruction {
    /// No difference directions to separate (a single site, or `n = 1`).
    Trivial,
    /// The inductive rotation procedure passed verification.
    Inductive,
    /// The inductive frame failed verification; a seeded random orthonormal
    /// frame passed after `attempts` draws.
    Fallback { attempts: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSeparatedFrame {
    pub frame: ProjectionFrame,
    /// `min_{v, α} arcsin |⟨e_α, v⟩|` over all difference directions `v`.
    pub achieved_min_angle: f64,
    pub target_theta0: f64,
    pub construction: FrameConstruction,
}

/// Unit difference directions of the sites, with `v` and `−v` identified.
fn difference_directions(s: &SupportDecomposition) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..s.count() {
        for j in i + 1..s.count() {
            let mut v: Vec<f64> = s.site(j).iter().zip(s.site(i)).map(|(a, b)| a - b).collect();
            let len = norm(&v);
            if len == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= len);
            if dirs.iter().all(|w| dot(w, &v).abs() < 1.0 - 1e-12) {
                dirs.push(v);
            }
        }
    }
    dirs
}

/// Smallest angle between any direction and any frame hyperplane, with the
/// offending `(direction, axis)` pair.
fn worst_angle(rows: &[Vec<f64>], dirs: &[Vec<f64>]) -> (f64, usize, usize) {
    let mut worst = (FRAC_PI_2, 0, 0);
    for (d, v) in dirs.iter().enumerate() {
        for (a, e) in rows.iter().enumerate() {
            let ang = dot(e, v).abs().min(1.0).asin();
            if ang < worst.0 {
                worst = (ang, d, a);
            }
        }
    }
    worst
}

fn gram_schmidt(rows: &mut [Vec<f64>]) -> bool {
    for a in 0..rows.len() {
        for b in 0..a {
            let c = dot(&rows[a], &rows[b]);
            let (lo, hi) = rows.split_at_mut(a);
            hi[0].iter_mut().zip(&lo[b]).for_each(|(x, y)| *x -= c * y);
        }
        let len = norm(&rows[a]);
        if len < 1e-8 {
            return false;
        }
        rows[a].iter_mut().for_each(|x| *x /= len);
    }
    true
}

/// Rotation of ℝⁿ in the plane of unit `w` and `u ⊥ w` by `angle`, moving `w`
/// towards `u`. Returned row-major.
fn plane_rotation(w: &[f64], u: &[f64], angle: f64) -> Vec<f64> {
    let n = w.len();
    let (s, c) = (angle.sin(), angle.cos());
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            r[i * n + j] =
                id + (c - 1.0) * (w[i] * w[j] + u[i] * u[j]) + s * (u[i] * w[j] - w[i] * u[j]);
        }
    }
    r
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// The inductive rotation procedure: place the first direction on the
/// diagonal of the frame, then for each further direction rotate the frame
/// whenever the direction comes within `δ_{ℓ−1}` of a frame hyperplane.
fn inductive_frame(n: usize, dirs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    // Householder reflection H with H·(1,…,1)/√n = v₁; frame rows eₐ = H·std_a.
    let diag = 1.0 / (n as f64).sqrt();
    let v1 = &dirs[0];
    let w: Vec<f64> = v1.iter().map(|x| diag - x).collect();
    let w2 = dot(&w, &w);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let id = if i == a { 1.0 } else { 0.0 };
                    if w2 < 1e-30 {
                        id
                    } else {
                        id - 2.0 * w[i] * w[a] / w2
                    }
                })
                .collect()
        })
        .collect();

    for (idx, v) in dirs.iter().enumerate().skip(1) {
        let ell = idx + 1;
        let delta_prev = delta_cascade(n, ell - 1);
        let mut violated: Vec<(f64, usize)> = rows
            .iter()
            .enumerate()
            .map(|(a, e)| (dot(e, v).abs().min(1.0).asin(), a))
            .filter(|(ang, _)| *ang < delta_prev)
            .collect();
        if violated.is_empty() {
            continue;
        }
        violated.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

        let mut moving = v.clone();
        let mut total = vec![0.0; n * n];
        (0..n).for_each(|i| total[i * n + i] = 1.0);
        for (i, &(_, axis)) in violated.iter().enumerate() {
            let e = &rows[axis];
            let c = dot(e, &moving);
            let current = c.abs().min(1.0).asin();
            let target = delta_prev * libm::pow(0.5, (i + 1) as f64);
            if current >= target {
                continue;
            }
            let sign = if c < 0.0 { -1.0 } else { 1.0 };
            let pole: Vec<f64> = e.iter().map(|x| sign * x).collect();
            let along = dot(&pole, &moving);
            let mut u: Vec<f64> = pole.iter().zip(&moving).map(|(p, m)| p - along * m).collect();
            let len = norm(&u);
            if len < 1e-15 {
                continue;
            }
            u.iter_mut().for_each(|x| *x /= len);
            let rot = plane_rotation(&moving, &u, target - current);
            moving = mat_vec(&rot, &moving);
            total = mat_mul(&rot, &total, n);
        }
        // Dual rotation on the frame: e'_α = Rᵀ e_α, so ⟨e'_α, v⟩ = ⟨e_α, R v⟩.
        rows = rows
            .iter()
            .map(|e| (0..n).map(|j| (0..n).map(|i| total[i * n + j] * e[i]).sum()).collect())
            .collect();
    }
    gram_schmidt(&mut rows);
    rows
}

fn random_frame(n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
        .collect();
    gram_schmidt(&mut rows).then_some(rows)
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

const FALLBACK_ATTEMPTS: usize = 4096;

/// A frame whose hyperplanes stay at angle `≥ θ₀(n, Q)` from every difference
/// direction `(qᵢ − qⱼ)/|qᵢ − qⱼ|` of the sites of `s`.
///
/// The inductive rotation procedure is tried first; its result is accepted
/// only if the direct check `|⟨e_α, v⟩| ≥ sin θ₀` passes for every pair.
pub fn angle_separated_frame(s: &SupportDecomposition) -> Result<AngleSeparatedFrame> {
    let n = s.n();
    let q = s.q();
    let target = theta0(n, q);
    let dirs = difference_directions(s);
    if n == 1 || dirs.is_empty() {
        let frame = ProjectionFrame::axes(n, q);
        let rows: Vec<Vec<f64>> = (0..n).map(|a| frame.direction(a).to_vec()).collect();
        return Ok(AngleSeparatedFrame {
            frame,
            achieved_min_angle: worst_angle(&rows, &dirs).0,
            target_theta0: target,
            construction: FrameConstruction::Trivial,
        });
    }

    let bound = target.sin();
    let passes = |rows: &[Vec<f64>]| {
        dirs.iter()
            .all(|v| rows.iter().all(|e| dot(e, v).abs() >= bound))
    };

    let rows = inductive_frame(n, &dirs);
    let (rows, construction) = if passes(&rows) {
        (rows, FrameConstruction::Inductive)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51ed_f4a3_u64 ^ (n as u64) << 32 ^ q as u64);
        let mut found = None;
        for attempt in 1..=FALLBACK_ATTEMPTS {
            if let Some(candidate) = random_frame(n, &mut rng) {
                if passes(&candidate) {
                    found = Some((candidate, attempt));
                    break;
                }
            }
        }
        match found {
            Some((rows, attempts)) => (rows, FrameConstruction::Fallback { attempts }),
            None => {
                let (achieved, direction, axis) = worst_angle(&rows, &dirs);
                return Err(Error::ConstructionFailed {
                    direction,
                    axis,
                    achieved,
                    required: target,
                });
            }
        }
    };

    let achieved = worst_angle(&rows, &dirs).0;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(AngleSeparatedFrame {
        frame: ProjectionFrame::new(n, q, flat)?,
        achieved_min_angle: achieved,
        target_theta0: target,
        construction,
    })
}

/// `𝔹^𝐐_τ(q)` with the frame that defines admissibility.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleBall {
    pub center: SupportDecomposition,
    pub radius: f64,
    pub frame: ProjectionFrame,
}

/// True iff on every axis `α ≤ n` the projected site intervals
/// `[⟨e_α, qᵢ⟩ − τ, ⟨e_α, qᵢ⟩ + τ]` are pairwise disjoint.
pub fn is_admissible(b: &AdmissibleBall) -> bool {
    let c = &b.center;
    if c.n() != b.frame.n() || !(b.radius >= 0.0) {
        return false;
    }
    for a in 0..b.frame.n() {
        let e = b.frame.direction(a);
        for i in 0..c.count() {
            for j in i + 1..c.count() {
                let gap = (dot(e, c.site(i)) - dot(e, c.site(j))).abs();
                if gap <= 2.0 * b.radius {
                    return false;
                }
            }
        }
    }
    true
}

/// For each sheet of `p`, the index of the site ball containing it.
fn assign_to_sites(b: &AdmissibleBall, p: &QPoint) -> Result<Vec<usize>> {
    let c = &b.center;
    if p.n() != c.n() || p.q() != c.q() {
        return Err(invalid("point and ball centre have different (Q, n)"));
    }
    if !is_admissible(b) {
        return Err(invalid("ball is not admissible in its frame"));
    }
    let r2 = b.radius * b.radius * (1.0 + 1e-12);
    let mut counts = vec![0usize; c.count()];
    let mut owner = Vec::with_capacity(p.q());
    for (j, sheet) in p.sheets().enumerate() {
        let i = (0..c.count())
            .find(|&i| dist_sq(sheet, c.site(i)) <= r2)
            .ok_or(Error::NotInBall {
                sheet: j,
                radius: b.radius,
            })?;
        counts[i] += 1;
        owner.push(i);
    }
    if counts.as_slice() != c.multiplicities() {
        return Err(invalid("sheet counts per site ball differ from the multiplicities"));
    }
    Ok(owner)
}

/// `q ⊖ p = Σⱼ [[q_{ϰⱼ} − pⱼ]]` where `q_{ϰⱼ}` is the site owning sheet `j`.
pub fn subtract(b: &AdmissibleBall, p: &QPoint) -> Result<QPoint> {
    let owner = assign_to_sites(b, p)?;
    let n = p.n();
    let mut out = Vec::with_capacity(p.q() * n);
    for (sheet, &i) in p.sheets().zip(&owner) {
        out.extend(b.center.site(i).iter().zip(sheet).map(|(c, x)| c - x));
    }
    Ok(QPoint::from_raw(p.q(), n, out))
}

/// `p(s) = Σⱼ [[pⱼ + s·(q_{ϰⱼ} − pⱼ)]]`, so `p(0) = p` and `p(1) = q`.
pub fn interpolate(b: &AdmissibleBall, p: &QPoint, s: f64) -> Result<QPoint> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange {
            what: "s",
            value: s,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let owner = assign_to_sites(b, p)?;
    let n = p.n();
    let mut out = Vec::with_capacity(p.q() * n);
    for (sheet, &i) in p.sheets().zip(&owner) {
        out.extend(b.center.site(i).iter().zip(sheet).map(|(c, x)| x + s * (c - x)));
    }
    Ok(QPoint::from_raw(p.q(), n, out))
}

/// Constants of the modification procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModificationConstants {
    pub theta0: f64,
    /// `K = 20Q / sin θ₀`.
    pub k: f64,
    /// `C₀ = (1 + 2K(Q−1)²)^{Q−1}`.
    pub c0: f64,
}

pub fn modification_constants(n: usize, q: usize) -> ModificationConstants {
    let theta0 = theta0(n, q);
    let k = 20.0 * q as f64 / theta0.sin();
    let qm1 = q.saturating_sub(1) as f64;
    let c0 = libm::pow(1.0 + 2.0 * k * qm1 * qm1, qm1);
    ModificationConstants { theta0, k, c0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainLevel {
    pub support: SupportDecomposition,
    pub rho: f64,
    pub sigma: f64,
    /// Stage `ϰ₀` of the partition that produced this level (`None` at k = 0).
    pub kappa0: Option<usize>,
}

/// The nested admissible balls `(q⁽ᵏ⁾, ρₖ, σₖ)`, `k = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedBallChain {
    pub n: usize,
    pub q: usize,
    pub levels: Vec<ChainLevel>,
    pub constants: ModificationConstants,
}

impl NestedBallChain {
    /// `L`, the index of the last level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_point(&self, k: usize) -> QPoint {
        self.levels[k].support.rebuild()
    }

    /// Checks every structural inequality of the chain against its base point.
    pub fn check_invariants(&self, base: &QPoint) -> Result<(), ChainViolation> {
        const REL: f64 = 1e-12;
        let l = self.depth();
        let q = self.q as f64;
        let fail = |invariant, level, lhs, rhs| {
            Err(ChainViolation {
                invariant,
                level,
                lhs,
                rhs,
            })
        };

        if l + 1 > self.q.max(1) {
            return fail(ChainInvariant::Depth, l, l as f64, (self.q - 1) as f64);
        }
        if self.levels[0].rho != 0.0 {
            return fail(ChainInvariant::Ordering, 0, self.levels[0].rho, 0.0);
        }
        if self.levels[l].sigma != f64::INFINITY {
            return fail(ChainInvariant::Ordering, l, self.levels[l].sigma, f64::INFINITY);
        }
        for (k, lev) in self.levels.iter().enumerate() {
            if lev.support.q() != self.q {
                return fail(ChainInvariant::Mass, k, lev.support.q() as f64, q);
            }
            if !(lev.rho < lev.sigma) {
                return fail(ChainInvariant::Ordering, k, lev.rho, lev.sigma);
            }
            if k > 0 {
                let prev = &self.levels[k - 1];
                if !(prev.sigma < lev.rho) {
                    return fail(ChainInvariant::Ordering, k, prev.sigma, lev.rho);
                }
                if lev.support.count() >= prev.support.count() {
                    return fail(
                        ChainInvariant::SupportDecreasing,
                        k,
                        lev.support.count() as f64,
                        prev.support.count() as f64,
                    );
                }
                if !lev.support.sites().all(|s| prev.support.sites().any(|t| t == s)) {
                    return fail(ChainInvariant::SupportDecreasing, k, 0.0, 0.0);
                }
                if lev.rho > self.constants.c0 * prev.sigma * (1.0 + REL) {
                    return fail(
                        ChainInvariant::RhoUpperBound,
                        k,
                        lev.rho,
                        self.constants.c0 * prev.sigma,
                    );
                }
            }
            if k < l && 10.0 * q * lev.rho > lev.sigma * (1.0 + REL) {
                return fail(ChainInvariant::SigmaLowerBound, k, 10.0 * q * lev.rho, lev.sigma);
            }
        }
        if self.levels[l].support.count() != 1 {
            return fail(
                ChainInvariant::SupportDecreasing,
                l,
                self.levels[l].support.count() as f64,
                1.0,
            );
        }
        let mut rho_sum = 0.0;
        for k in 1..=l {
            rho_sum += self.levels[k].rho;
            let d = metric_g(base, &self.level_point(k)).unwrap_or(f64::INFINITY);
            if d > rho_sum * (1.0 + REL) {
                return fail(ChainInvariant::DistanceToBase, k, d, rho_sum);
            }
            let cap = (q - 1.0) * self.levels[k].rho;
            if rho_sum > cap * (1.0 + REL) {
                return fail(ChainInvariant::DistanceToBase, k, rho_sum, cap);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainInvariant {
    Depth,
    Mass,
    Ordering,
    SupportDecreasing,
    SigmaLowerBound,
    RhoUpperBound,
    DistanceToBase,
}

/// A failed chain invariant: `lhs` should not exceed `rhs` (or the ordering
/// `lhs < rhs` should hold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainViolation {
    pub invariant: ChainInvariant,
    pub level: usize,
    pub lhs: f64,
    pub rhs: f64,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// Class label per site for the chain relation `|qᵢ − qⱼ| ≤ t`, labels in
/// order of first appearance.
fn threshold_classes(s: &SupportDecomposition, t: f64) -> (usize, Vec<usize>) {
    let m = s.count();
    let mut dsu = DisjointSet::new(m);
    let t2 = t * t;
    for i in 0..m {
        for j in i + 1..m {
            if dist_sq(s.site(i), s.site(j)) <= t2 {
                dsu.union(i, j);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; m];
    let mut labels = Vec::with_capacity(m);
    let mut next = 0;
    for i in 0..m {
        let r = dsu.find(i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels.push(label_of_root[r]);
    }
    (next, labels)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            core::cmp::Ordering::Less => return true,
            core::cmp::Ordering::Greater => return false,
            core::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// One step of the modification procedure on `cur` with `s₀ = sigma`.
///
/// Returns the merged support, `ρ_{k+1} = s_{ϰ₀}` and `ϰ₀`.
fn modify(
    cur: &SupportDecomposition,
    sigma: f64,
    q: usize,
    k_const: f64,
) -> Result<(SupportDecomposition, f64, usize)> {
    let qm1 = q.saturating_sub(1) as f64;
    // 1-based: t[1] = 0, d[ϰ] = (Q−1)t[ϰ], s[ϰ] = (Q−1)d[ϰ] + s[ϰ−1], t[ϰ+1] = 2K s[ϰ].
    let max_stage = q + 2;
    let mut t = vec![0.0; max_stage + 2];
    let mut s = vec![0.0; max_stage + 2];
    s[0] = sigma;
    for kappa in 1..=max_stage + 1 {
        if kappa > 1 {
            t[kappa] = 2.0 * k_const * s[kappa - 1];
        }
        let d = qm1 * t[kappa];
        s[kappa] = qm1 * d + s[kappa - 1];
    }
    let counts: Vec<usize> = (1..=max_stage + 1)
        .map(|kappa| threshold_classes(cur, t[kappa]).0)
        .collect();
    let kappa0 = (1..=max_stage)
        .find(|&kappa| counts[kappa - 1] == counts[kappa])
        .ok_or_else(|| Error::NumericalFailure("partition sequence did not stabilise".into()))?;

    let (classes, labels) = threshold_classes(cur, t[kappa0]);
    let n = cur.n();
    let mut rep: Vec<Option<usize>> = vec![None; classes];
    let mut mult = vec![0usize; classes];
    for (i, &c) in labels.iter().enumerate() {
        mult[c] += cur.multiplicities()[i];
        match rep[c] {
            Some(r) if !lex_less(cur.site(i), cur.site(r)) => {}
            _ => rep[c] = Some(i),
        }
    }
    let mut sites = Vec::with_capacity(classes * n);
    for r in rep.iter().flatten() {
        sites.extend_from_slice(cur.site(*r));
    }
    Ok((SupportDecomposition::new(n, sites, mult)?, s[kappa0], kappa0))
}

/// Runs the modification procedure from `q` until a single site remains.
pub fn nested_chain(q: &QPoint, frame: &AngleSeparatedFrame) -> Result<NestedBallChain> {
    nested_chain_with_tol(q, frame, q.default_dedup_tol())
}

pub fn nested_chain_with_tol(
    q: &QPoint,
    frame: &AngleSeparatedFrame,
    dedup_tol: f64,
) -> Result<NestedBallChain> {
    if frame.frame.n() != q.n() {
        return Err(invalid("frame dimension differs from the point"));
    }
    let constants = modification_constants(q.n(), q.q());
    let sin_t = constants.theta0.sin();
    let mut levels = vec![ChainLevel {
        support: support(q, dedup_tol),
        rho: 0.0,
        sigma: f64::INFINITY,
        kappa0: None,
    }];
    loop {
        let last = levels.last_mut().expect("chain has a level");
        if last.support.count() == 1 {
            last.sigma = f64::INFINITY;
            break;
        }
        last.sigma = sin_t / 4.0 * min_separation(&last.support);
        let (next, rho, kappa0) = modify(&last.support, last.sigma, q.q(), constants.k)?;
        if next.count() >= last.support.count() {
            return Err(Error::NumericalFailure(
                "support cardinality did not decrease".into(),
            ));
        }
        levels.push(ChainLevel {
            support: next,
            rho,
            sigma: f64::INFINITY,
            kappa0: Some(kappa0),
        });
    }
    Ok(NestedBallChain {
        n: q.n(),
        q: q.q(),
        levels,
        constants,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionWitness {
    pub level: usize,
    pub member: QPoint,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionCheck {
    pub passed: bool,
    pub samples_per_level: usize,
    pub witness: Option<InclusionWitness>,
}

/// Samples `z` with `𝒢(z, q⁽ᵏ⁻¹⁾) ≤ σ_{k−1}` and checks `𝒢(z, q⁽ᵏ⁾) ≤ ρₖ`.
///
/// Half of the samples sit on the outer sphere `𝒢 = σ_{k−1}` of the
/// perturbation, the rest are spread through the ball.
pub fn chain_inclusion_check(chain: &NestedBallChain, samples: usize, seed: u64) -> InclusionCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = chain.q * chain.n;
    for k in 1..=chain.depth() {
        let inner = chain.level_point(k - 1);
        let outer = chain.level_point(k);
        let sigma = chain.levels[k - 1].sigma;
        let rho = chain.levels[k].rho;
        for i in 0..samples {
            let mut dir: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            let len = norm(&dir).max(1e-300);
            let radius = if i % 2 == 0 {
                sigma
            } else {
                sigma * libm::pow(rng.gen::<f64>(), 1.0 / dim as f64)
            };
            dir.iter_mut().for_each(|x| *x *= radius / len);
            let coords = inner.coords().iter().zip(&dir).map(|(a, b)| a + b).collect();
            let z = QPoint::from_raw(chain.q, chain.n, coords);
            let d = metric_g(&z, &outer).unwrap_or(f64::INFINITY);
            if d > rho * (1.0 + 1e-12) {
                return InclusionCheck {
                    passed: false,
                    samples_per_level: samples,
                    witness: Some(InclusionWitness {
                        level: k,
                        member: z,
                        distance: d,
                        bound: rho,
                    }),
                };
            }
        }
    }
    InclusionCheck {
        passed: true,
        samples_per_level: samples,
        witness: None,
    }
}
