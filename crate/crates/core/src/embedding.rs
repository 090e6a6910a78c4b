//! Sorted line projections: the Lipschitz map ξ₀ and the embedding ξ.
//!
//! A [`ProjectionFrame`] holds `P` unit directions; the first `n` form an
//! orthonormal basis. `ξ_α(q)` lists the projections of the sheets of `q`
//! onto direction `α` in ascending order, ξ₀ concatenates the first `n`
//! blocks and ξ concatenates all `P`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::dot;
#[allow(unused_imports)]
use crate::math::Real;
use crate::qspace::QPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFrame {
    n: usize,
    q: usize,
    directions: Vec<f64>,
}

impl ProjectionFrame {
    /// Validates `directions` (row-major, `P × n`, `P ≥ n`).
    pub fn new(n: usize, q: usize, directions: Vec<f64>) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(invalid("n and Q must be positive"));
        }
        if directions.len() % n != 0 || directions.len() / n < n {
            return Err(invalid("a frame needs at least n directions of dimension n"));
        }
        let frame = Self { n, q, directions };
        for a in 0..frame.p_total() {
            let d = frame.direction(a);
            if (dot(d, d).sqrt() - 1.0).abs() > 1e-12 {
                return Err(invalid(alloc::format!("direction {a} is not a unit vector")));
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                if dot(frame.direction(a), frame.direction(b)).abs() > 1e-10 {
                    return Err(invalid("the first n directions must be orthonormal"));
                }
            }
        }
        Ok(frame)
    }

    /// The standard basis `e₁, …, eₙ` (P = n).
    pub fn axes(n: usize, q: usize) -> Self {
        let mut directions = vec![0.0; n * n];
        for a in 0..n {
            directions[a * n + a] = 1.0;
        }
        Self { n, q, directions }
    }

    /// A planar frame rotated by `angle` (n = 2).
    pub fn rotated_plane(q: usize, angle: f64) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        Self {
            n: 2,
            q,
            directions: vec![c, s, -s, c],
        }
    }

    /// The first `n` directions of `self` followed by `extra` deterministic
    /// directions from a low-discrepancy sequence seeded by `(n, Q)`.
    pub fn with_extra_directions(&self, extra: usize) -> Self {
        let n = self.n;
        let mut directions = self.directions[..n * n].to_vec();
        directions.extend(low_discrepancy_directions(n, self.q, extra));
        Self {
            n,
            q: self.q,
            directions,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p_total(&self) -> usize {
        self.directions.len() / self.n
    }

    pub fn direction(&self, alpha: usize) -> &[f64] {
        &self.directions[alpha * self.n..(alpha + 1) * self.n]
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    /// The same frame restricted to its first `n` directions.
    pub fn xi0_frame(&self) -> Self {
        Self {
            n: self.n,
            q: self.q,
            directions: self.directions[..self.n * self.n].to_vec(),
        }
    }

    fn check_point(&self, p: &QPoint) -> Result<()> {
        if p.n() != self.n || p.q() != self.q {
            return Err(invalid(alloc::format!(
                "frame is for (Q, n) = ({}, {}), point has ({}, {})",
                self.q,
                self.n,
                p.q(),
                p.n()
            )));
        }
        Ok(())
    }

    /// Sorted projections of raw sheets onto direction `alpha`.
    pub(crate) fn project_sorted(&self, alpha: usize, sheets: &[f64], out: &mut [f64]) {
        let dir = self.direction(alpha);
        for (o, s) in out.iter_mut().zip(sheets.chunks_exact(self.n)) {
            *o = dot(dir, s);
        }
        out.sort_unstable_by(f64::total_cmp);
    }

    /// ξ₀ of raw sheets into `out` (length `n·Q`).
    pub(crate) fn xi0_into(&self, sheets: &[f64], out: &mut [f64]) {
        let q = self.q;
        for a in 0..self.n {
            self.project_sorted(a, sheets, &mut out[a * q..(a + 1) * q]);
        }
    }
}

/// Points on 𝕊ⁿ⁻¹ from a Kronecker sequence pushed through Box-Muller.
fn low_discrepancy_directions(n: usize, q: usize, count: usize) -> Vec<f64> {
    // Generalised golden ratio for dimension m: the root of x^{m+1} = x + 1.
    let m = 2 * n.div_ceil(2);
    let mut g = 2.0f64;
    for _ in 0..64 {
        g = libm::pow(1.0 + g, 1.0 / (m as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=m).map(|k| libm::fmod(1.0 / libm::pow(g, k as f64), 1.0)).collect();
    let offset = libm::fmod(0.5 + 0.1 * n as f64 + 0.01 * q as f64, 1.0);

    let mut out = Vec::with_capacity(count * n);
    let mut index = 1u64;
    while out.len() < count * n {
        let u: Vec<f64> = alphas
            .iter()
            .map(|a| libm::fmod(offset + a * index as f64, 1.0))
            .collect();
        index += 1;
        let mut v = Vec::with_capacity(m);
        for pair in u.chunks_exact(2) {
            let r = (-2.0 * pair[0].max(1e-300).ln()).sqrt();
            let th = core::f64::consts::TAU * pair[1];
            v.push(r * th.cos());
            v.push(r * th.sin());
        }
        v.truncate(n);
        let len = dot(&v, &v).sqrt();
        if len < 1e-8 {
            continue;
        }
        out.extend(v.iter().map(|x| x / len));
    }
    out
}

/// Concatenated sorted blocks, one per direction, each of length Q.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoint {
    q: usize,
    values: Vec<f64>,
}

impl EmbeddedPoint {
    pub fn new(q: usize, values: Vec<f64>) -> Result<Self> {
        if q == 0 || values.len() % q != 0 {
            return Err(invalid("embedded values must split into blocks of length Q"));
        }
        Ok(Self { q, values })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn block_count(&self) -> usize {
        self.values.len() / self.q
    }

    pub fn block(&self, alpha: usize) -> &[f64] {
        &self.values[alpha * self.q..(alpha + 1) * self.q]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `ξ_α(p)`: projections onto direction `alpha`, ascending.
pub fn xi_alpha(frame: &ProjectionFrame, alpha: usize, p: &QPoint) -> Result<Vec<f64>> {
    frame.check_point(p)?;
    if alpha >= frame.p_total() {
        return Err(Error::IndexOutOfRange {
            index: alpha,
            len: frame.p_total(),
        });
    }
    let mut out = vec![0.0; p.q()];
    frame.project_sorted(alpha, p.coords(), &mut out);
    Ok(out)
}

/// ξ₀(p) ∈ ℝ^{nQ}.
pub fn xi0(frame: &ProjectionFrame, p: &QPoint) -> Result<EmbeddedPoint> {
    frame.check_point(p)?;
    let mut values = vec![0.0; frame.n * p.q()];
    frame.xi0_into(p.coords(), &mut values);
    Ok(EmbeddedPoint { q: p.q(), values })
}

/// ξ(p) ∈ ℝ^{PQ}.
pub fn xi_full(frame: &ProjectionFrame, p: &QPoint) -> Result<EmbeddedPoint> {
    frame.check_point(p)?;
    let q = p.q();
    let mut values = vec![0.0; frame.p_total() * q];
    for a in 0..frame.p_total() {
        frame.project_sorted(a, p.coords(), &mut values[a * q..(a + 1) * q]);
    }
    Ok(EmbeddedPoint { q, values })
}

/// Euclidean distance of the concatenated blocks.
pub fn embedded_distance(a: &EmbeddedPoint, b: &EmbeddedPoint) -> Result<f64> {
    if a.q != b.q || a.values.len() != b.values.len() {
        return Err(invalid("embedded points have different block structure"));
    }
    Ok(crate::math::dist_sq(&a.values, &b.values).sqrt())
}
