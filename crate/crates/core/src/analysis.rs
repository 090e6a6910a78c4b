//! Hopf differential, harmonic companion and the quantities built on them:
//! the monotonicity ratio `Ψₖ(ρ)/ρ²`, the Key-Lemma bound and the interior
//! continuity certificate.
//!
//! All complex quantities live on the interior nodes of the source grid.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::admissible::{angle_separated_frame, modification_constants, nested_chain, NestedBallChain};
use crate::embedding::ProjectionFrame;
use crate::error::{invalid, Error, Result};
use crate::field::{
    circle_samples, courant_lebesgue_constant, courant_lebesgue_slice, dirichlet_energy,
    dirichlet_energy_matched, CircleSlice, GridField, GridSpec,
};
use crate::math::{dot, smoothstep5};
#[allow(unused_imports)]
use crate::math::Real;
use crate::qspace::{match_sheets, metric_sq_sheets, support};

/// Complex values on a grid (row-major, `j·nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct HopfField {
    pub grid: GridSpec,
    pub phi: Vec<Complex64>,
}

impl HopfField {
    pub fn new(grid: GridSpec, phi: Vec<Complex64>) -> Result<Self> {
        if phi.len() != grid.node_count() {
            return Err(invalid("one value per node is required"));
        }
        if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("Hopf values must be finite"));
        }
        Ok(Self { grid, phi })
    }

    /// Samples `g(z)` on `grid`.
    pub fn from_fn(grid: GridSpec, g: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let mut phi = Vec::with_capacity(grid.node_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.position(i, j);
                phi.push(g(Complex64::new(x, y)));
            }
        }
        Self::new(grid, phi)
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.phi[self.grid.index(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.phi.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn interior_grid(g: &GridSpec) -> Result<GridSpec> {
    if g.nx < 4 || g.ny < 4 {
        return Err(invalid("at least 2 × 2 interior nodes are required"));
    }
    GridSpec::new(g.nx - 2, g.ny - 2, g.x0 + g.h, g.y0 + g.h, g.h)
}

/// Sheet-wise central differences at interior node `(i, j)`: each neighbour's
/// sheets are paired optimally with the centre's before differencing.
fn sheet_gradients(f: &GridField, i: usize, j: usize, du: &mut [f64], dv: &mut [f64]) {
    let g = f.grid();
    let (q, n) = (f.q(), f.n());
    let centre = f.node_sheets(g.index(i, j));
    let mut perm_a = vec![0usize; q];
    let mut perm_b = vec![0usize; q];
    let inv2h = 0.5 / g.h;
    for (axis, out) in [(0, &mut *du), (1, &mut *dv)] {
        let (a, b) = if axis == 0 {
            (g.index(i + 1, j), g.index(i - 1, j))
        } else {
            (g.index(i, j + 1), g.index(i, j - 1))
        };
        let (fa, fb) = (f.node_sheets(a), f.node_sheets(b));
        match_sheets(centre, fa, q, n, &mut perm_a);
        match_sheets(centre, fb, q, n, &mut perm_b);
        for s in 0..q {
            for c in 0..n {
                out[s * n + c] = (fa[perm_a[s] * n + c] - fb[perm_b[s] * n + c]) * inv2h;
            }
        }
    }
}

/// `φ = (|F_u|² − |F_v|²) − 2i⟨F_u, F_v⟩` with `F = ξ₀∘f` at every interior node.
///
/// Derivatives are taken sheet by sheet after pairing neighbours with the
/// centre node, then expressed in the frame axes. Where the sheets are smooth
/// this equals the sorted-coordinate expression; differencing sorted values
/// directly would be wrong by O(1) next to projection crossings.
pub fn hopf_differential(f: &GridField, frame: &ProjectionFrame) -> Result<HopfField> {
    if frame.n() != f.n() || frame.q() != f.q() {
        return Err(invalid("frame (Q, n) differs from the field"));
    }
    let g = *f.grid();
    let inner = interior_grid(&g)?;
    let (q, n) = (f.q(), f.n());
    let mut du = vec![0.0; q * n];
    let mut dv = vec![0.0; q * n];
    let mut phi = Vec::with_capacity(inner.node_count());
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            sheet_gradients(f, i, j, &mut du, &mut dv);
            let (mut uu, mut vv, mut uv) = (0.0, 0.0, 0.0);
            for s in 0..q {
                let (a, b) = (&du[s * n..(s + 1) * n], &dv[s * n..(s + 1) * n]);
                for alpha in 0..n {
                    let e = frame.direction(alpha);
                    let (pa, pb) = (dot(e, a), dot(e, b));
                    uu += pa * pa;
                    vv += pb * pb;
                    uv += pa * pb;
                }
            }
            phi.push(Complex64::new(uu - vv, -2.0 * uv));
        }
    }
    HopfField::new(inner, phi)
}

/// Discrete `L²` norm of `∂φ/∂z̄ = (φ_x + iφ_y)/2` over the interior of the
/// field's grid.
pub fn holomorphy_residual(phi: &HopfField) -> f64 {
    let g = &phi.grid;
    if g.nx < 3 || g.ny < 3 {
        return 0.0;
    }
    let inv2h = 0.5 / g.h;
    let mut sum = 0.0;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let dx = (phi.at(i + 1, j) - phi.at(i - 1, j)) * inv2h;
            let dy = (phi.at(i, j + 1) - phi.at(i, j - 1)) * inv2h;
            sum += ((dx + Complex64::i() * dy) * 0.5).norm_sqr();
        }
    }
    (sum * g.h * g.h).sqrt()
}

/// `h = ψ + z̄` with `∂ψ/∂z = −φ/4`, on the grid of `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCompanion {
    pub grid: GridSpec,
    pub h: Vec<Complex64>,
    /// `max |¼∮φ dz|` over the grid plaquettes.
    pub path_residual: f64,
}

impl HarmonicCompanion {
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.h[self.grid.index(i, j)]
    }

    /// `|∇h|²` by central differences at an interior node of the companion grid.
    pub fn grad_sq(&self, i: usize, j: usize) -> f64 {
        let inv2h = 0.5 / self.grid.h;
        let hu = (self.at(i + 1, j) - self.at(i - 1, j)) * inv2h;
        let hv = (self.at(i, j + 1) - self.at(i, j - 1)) * inv2h;
        hu.norm_sqr() + hv.norm_sqr()
    }

    /// Cell-integrated `Dir(h)` per companion cell, same layout as
    /// [`crate::field::EnergyBreakdown`].
    pub fn cell_energies(&self) -> Vec<f64> {
        let g = &self.grid;
        let (cx, cy) = (g.nx - 1, g.ny - 1);
        let mut out = vec![0.0; cx * cy];
        for j in 0..cy {
            for i in 0..cx {
                let (a, b, c, d) = (self.at(i, j), self.at(i + 1, j), self.at(i, j + 1), self.at(i + 1, j + 1));
                out[j * cx + i] =
                    0.5 * ((b - a).norm_sqr() + (d - c).norm_sqr() + (c - a).norm_sqr() + (d - b).norm_sqr());
            }
        }
        out
    }

    /// `Dir(h)` over the companion cells whose centres lie in the disc.
    pub fn disc_energy(&self, cx: f64, cy: f64, r: f64) -> f64 {
        let g = &self.grid;
        let cells = self.cell_energies();
        let mut sum = 0.0;
        for j in 0..g.ny - 1 {
            for i in 0..g.nx - 1 {
                let (x, y) = g.position(i, j);
                let (dx, dy) = (x + 0.5 * g.h - cx, y + 0.5 * g.h - cy);
                if dx * dx + dy * dy <= r * r {
                    sum += cells[j * (g.nx - 1) + i];
                }
            }
        }
        sum
    }
}

/// Integrates `ψ = −¼∫φ dz` with the trapezoid rule along the path that runs
/// from the grid centre horizontally, then vertically, and sets `h = ψ + z̄`.
pub fn harmonic_companion(phi: &HopfField) -> HarmonicCompanion {
    let g = phi.grid;
    let (ic, jc) = g.center_node();
    let mut psi = vec![Complex64::new(0.0, 0.0); g.node_count()];
    let step = |a: Complex64, b: Complex64, dz: Complex64| -(a + b) * 0.125 * dz;
    let dx = Complex64::new(g.h, 0.0);
    let dy = Complex64::new(0.0, g.h);
    for i in ic + 1..g.nx {
        psi[g.index(i, jc)] = psi[g.index(i - 1, jc)] + step(phi.at(i - 1, jc), phi.at(i, jc), dx);
    }
    for i in (0..ic).rev() {
        psi[g.index(i, jc)] = psi[g.index(i + 1, jc)] + step(phi.at(i + 1, jc), phi.at(i, jc), -dx);
    }
    for i in 0..g.nx {
        for j in jc + 1..g.ny {
            psi[g.index(i, j)] = psi[g.index(i, j - 1)] + step(phi.at(i, j - 1), phi.at(i, j), dy);
        }
        for j in (0..jc).rev() {
            psi[g.index(i, j)] = psi[g.index(i, j + 1)] + step(phi.at(i, j + 1), phi.at(i, j), -dy);
        }
    }
    let mut path_residual = 0.0f64;
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let (a, b, c, d) = (phi.at(i, j), phi.at(i + 1, j), phi.at(i + 1, j + 1), phi.at(i, j + 1));
            let loop_sum = step(a, b, dx) + step(b, c, dy) + step(c, d, -dx) + step(d, a, -dy);
            path_residual = path_residual.max(loop_sum.norm());
        }
    }
    let h = psi
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let (i, j) = g.coords_of(idx);
            let (x, y) = g.position(i, j);
            p + Complex64::new(x, -y)
        })
        .collect();
    HarmonicCompanion {
        grid: g,
        h,
        path_residual,
    }
}

/// Discrete `L²` norm of the Hopf differential of `G = (ξ₀∘f, h)`, i.e. of
/// `φ_F + (|h_u|² − |h_v|²) − 2i⟨h_u, h_v⟩`, over the interior of the
/// companion grid.
pub fn conformality_defect(f: &GridField, frame: &ProjectionFrame, comp: &HarmonicCompanion) -> Result<f64> {
    let phi = hopf_differential(f, frame)?;
    if phi.grid != comp.grid {
        return Err(invalid("companion grid differs from the field's interior"));
    }
    let g = &comp.grid;
    let inv2h = 0.5 / g.h;
    let mut sum = 0.0;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let hu = (comp.at(i + 1, j) - comp.at(i - 1, j)) * inv2h;
            let hv = (comp.at(i, j + 1) - comp.at(i, j - 1)) * inv2h;
            let cross = hu.re * hv.re + hu.im * hv.im;
            let phi_h = Complex64::new(hu.norm_sqr() - hv.norm_sqr(), -2.0 * cross);
            sum += (phi.at(i, j) + phi_h).norm_sqr();
        }
    }
    Ok((sum * g.h * g.h).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceGap {
    /// Standard deviation of `|φ − φ̃|` over interior nodes.
    pub stddev: f64,
    pub mean: f64,
    /// `(4/πR₀²)·Dir(f; U_{R₀})` for the largest disc about the grid centre.
    pub bound: f64,
}

impl InvarianceGap {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.mean <= self.bound + tol
    }
}

/// Compares the Hopf differentials computed in two frames.
pub fn xi0_invariance_gap(f: &GridField, a: &ProjectionFrame, b: &ProjectionFrame) -> Result<InvarianceGap> {
    let pa = hopf_differential(f, a)?;
    let pb = hopf_differential(f, b)?;
    let diffs: Vec<f64> = pa.phi.iter().zip(&pb.phi).map(|(x, y)| (x - y).norm()).collect();
    let m = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / m;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / m;
    let (cx, cy, r0) = central_disc(f.grid());
    let dir = dirichlet_energy(f, a)?.disc_total(f.grid(), cx, cy, r0);
    Ok(InvarianceGap {
        stddev: var.sqrt(),
        mean,
        bound: 4.0 / (PI * r0 * r0) * dir,
    })
}

/// Centre of the grid's central node and the largest disc about it.
fn central_disc(g: &GridSpec) -> (f64, f64, f64) {
    let (i, j) = g.center_node();
    let (x, y) = g.position(i, j);
    let r = (x - g.x0).min(g.x_max() - x).min(y - g.y0).min(g.y_max() - y);
    (x, y, r)
}

fn companion_index(f: &GridField, comp: &HarmonicCompanion, node: (usize, usize)) -> Result<usize> {
    let g = f.grid();
    let (i, j) = node;
    if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
        return Err(invalid("the base point must be an interior node"));
    }
    if comp.grid.nx + 2 != g.nx || comp.grid.ny + 2 != g.ny {
        return Err(invalid("companion grid differs from the field's interior"));
    }
    Ok(comp.grid.index(i - 1, j - 1))
}

/// `d*ₖ(x) = √(𝒢(q⁽ᵏ⁾, f(x))² + |h(w*) − h(x)|²)` per node; `+∞` on the rim,
/// where `h` is not defined.
pub fn d_star(
    f: &GridField,
    comp: &HarmonicCompanion,
    w_star: (usize, usize),
    k: usize,
    chain: &NestedBallChain,
) -> Result<Vec<f64>> {
    if k > chain.depth() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: chain.depth() + 1,
        });
    }
    if chain.q != f.q() || chain.n != f.n() {
        return Err(invalid("chain (Q, n) differs from the field"));
    }
    let hw = comp.h[companion_index(f, comp, w_star)?];
    let level = chain.level_point(k);
    let g = f.grid();
    let mut out = vec![f64::INFINITY; g.node_count()];
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let idx = g.index(i, j);
            let gq = metric_sq_sheets(level.coords(), f.node_sheets(idx), f.q(), f.n());
            let dh = (hw - comp.at(i - 1, j - 1)).norm_sqr();
            out[idx] = (gq + dh).sqrt();
        }
    }
    Ok(out)
}

/// `5/2 + 25Q·C₀`, `25Q·C₀·(15C₀/2)^{k₀−1}` and `(5/2)(15C₀/2)^{k₀−1}`
/// maximised over `k₀ ≤ Q−1`, then `δ = M⁻²`.
pub fn delta_constant(n: usize, q: usize) -> f64 {
    let c0 = modification_constants(n, q).c0;
    let qf = q as f64;
    let mut m = 2.5 + 25.0 * qf * c0;
    for k0 in 1..q {
        let growth = libm::pow(7.5 * c0, (k0 - 1) as f64);
        m = m.max(25.0 * qf * c0 * growth).max(2.5 * growth);
    }
    1.0 / (m * m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityOptions {
    /// Ramp width of `λ`; `None` picks `min{σ₀, τ*}/20`.
    pub eps: Option<f64>,
    /// Quadrature points per cell side; 1 is the midpoint rule with the
    /// cutoff evaluated from the mean of the corner values.
    pub subsamples: usize,
}

impl Default for MonotonicityOptions {
    fn default() -> Self {
        Self {
            eps: None,
            subsamples: 8,
        }
    }
}

struct DiscCell {
    corners: [usize; 4],
    energy: f64,
}

/// Everything `Ψₖ` needs for one base point and disc radius.
pub struct MonotonicityContext {
    pub w_star: (usize, usize),
    pub r: f64,
    pub chain: NestedBallChain,
    /// `inf 𝒢(f(x), f(w*))` over `∂U_r(w*)`.
    pub tau_star: f64,
    pub k0: usize,
    pub eps: f64,
    pub subsamples: usize,
    grid: GridSpec,
    d_star: Vec<Vec<f64>>,
    cells: Vec<DiscCell>,
}

impl MonotonicityContext {
    /// Builds the chain of `f(w*)`, computes `τ*`, `k₀`, the ramp width and
    /// `d*ₖ` for `k ≤ k₀`.
    pub fn new(
        f: &GridField,
        comp: &HarmonicCompanion,
        w_star: (usize, usize),
        r: f64,
        opts: &MonotonicityOptions,
    ) -> Result<Self> {
        let (wx, wy) = f.grid().position(w_star.0, w_star.1);
        if !(r > 0.0) || !comp.grid.contains_disc(wx, wy, r) {
            return Err(invalid("U_r(w*) must lie inside the interior grid"));
        }
        if opts.subsamples == 0 {
            return Err(invalid("subsamples must be positive"));
        }
        let center = f.at(w_star.0, w_star.1);
        let frame = angle_separated_frame(&support(&center, center.default_dedup_tol()))?;
        let chain = nested_chain(&center, &frame)?;

        let samples = circle_samples(f, wx, wy, r)?;
        let s = f.stride();
        let tau_star = samples
            .chunks_exact(s)
            .map(|p| metric_sq_sheets(p, center.coords(), f.q(), f.n()))
            .fold(f64::INFINITY, f64::min)
            .sqrt();

        let ten_q = 10.0 * f.q() as f64;
        let rho = |k: usize| {
            if k > chain.depth() {
                f64::INFINITY
            } else {
                chain.levels[k].rho
            }
        };
        let k0 = (0..=chain.depth())
            .find(|&k| ten_q * rho(k) < tau_star && tau_star <= ten_q * rho(k + 1))
            .unwrap_or(0);

        let eps = match opts.eps {
            Some(e) if e > 0.0 => e,
            Some(e) => {
                return Err(Error::OutOfRange {
                    what: "eps",
                    value: e,
                    lo: 0.0,
                    hi: f64::INFINITY,
                })
            }
            None => {
                let sigma0 = chain.levels[0].sigma;
                let tau = if tau_star > 0.0 { tau_star } else { r };
                sigma0.min(tau).min(r) / 20.0
            }
        };

        let d_star = (0..=k0)
            .map(|k| d_star(f, comp, w_star, k, &chain))
            .collect::<Result<Vec<_>>>()?;

        let g = *f.grid();
        let f_cells = dirichlet_energy_matched(f);
        let h_cells = comp.cell_energies();
        let mut cells = Vec::new();
        for j in 1..g.ny - 2 {
            for i in 1..g.nx - 2 {
                let (x, y) = g.position(i, j);
                let (dx, dy) = (x + 0.5 * g.h - wx, y + 0.5 * g.h - wy);
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let energy = f_cells.per_cell[j * f_cells.cells_x + i]
                    + h_cells[(j - 1) * (comp.grid.nx - 1) + (i - 1)];
                cells.push(DiscCell {
                    corners: [g.index(i, j), g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)],
                    energy,
                });
            }
        }
        Ok(Self {
            w_star,
            r,
            chain,
            tau_star,
            k0,
            eps,
            subsamples: opts.subsamples,
            grid: g,
            d_star,
            cells,
        })
    }

    /// The open interval of admissible `ρ` at level `k ≤ k₀`, capped at `r`.
    pub fn valid_range(&self, k: usize) -> Result<(f64, f64)> {
        if k > self.k0 {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.k0 + 1,
            });
        }
        let sigma = self.chain.levels[k].sigma;
        let upper = if k < self.k0 {
            sigma
        } else {
            let tau = if self.tau_star > 0.0 { self.tau_star } else { f64::INFINITY };
            0.4 * tau.min(sigma)
        };
        Ok((0.0, upper.min(self.r)))
    }

    pub fn d_star(&self, k: usize) -> &[f64] {
        &self.d_star[k]
    }

    /// The largest `d*ₖ` over the eight neighbours of `w*`. For smaller `ρ`
    /// the sublevel set `{d*ₖ < ρ}` holds no grid node besides `w*`, so
    /// `Ψₖ(ρ)` only reflects sub-cell quadrature.
    pub fn resolution_floor(&self, k: usize) -> Result<f64> {
        self.valid_range(k)?;
        let g = self.grid;
        let (i, j) = self.w_star;
        let mut floor = 0.0f64;
        for nj in j.saturating_sub(1)..=(j + 1).min(g.ny - 1) {
            for ni in i.saturating_sub(1)..=(i + 1).min(g.nx - 1) {
                floor = floor.max(self.d_star[k][g.index(ni, nj)]);
            }
        }
        Ok(floor)
    }

    /// `Ψₖ(ρ) = ∫_{U_r} λ(ρ − d*ₖ)·|∇G|²` with `λ` the quintic ramp of width `eps`.
    pub fn psi(&self, k: usize, rho: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range(k)?;
        if !(rho > lo && rho < hi) {
            return Err(Error::OutOfRange {
                what: "rho",
                value: rho,
                lo,
                hi,
            });
        }
        Ok(self.psi_unchecked(k, rho))
    }

    fn psi_unchecked(&self, k: usize, rho: f64) -> f64 {
        let d = &self.d_star[k];
        let m = self.subsamples;
        let lambda = |dv: f64| smoothstep5((rho - dv) / self.eps);
        let mut total = 0.0;
        for cell in &self.cells {
            let c = cell.corners.map(|i| d[i]);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(0.0, f64::max);
            if lo >= rho {
                continue;
            }
            let weight = if hi <= rho - self.eps {
                1.0
            } else if m == 1 {
                lambda(0.25 * (c[0] + c[1] + c[2] + c[3]))
            } else {
                let mut acc = 0.0;
                for b in 0..m {
                    let ty = (b as f64 + 0.5) / m as f64;
                    for a in 0..m {
                        let tx = (a as f64 + 0.5) / m as f64;
                        let dv = (1.0 - tx) * (1.0 - ty) * c[0]
                            + tx * (1.0 - ty) * c[1]
                            + (1.0 - tx) * ty * c[2]
                            + tx * ty * c[3];
                        acc += lambda(dv);
                    }
                }
                acc / (m * m) as f64
            };
            total += weight * cell.energy;
        }
        total
    }
}

/// `Ψₖ(ρ)` for a one-off evaluation.
pub fn psi_k(
    f: &GridField,
    comp: &HarmonicCompanion,
    w_star: (usize, usize),
    r: f64,
    k: usize,
    rho: f64,
    opts: &MonotonicityOptions,
) -> Result<f64> {
    MonotonicityContext::new(f, comp, w_star, r, opts)?.psi(k, rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub rho: f64,
    pub psi: f64,
    pub ratio: f64,
}

/// A pair `s < t` with `Ψ(s)/s² > Ψ(t)/t²·(1 + tol)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioViolation {
    pub s: f64,
    pub t: f64,
    pub ratio_s: f64,
    pub ratio_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLadder {
    pub k: usize,
    pub range: (f64, f64),
    /// See [`MonotonicityContext::resolution_floor`].
    pub floor: f64,
    /// False when the floor reaches the top of the range; such a level has
    /// no rows.
    pub resolved: bool,
    pub rows: Vec<LadderRow>,
    pub violations: Vec<RatioViolation>,
    /// `max_{s<t} (Ψ(s)/s²)/(Ψ(t)/t²)`; 1 or less means nondecreasing.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportConstants {
    pub theta0: f64,
    pub k: f64,
    pub c0: f64,
    pub delta: f64,
}

pub fn report_constants(n: usize, q: usize) -> ReportConstants {
    let c = modification_constants(n, q);
    ReportConstants {
        theta0: c.theta0,
        k: c.k,
        c0: c.c0,
        delta: delta_constant(n, q),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub w_star: (usize, usize),
    pub r: f64,
    pub tau_star: f64,
    pub k0: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub constants: ReportConstants,
    pub chain_rhos: Vec<f64>,
    pub chain_sigmas: Vec<f64>,
    pub levels: Vec<LevelLadder>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.levels.iter().all(|l| l.violations.is_empty())
    }

    pub fn unresolved(&self) -> usize {
        self.levels.iter().filter(|l| !l.resolved).count()
    }

    pub fn worst_ratio(&self) -> f64 {
        self.levels.iter().map(|l| l.worst_ratio).fold(0.0, f64::max)
    }
}

/// Evaluates `Ψₖ(ρ)/ρ²` at every level `k ≤ k₀` for
/// `ρ = floor + fraction·(upper − floor)`, where `floor` is the level's
/// resolution floor, and records every pair that breaks monotonicity by more
/// than `tolerance`.
pub fn monotonicity_report(ctx: &MonotonicityContext, ladder: &[f64], tolerance: f64) -> Result<MonotonicityReport> {
    if ladder.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(invalid("ladder entries are fractions in (0, 1)"));
    }
    let mut levels = Vec::new();
    for k in 0..=ctx.k0 {
        let range = ctx.valid_range(k)?;
        let floor = ctx.resolution_floor(k)?.max(range.0);
        let resolved = floor < range.1;
        let mut rows = Vec::with_capacity(ladder.len());
        for &t in ladder.iter().filter(|_| resolved) {
            let rho = floor + t * (range.1 - floor);
            let psi = ctx.psi(k, rho)?;
            rows.push(LadderRow {
                rho,
                psi,
                ratio: psi / (rho * rho),
            });
        }
        rows.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        let mut violations = Vec::new();
        let mut worst = 0.0f64;
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                let (s, t) = (&rows[a], &rows[b]);
                if t.ratio > 0.0 {
                    worst = worst.max(s.ratio / t.ratio);
                } else if s.ratio > 0.0 {
                    worst = f64::INFINITY;
                }
                if s.ratio > t.ratio * (1.0 + tolerance) {
                    violations.push(RatioViolation {
                        s: s.rho,
                        t: t.rho,
                        ratio_s: s.ratio,
                        ratio_t: t.ratio,
                    });
                }
            }
        }
        levels.push(LevelLadder {
            k,
            range,
            floor,
            resolved,
            rows,
            violations,
            worst_ratio: worst,
        });
    }
    let c = &ctx.chain;
    Ok(MonotonicityReport {
        w_star: ctx.w_star,
        r: ctx.r,
        tau_star: ctx.tau_star,
        k0: ctx.k0,
        eps: ctx.eps,
        tolerance,
        constants: report_constants(c.n, c.q),
        chain_rhos: c.levels.iter().map(|l| l.rho).collect(),
        chain_sigmas: c.levels.iter().map(|l| l.sigma).collect(),
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyLemmaCheck {
    /// `inf 𝒢(f(x), f(w*))` over `∂U_r(w*)`.
    pub lhs: f64,
    /// `√((Dir(f; U_r) + Dir(h; U_r)) / (2πδ))`.
    pub rhs: f64,
    pub pass: bool,
}

/// Compares the smallest circle distance from `f(w*)` with the energy bound.
pub fn key_lemma_check(
    f: &GridField,
    frame: &ProjectionFrame,
    comp: &HarmonicCompanion,
    w_star: (usize, usize),
    r: f64,
    tol: f64,
) -> Result<KeyLemmaCheck> {
    companion_index(f, comp, w_star)?;
    let (wx, wy) = f.grid().position(w_star.0, w_star.1);
    if !(r > 0.0) || !comp.grid.contains_disc(wx, wy, r) {
        return Err(invalid("U_r(w*) must lie inside the interior grid"));
    }
    let centre = f.at(w_star.0, w_star.1);
    let samples = circle_samples(f, wx, wy, r)?;
    let lhs = samples
        .chunks_exact(f.stride())
        .map(|p| metric_sq_sheets(p, centre.coords(), f.q(), f.n()))
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    let dir_f = dirichlet_energy(f, frame)?.disc_total(f.grid(), wx, wy, r);
    let dir_h = comp.disc_energy(wx, wy, r);
    let delta = delta_constant(f.n(), f.q());
    let rhs = ((dir_f + dir_h) / (2.0 * PI * delta)).sqrt();
    Ok(KeyLemmaCheck {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + tol),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityCertificate {
    pub radius: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub modulus: f64,
    /// `Dir(f; U_R)`.
    pub dir_f: f64,
    /// `Dir(h; U_R)`.
    pub dir_h: f64,
    /// `Dir(f; U_{R₀}) / (πR₀²)` on the largest disc about the grid centre.
    pub c_r0: f64,
    pub slice: CircleSlice,
}

/// `modulus = 4·max{α₁, α₂}` bounding the oscillation of `f` on `U_{R/2}(w)`.
pub fn continuity_certificate(
    f: &GridField,
    frame: &ProjectionFrame,
    w: (usize, usize),
    radius: f64,
) -> Result<ContinuityCertificate> {
    let phi = hopf_differential(f, frame)?;
    let comp = harmonic_companion(&phi);
    companion_index(f, &comp, w)?;
    let (wx, wy) = f.grid().position(w.0, w.1);
    if !(radius > 0.0) || !comp.grid.contains_disc(wx, wy, radius) {
        return Err(invalid("U_R(w) must lie inside the interior grid"));
    }
    let energy = dirichlet_energy(f, frame)?;
    let dir_f = energy.disc_total(f.grid(), wx, wy, radius);
    let dir_h = comp.disc_energy(wx, wy, radius);
    let (cx, cy, r0) = central_disc(f.grid());
    let c_r0 = energy.disc_total(f.grid(), cx, cy, r0) / (PI * r0 * r0);
    let slice = courant_lebesgue_slice(f, frame, wx, wy, radius)?;
    let alpha1 = courant_lebesgue_constant() * dir_f.sqrt();
    let beta = dir_h + 2.0 * PI * c_r0 * c_r0 * radius * radius + 2.0 * c_r0 * dir_f;
    let delta = delta_constant(f.n(), f.q());
    let alpha2 = (dir_f.sqrt() + beta.sqrt()) / (2.0 * PI * delta).sqrt();
    Ok(ContinuityCertificate {
        radius,
        alpha1,
        alpha2,
        beta,
        modulus: 4.0 * alpha1.max(alpha2),
        dir_f,
        dir_h,
        c_r0,
        slice,
    })
}

/// `max 𝒢(f(x), f(y))` over grid nodes `x, y` in the closed disc.
pub fn measured_oscillation(f: &GridField, cx: f64, cy: f64, r: f64) -> f64 {
    let g = f.grid();
    let nodes: Vec<usize> = (0..g.node_count())
        .filter(|&idx| {
            let (i, j) = g.coords_of(idx);
            let (x, y) = g.position(i, j);
            (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
        })
        .collect();
    let mut best = 0.0f64;
    for (a, &p) in nodes.iter().enumerate() {
        for &s in &nodes[a + 1..] {
            best = best.max(metric_sq_sheets(f.node_sheets(p), f.node_sheets(s), f.q(), f.n()));
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cells: usize) -> GridSpec {
        GridSpec::centered_square(1.0, cells)
    }

    #[test]
    fn hopf_of_identity_vanishes_and_of_projection_is_one() {
        let z = GridField::from_fn(grid(16), 1, 2, |x, y, o| o.copy_from_slice(&[x, y])).unwrap();
        let frame = ProjectionFrame::rotated_plane(1, 0.4);
        assert!(hopf_differential(&z, &frame).unwrap().sup_norm() < 1e-12);
        let p = GridField::from_fn(grid(16), 1, 2, |x, _, o| o.copy_from_slice(&[x, 0.0])).unwrap();
        let phi = hopf_differential(&p, &ProjectionFrame::axes(2, 1)).unwrap();
        assert!(phi.phi.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn holomorphy_residual_examples() {
        let g = grid(20);
        let c = HopfField::from_fn(g, |_| Complex64::new(2.0, -1.0)).unwrap();
        assert_eq!(holomorphy_residual(&c), 0.0);
        let z = HopfField::from_fn(g, |z| z).unwrap();
        assert!(holomorphy_residual(&z) < 1e-12);
        let zbar = HopfField::from_fn(g, |z| z.conj()).unwrap();
        // Interior of the 21 × 21 grid: 19 × 19 nodes of area h² each.
        let area = (19.0 * g.h) * (19.0 * g.h);
        assert!((holomorphy_residual(&zbar) - area.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn companion_of_zero_and_constant() {
        let g = grid(10);
        let zero = harmonic_companion(&HopfField::from_fn(g, |_| Complex64::new(0.0, 0.0)).unwrap());
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert!((zero.grad_sq(i, j) - 2.0).abs() < 1e-12);
            }
        }
        let c = Complex64::new(0.5, 2.0);
        let comp = harmonic_companion(&HopfField::from_fn(g, |_| c).unwrap());
        let (ic, jc) = g.center_node();
        let (x0, y0) = g.position(ic, jc);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.position(i, j);
                let z = Complex64::new(x - x0, y - y0);
                let expected = -c * z / 4.0 + Complex64::new(x, -y);
                assert!((comp.at(i, j) - expected).norm() < 1e-13);
            }
        }
        assert!(comp.path_residual < 1e-15);
    }

    #[test]
    fn energy_density_identity_for_holomorphic_phi() {
        let g = grid(64);
        let comp = harmonic_companion(&HopfField::from_fn(g, |z| z * z + 1.0).unwrap());
        let mut worst = 0.0f64;
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let (x, y) = g.position(i, j);
                let phi = Complex64::new(x, y).powi(2) + 1.0;
                worst = worst.max((comp.grad_sq(i, j) - phi.norm_sqr() / 8.0 - 2.0).abs());
            }
        }
        assert!(worst < g.h, "{worst}");
    }

    #[test]
    fn delta_constant_values() {
        let m: f64 = 2.5 + 25.0 * 2.0 * 81.0;
        assert_eq!(delta_constant(1, 2), 1.0 / (m * m));
        assert_eq!(m, 4052.5);
        for n in 1..4 {
            for q in 2..5 {
                assert!(delta_constant(n, q) > 0.0);
                assert!(delta_constant(n, q + 1) < delta_constant(n, q));
            }
        }
    }

    #[test]
    fn conformal_pair_has_small_defect() {
        let f = GridField::from_fn(grid(32), 1, 2, |x, y, o| o.copy_from_slice(&[x, y])).unwrap();
        let frame = ProjectionFrame::axes(2, 1);
        let comp = harmonic_companion(&hopf_differential(&f, &frame).unwrap());
        assert!(conformality_defect(&f, &frame, &comp).unwrap() < 1e-12);
    }

    #[test]
    fn invariance_gap_is_zero_for_equal_frames() {
        let f = crate::field::sqrt_field(grid(16)).unwrap();
        let frame = ProjectionFrame::axes(2, 2);
        let gap = xi0_invariance_gap(&f, &frame, &frame).unwrap();
        assert_eq!((gap.stddev, gap.mean), (0.0, 0.0));
        assert!(gap.within_bound(0.0));
    }

    #[test]
    fn d_star_vanishes_at_base_point() {
        let f = crate::field::sqrt_field(grid(16)).unwrap();
        let frame = ProjectionFrame::axes(2, 2);
        let comp = harmonic_companion(&hopf_differential(&f, &frame).unwrap());
        let w = (5, 11);
        let ctx = MonotonicityContext::new(&f, &comp, w, 0.25, &MonotonicityOptions::default()).unwrap();
        let d = ctx.d_star(0);
        let idx = f.grid().index(w.0, w.1);
        assert_eq!(d[idx], 0.0);
        assert_eq!(d[0], f64::INFINITY);
        let hw = comp.at(w.0 - 1, w.1 - 1);
        for j in 1..16 {
            for i in 1..16 {
                let dh = (hw - comp.at(i - 1, j - 1)).norm();
                assert!(d[f.grid().index(i, j)] >= dh);
            }
        }
    }

    #[test]
    fn psi_saturates_and_rejects_out_of_range() {
        let g = grid(128);
        let f = GridField::from_fn(g, 2, 1, |_, _, o| o.copy_from_slice(&[0.0, 1.0])).unwrap();
        let frame = ProjectionFrame::axes(1, 2);
        let comp = harmonic_companion(&hopf_differential(&f, &frame).unwrap());
        let ctx = MonotonicityContext::new(&f, &comp, (64, 64), 0.5, &MonotonicityOptions::default()).unwrap();
        assert_eq!(ctx.tau_star, 0.0);
        let (_, hi) = ctx.valid_range(0).unwrap();
        assert!(ctx.psi(0, hi * 1.5).is_err());
        assert!(ctx.psi(0, 0.0).is_err());
        // Constant f: Ψ only sees |∇h|² = 2.
        let rho = 0.9 * hi;
        let psi = ctx.psi(0, rho).unwrap();
        assert!(psi > 0.0);
        let effective = rho - 0.5 * ctx.eps;
        let expected = 2.0 * PI * effective * effective;
        assert!((psi / expected - 1.0).abs() < 0.05, "{psi} vs {expected}");
        assert_eq!(ctx.psi(0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn ladder_starts_at_the_resolution_floor() {
        let g = grid(32);
        let f = GridField::from_fn(g, 1, 1, |_, _, o| o[0] = 3.0).unwrap();
        let comp = harmonic_companion(&hopf_differential(&f, &ProjectionFrame::axes(1, 1)).unwrap());
        let ladder = [0.25, 0.5, 0.75];
        let ctx = MonotonicityContext::new(&f, &comp, (16, 16), 0.5, &MonotonicityOptions::default()).unwrap();
        // h = z̄ here, so d* is the Euclidean distance to w*.
        let floor = ctx.resolution_floor(0).unwrap();
        assert!((floor - core::f64::consts::SQRT_2 * g.h).abs() < 1e-12);
        let report = monotonicity_report(&ctx, &ladder, 0.05).unwrap();
        assert_eq!(report.unresolved(), 0);
        assert!(report.levels[0].rows.iter().all(|r| r.rho > floor));
        assert!(report.passed());

        let tight = MonotonicityContext::new(&f, &comp, (16, 16), 1.2 * g.h, &MonotonicityOptions::default()).unwrap();
        let report = monotonicity_report(&tight, &ladder, 0.05).unwrap();
        assert_eq!(report.unresolved(), 1);
        assert!(report.levels[0].rows.is_empty());
    }
}
