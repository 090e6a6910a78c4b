//! Q-valued fields sampled on uniform planar grids.
//!
//! Energies are cell-integrated: every cell receives half of `|ΔF|²` from each
//! of its four edges, so interior edges carry weight 1 and rim edges 1/2. The
//! discretization is exact for affine single-valued fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::ProjectionFrame;
use crate::error::{invalid, Error, Result};
use crate::math::dist_sq;
#[allow(unused_imports)]
use crate::math::Real;
use crate::qspace::{match_sheets, metric_sq_sheets, QPoint};

/// Node layout: `nx × ny` nodes at `(x0 + i·h, y0 + j·h)`, node index `j·nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, h: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(invalid("a grid needs at least 2 × 2 nodes"));
        }
        if !(h > 0.0) || !h.is_finite() || !x0.is_finite() || !y0.is_finite() {
            return Err(invalid("grid spacing must be positive and the origin finite"));
        }
        Ok(Self { nx, ny, x0, y0, h })
    }

    /// The square `[−half, half]²` with `cells` cells per side.
    pub fn centered_square(half: f64, cells: usize) -> Self {
        let h = 2.0 * half / cells as f64;
        Self {
            nx: cells + 1,
            ny: cells + 1,
            x0: -half,
            y0: -half,
            h,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn is_rim(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.nx - 1) as f64 * self.h
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.h
    }

    /// The node closest to the grid's geometric centre.
    pub fn center_node(&self) -> (usize, usize) {
        ((self.nx - 1) / 2, (self.ny - 1) / 2)
    }

    /// The node nearest to `(x, y)`, clamped into the grid.
    pub fn nearest_node(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, m: usize| -> usize {
            let k = ((v / self.h) + 0.5).floor();
            if k < 0.0 {
                0
            } else {
                (k as usize).min(m - 1)
            }
        };
        (clamp(x - self.x0, self.nx), clamp(y - self.y0, self.ny))
    }

    /// True iff the closed disc lies in the grid rectangle.
    pub fn contains_disc(&self, cx: f64, cy: f64, r: f64) -> bool {
        let slack = 1e-12 * self.h;
        r >= 0.0
            && cx - r >= self.x0 - slack
            && cx + r <= self.x_max() + slack
            && cy - r >= self.y0 - slack
            && cy + r <= self.y_max() + slack
    }

    /// Weight of the edge from node `(i, j)` in direction `axis` (0 = x, 1 = y):
    /// half the number of cells adjacent to it.
    fn edge_weight(&self, i: usize, j: usize, axis: usize) -> f64 {
        let (k, m) = if axis == 0 { (j, self.ny) } else { (i, self.nx) };
        0.5 * ((k > 0) as u8 + (k + 1 < m) as u8) as f64
    }
}

/// A Q-valued map on a [`GridSpec`]; node `k` holds `Q` sheets in ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    q: usize,
    n: usize,
    values: Vec<f64>,
    boundary_mask: Vec<bool>,
}

impl GridField {
    pub fn new(
        grid: GridSpec,
        q: usize,
        n: usize,
        values: Vec<f64>,
        boundary_mask: Vec<bool>,
    ) -> Result<Self> {
        let grid = GridSpec::new(grid.nx, grid.ny, grid.x0, grid.y0, grid.h)?;
        if q == 0 || n == 0 {
            return Err(invalid("Q and n must be positive"));
        }
        if values.len() != grid.node_count() * q * n {
            return Err(invalid(alloc::format!(
                "expected {} values, got {}",
                grid.node_count() * q * n,
                values.len()
            )));
        }
        if boundary_mask.len() != grid.node_count() {
            return Err(invalid("boundary mask length differs from the node count"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.is_rim(i, j) && !boundary_mask[grid.index(i, j)] {
                    return Err(invalid("the boundary mask must cover the grid rim"));
                }
            }
        }
        Ok(Self {
            grid,
            q,
            n,
            values,
            boundary_mask,
        })
    }

    /// Samples `g(x, y, sheets_out)` at every node; the rim is masked.
    pub fn from_fn(
        grid: GridSpec,
        q: usize,
        n: usize,
        mut g: impl FnMut(f64, f64, &mut [f64]),
    ) -> Result<Self> {
        let stride = q * n;
        let mut values = vec![0.0; grid.node_count() * stride];
        let mut mask = vec![false; grid.node_count()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j);
                let (x, y) = grid.position(i, j);
                g(x, y, &mut values[idx * stride..(idx + 1) * stride]);
                mask[idx] = grid.is_rim(i, j);
            }
        }
        Self::new(grid, q, n, values, mask)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn stride(&self) -> usize {
        self.q * self.n
    }

    pub fn node_sheets(&self, idx: usize) -> &[f64] {
        let s = self.stride();
        &self.values[idx * s..(idx + 1) * s]
    }

    pub fn node_sheets_mut(&mut self, idx: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.values[idx * s..(idx + 1) * s]
    }

    pub fn node_point(&self, idx: usize) -> QPoint {
        QPoint::from_raw(self.q, self.n, self.node_sheets(idx).to_vec())
    }

    pub fn at(&self, i: usize, j: usize) -> QPoint {
        self.node_point(self.grid.index(i, j))
    }

    /// Overwrites node `idx`; values must be finite.
    pub fn set_node(&mut self, idx: usize, p: &QPoint) -> Result<()> {
        if p.q() != self.q || p.n() != self.n {
            return Err(invalid("point shape differs from the field"));
        }
        self.node_sheets_mut(idx).copy_from_slice(p.coords());
        Ok(())
    }

    pub fn is_fixed(&self, idx: usize) -> bool {
        self.boundary_mask[idx]
    }

    /// Adds `amplitude · noise()` to every free coordinate.
    pub fn perturb_interior(&mut self, amplitude: f64, mut noise: impl FnMut() -> f64) {
        for idx in 0..self.grid.node_count() {
            if !self.boundary_mask[idx] {
                self.node_sheets_mut(idx).iter_mut().for_each(|v| *v += amplitude * noise());
            }
        }
    }
}

/// Dirichlet energy split over the `(nx−1)(ny−1)` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    /// Row-major, cell `(i, j)` at `j·cells_x + i`.
    pub per_cell: Vec<f64>,
}

impl EnergyBreakdown {
    fn from_edges(grid: &GridSpec, horizontal: &[f64], vertical: &[f64]) -> Self {
        let (cx, cy) = (grid.nx - 1, grid.ny - 1);
        let mut per_cell = vec![0.0; cx * cy];
        for j in 0..cy {
            for i in 0..cx {
                let bottom = horizontal[j * cx + i];
                let top = horizontal[(j + 1) * cx + i];
                let left = vertical[j * grid.nx + i];
                let right = vertical[j * grid.nx + i + 1];
                per_cell[j * cx + i] = 0.5 * (bottom + top + left + right);
            }
        }
        let total = per_cell.iter().sum();
        Self {
            total,
            cells_x: cx,
            cells_y: cy,
            per_cell,
        }
    }

    /// Energy of the cells whose centres lie in the closed disc.
    pub fn disc_total(&self, grid: &GridSpec, cx: f64, cy: f64, r: f64) -> f64 {
        let r2 = r * r;
        let mut sum = 0.0;
        for j in 0..self.cells_y {
            for i in 0..self.cells_x {
                let (x, y) = grid.position(i, j);
                let (dx, dy) = (x + 0.5 * grid.h - cx, y + 0.5 * grid.h - cy);
                if dx * dx + dy * dy <= r2 {
                    sum += self.per_cell[j * self.cells_x + i];
                }
            }
        }
        sum
    }
}

/// `|ΔF|²` along every horizontal and vertical edge of the nodal vectors `F`.
fn edge_terms(grid: &GridSpec, mut term: impl FnMut(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut horizontal = Vec::with_capacity((nx - 1) * ny);
    for j in 0..ny {
        for i in 0..nx - 1 {
            horizontal.push(term(grid.index(i, j), grid.index(i + 1, j)));
        }
    }
    let mut vertical = Vec::with_capacity(nx * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx {
            vertical.push(term(grid.index(i, j), grid.index(i, j + 1)));
        }
    }
    (horizontal, vertical)
}

/// ξ₀ of every node, `n·Q` values per node.
pub fn xi0_nodes(f: &GridField, frame: &ProjectionFrame) -> Result<Vec<f64>> {
    if frame.n() != f.n || frame.q() != f.q {
        return Err(invalid("frame (Q, n) differs from the field"));
    }
    let stride = f.stride();
    let mut out = vec![0.0; f.values.len()];
    for idx in 0..f.grid.node_count() {
        frame.xi0_into(f.node_sheets(idx), &mut out[idx * stride..(idx + 1) * stride]);
    }
    Ok(out)
}

/// `Dir(ξ₀∘f)` with sorted projections in `frame`.
pub fn dirichlet_energy(f: &GridField, frame: &ProjectionFrame) -> Result<EnergyBreakdown> {
    let xi = xi0_nodes(f, frame)?;
    let s = f.stride();
    let (hz, vt) = edge_terms(&f.grid, |a, b| dist_sq(&xi[a * s..(a + 1) * s], &xi[b * s..(b + 1) * s]));
    Ok(EnergyBreakdown::from_edges(&f.grid, &hz, &vt))
}

/// The same integral with `𝒢(f(a), f(b))²` on every edge.
pub fn dirichlet_energy_matched(f: &GridField) -> EnergyBreakdown {
    let (q, n) = (f.q, f.n);
    let (hz, vt) = edge_terms(&f.grid, |a, b| {
        metric_sq_sheets(f.node_sheets(a), f.node_sheets(b), q, n)
    });
    EnergyBreakdown::from_edges(&f.grid, &hz, &vt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Outer iterations (matching refreshes).
    pub max_iters: usize,
    /// Stop once an outer iteration lowers the energy by less than this
    /// fraction.
    pub tol_rel_energy: f64,
    /// Stop once no coordinate moves by more than this in a sweep.
    pub tol_update: f64,
    /// Jacobi sweeps per outer iteration.
    pub inner_sweeps: usize,
    pub damping: f64,
    /// Accepted for reproducible configurations; the scheme itself is
    /// deterministic and draws no random numbers.
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol_rel_energy: 1e-13,
            tol_update: 1e-12,
            inner_sweeps: 20,
            damping: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub field: GridField,
    /// Matched energy before the first and after every outer iteration.
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Frozen per-edge sheet pairings, stored per free node: for each of its
/// (up to four) neighbours, the neighbour index, the edge weight and which
/// neighbour sheet pairs with each of the node's sheets.
struct Links {
    q: usize,
    nodes: Vec<usize>,
    /// `offsets[k]..offsets[k+1]` indexes `neighbours`/`weights` for `nodes[k]`.
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    weights: Vec<f64>,
    inv_weight_sum: Vec<f64>,
    /// `q` entries per neighbour link.
    pairing: Vec<usize>,
}

impl Links {
    fn compute(f: &GridField) -> Self {
        let (q, n, g) = (f.q, f.n, f.grid);
        let mut links = Links {
            q,
            nodes: Vec::new(),
            offsets: vec![0],
            neighbours: Vec::new(),
            weights: Vec::new(),
            inv_weight_sum: Vec::new(),
            pairing: Vec::new(),
        };
        let mut perm = vec![0usize; q];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let a = g.index(i, j);
                if f.boundary_mask[a] {
                    continue;
                }
                let mut wsum = 0.0;
                let mut add = |b: usize, w: f64, links: &mut Links| {
                    match_sheets(f.node_sheets(a), f.node_sheets(b), q, n, &mut perm);
                    links.neighbours.push(b);
                    links.weights.push(w);
                    links.pairing.extend_from_slice(&perm);
                    wsum += w;
                };
                if i + 1 < g.nx {
                    add(g.index(i + 1, j), g.edge_weight(i, j, 0), &mut links);
                }
                if i > 0 {
                    add(g.index(i - 1, j), g.edge_weight(i - 1, j, 0), &mut links);
                }
                if j + 1 < g.ny {
                    add(g.index(i, j + 1), g.edge_weight(i, j, 1), &mut links);
                }
                if j > 0 {
                    add(g.index(i, j - 1), g.edge_weight(i, j - 1, 1), &mut links);
                }
                links.nodes.push(a);
                links.offsets.push(links.neighbours.len());
                links.inv_weight_sum.push(1.0 / wsum);
            }
        }
        links
    }
}

/// Descends the matched energy from `f`, keeping masked nodes fixed.
///
/// Each outer iteration fixes optimal per-edge matchings, which turns the
/// energy into a decoupled quadratic, and runs damped Jacobi sweeps on it.
/// Both steps can only lower the energy.
pub fn minimize(f: &GridField, opts: &MinimizeOptions) -> Result<Minimized> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::OutOfRange {
            what: "damping",
            value: opts.damping,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut field = f.clone();
    let mut energy = dirichlet_energy_matched(&field).total;
    if !energy.is_finite() {
        return Err(Error::NumericalFailure("initial energy is not finite".into()));
    }
    let mut history = vec![energy];
    let mut next = field.values.clone();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let links = Links::compute(&field);
        let mut max_update = 0.0f64;
        for _ in 0..opts.inner_sweeps {
            max_update = jacobi_sweep(&field.values, field.n, &links, opts.damping, &mut next);
            core::mem::swap(&mut field.values, &mut next);
            if max_update <= opts.tol_update {
                break;
            }
        }
        let new_energy = dirichlet_energy_matched(&field).total;
        if !new_energy.is_finite() {
            return Err(Error::NumericalFailure(alloc::format!(
                "energy became non-finite at outer iteration {iterations}"
            )));
        }
        let rel = (energy - new_energy) / energy.max(f64::MIN_POSITIVE);
        history.push(new_energy);
        energy = new_energy;
        if max_update <= opts.tol_update || rel < opts.tol_rel_energy {
            converged = true;
            break;
        }
    }
    Ok(Minimized {
        field,
        energy_history: history,
        iterations,
        converged,
    })
}

/// One damped Jacobi sweep from `cur` into `out` (masked nodes are copied
/// through untouched); returns the largest coordinate change.
fn jacobi_sweep(cur: &[f64], n: usize, links: &Links, omega: f64, out: &mut [f64]) -> f64 {
    let q = links.q;
    let stride = q * n;
    out.copy_from_slice(cur);
    let mut acc = vec![0.0; stride];
    let mut max_update = 0.0f64;
    for (k, &a) in links.nodes.iter().enumerate() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for l in links.offsets[k]..links.offsets[k + 1] {
            let w = links.weights[l];
            let nb = &cur[links.neighbours[l] * stride..][..stride];
            let pairing = &links.pairing[l * q..(l + 1) * q];
            for (s, &t) in pairing.iter().enumerate() {
                let src = &nb[t * n..(t + 1) * n];
                for (dst, v) in acc[s * n..(s + 1) * n].iter_mut().zip(src) {
                    *dst += w * v;
                }
            }
        }
        let inv = links.inv_weight_sum[k];
        let node = &cur[a * stride..(a + 1) * stride];
        let dst = &mut out[a * stride..(a + 1) * stride];
        for c in 0..stride {
            let v = node[c] + omega * (acc[c] * inv - node[c]);
            max_update = max_update.max((v - node[c]).abs());
            dst[c] = v;
        }
    }
    max_update
}

/// The principal square root of `x + iy` and its negative, as planar sheets.
pub fn sqrt_sheets(x: f64, y: f64) -> [f64; 4] {
    let r = x.hypot(y);
    let re = ((r + x) / 2.0).max(0.0).sqrt();
    let im_abs = ((r - x) / 2.0).max(0.0).sqrt();
    let im = if y < 0.0 { -im_abs } else { im_abs };
    [re, im, -re, -im]
}

/// `[[√z]] + [[−√z]]` sampled on `grid` (Q = n = 2), rim masked.
pub fn sqrt_field(grid: GridSpec) -> Result<GridField> {
    GridField::from_fn(grid, 2, 2, |x, y, out| out.copy_from_slice(&sqrt_sheets(x, y)))
}

/// `f(x, y)` by matched bilinear interpolation.
///
/// The sheets of the three other corners of the containing cell are paired
/// optimally with the corner nearest to `(x, y)`, then blended sheet by sheet
/// with bilinear weights. At a node this returns the node value.
pub fn interpolate_qpoint(f: &GridField, x: f64, y: f64) -> Result<QPoint> {
    let mut out = vec![0.0; f.stride()];
    interpolate_into(f, x, y, &mut out)?;
    Ok(QPoint::from_raw(f.q, f.n, out))
}

pub(crate) fn interpolate_into(f: &GridField, x: f64, y: f64, out: &mut [f64]) -> Result<()> {
    let g = &f.grid;
    let slack = 1e-9 * g.h;
    if !(x >= g.x0 - slack && x <= g.x_max() + slack && y >= g.y0 - slack && y <= g.y_max() + slack) {
        return Err(invalid(alloc::format!("({x}, {y}) lies outside the grid")));
    }
    let locate = |v: f64, m: usize| -> (usize, f64) {
        let s = (v / g.h).clamp(0.0, (m - 1) as f64);
        let i = (s.floor() as usize).min(m - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    };
    let (i, tx) = locate(x - g.x0, g.nx);
    let (j, ty) = locate(y - g.y0, g.ny);
    let corners = [
        (g.index(i, j), (1.0 - tx) * (1.0 - ty)),
        (g.index(i + 1, j), tx * (1.0 - ty)),
        (g.index(i, j + 1), (1.0 - tx) * ty),
        (g.index(i + 1, j + 1), tx * ty),
    ];
    let reference = (0..4)
        .max_by(|&a, &b| corners[a].1.total_cmp(&corners[b].1).then(b.cmp(&a)))
        .unwrap_or(0);
    let (q, n) = (f.q, f.n);
    let base = f.node_sheets(corners[reference].0);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut perm = vec![0usize; q];
    for &(idx, w) in &corners {
        if w == 0.0 {
            continue;
        }
        let sheets = f.node_sheets(idx);
        match_sheets(base, sheets, q, n, &mut perm);
        for s in 0..q {
            for c in 0..n {
                out[s * n + c] += w * sheets[perm[s] * n + c];
            }
        }
    }
    Ok(())
}

/// `√(4π / ln 2)`.
pub fn courant_lebesgue_constant() -> f64 {
    (4.0 * core::f64::consts::PI / core::f64::consts::LN_2).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSlice {
    pub radius: f64,
    pub oscillation: f64,
    /// `Dir(ξ₀∘f; U_R)` on the scanned disc.
    pub disc_energy: f64,
    /// `C_CL · √disc_energy`.
    pub bound: f64,
}

/// Samples `f` at `4⌈2πr/h⌉` equally spaced points of the circle.
pub fn circle_samples(f: &GridField, cx: f64, cy: f64, r: f64) -> Result<Vec<f64>> {
    let h = f.grid.h;
    let count = if r == 0.0 {
        1
    } else {
        4 * (core::f64::consts::TAU * r / h).ceil().max(1.0) as usize
    };
    let s = f.stride();
    let mut out = vec![0.0; count * s];
    for k in 0..count {
        let th = core::f64::consts::TAU * k as f64 / count as f64;
        interpolate_into(f, cx + r * th.cos(), cy + r * th.sin(), &mut out[k * s..(k + 1) * s])?;
    }
    Ok(out)
}

/// `max 𝒢` over all pairs of circle samples.
pub fn circle_oscillation(f: &GridField, cx: f64, cy: f64, r: f64) -> Result<f64> {
    let samples = circle_samples(f, cx, cy, r)?;
    let s = f.stride();
    let count = samples.len() / s;
    let mut best = 0.0f64;
    for a in 0..count {
        for b in a + 1..count {
            let d = metric_sq_sheets(&samples[a * s..(a + 1) * s], &samples[b * s..(b + 1) * s], f.q, f.n);
            best = best.max(d);
        }
    }
    Ok(best.sqrt())
}

/// Scans `r ∈ [R/2, R]` in steps of `h` and returns the circle of least
/// oscillation together with the Courant-Lebesgue bound.
pub fn courant_lebesgue_slice(
    f: &GridField,
    frame: &ProjectionFrame,
    cx: f64,
    cy: f64,
    radius: f64,
) -> Result<CircleSlice> {
    if !(radius > 0.0) || !f.grid.contains_disc(cx, cy, radius) {
        return Err(invalid("the disc must have positive radius and lie inside the grid"));
    }
    let h = f.grid.h;
    let steps = ((radius / 2.0) / h).floor() as usize;
    let mut best = (f64::INFINITY, radius);
    for k in 0..=steps {
        let r = (radius / 2.0 + k as f64 * h).min(radius);
        let osc = circle_oscillation(f, cx, cy, r)?;
        if osc < best.0 {
            best = (osc, r);
        }
    }
    let disc_energy = dirichlet_energy(f, frame)?.disc_total(&f.grid, cx, cy, radius);
    Ok(CircleSlice {
        radius: best.1,
        oscillation: best.0,
        disc_energy,
        bound: courant_lebesgue_constant() * disc_energy.sqrt(),
    })
}
