//! First variations of the Dirichlet energy.
//!
//! Domain variations reparametrize the grid by `X^t(x) = x + t·φ(x)` with a
//! compactly supported bump `φ`; range variations push the sheets inside an
//! admissible ball towards their site with the retraction `Γₖ`, cut off in
//! space by `λ(ρ − d*ₖ)`. Both derivatives are central differences with step
//! `t = h²` of the matched energy.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admissible::NestedBallChain;
use crate::analysis::{harmonic_companion, hopf_differential, MonotonicityContext, MonotonicityOptions};
use crate::embedding::ProjectionFrame;
use crate::error::{invalid, Error, Result};
use crate::field::{dirichlet_energy_matched, interpolate_into, GridField};
use crate::math::{dist_sq, norm, smoothstep5};
#[allow(unused_imports)]
use crate::math::Real;
use crate::qspace::{metric_sq_sheets, SupportDecomposition};

/// `φ(x) = direction · exp(1 − 1/(1 − s²))`, `s = |x − centre|/radius`, zero for `s ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainVariation {
    pub center: (f64, f64),
    pub radius: f64,
    pub direction: (f64, f64),
}

impl DomainVariation {
    pub fn value(&self, x: f64, y: f64) -> (f64, f64) {
        let b = self.bump(x, y).0;
        (b * self.direction.0, b * self.direction.1)
    }

    /// Bump value and its gradient.
    fn bump(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let r2 = self.radius * self.radius;
        let s2 = (dx * dx + dy * dy) / r2;
        if s2 >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let b = (1.0 - 1.0 / (1.0 - s2)).exp();
        // d/ds² of exp(1 − 1/(1 − s²)) is −b/(1 − s²)².
        let db_ds2 = -b / ((1.0 - s2) * (1.0 - s2));
        (b, db_ds2 * 2.0 * dx / r2, db_ds2 * 2.0 * dy / r2)
    }

    /// Support inside the grid and free of masked nodes.
    pub fn validate(&self, f: &GridField) -> Result<()> {
        let g = f.grid();
        if !(self.radius > 0.0) || !self.direction.0.is_finite() || !self.direction.1.is_finite() {
            return Err(invalid("bump radius must be positive and the direction finite"));
        }
        if !g.contains_disc(self.center.0, self.center.1, self.radius) {
            return Err(invalid("bump support leaves the grid"));
        }
        let r2 = self.radius * self.radius;
        for idx in 0..g.node_count() {
            if f.is_fixed(idx) {
                let (i, j) = g.coords_of(idx);
                let (x, y) = g.position(i, j);
                let (dx, dy) = (x - self.center.0, y - self.center.1);
                if dx * dx + dy * dy < r2 {
                    return Err(invalid("bump support contains a masked node"));
                }
            }
        }
        Ok(())
    }
}

/// `f ∘ X^t`, evaluated node by node with matched bilinear interpolation.
pub fn domain_varied(f: &GridField, v: &DomainVariation, t: f64) -> Result<GridField> {
    let g = *f.grid();
    let mut out = f.clone();
    let s = f.stride();
    let mut buf = vec![0.0; s];
    let (d0, d1) = v.direction;
    let mut min_jac = f64::INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.position(i, j);
            let (b, bx, by) = v.bump(x, y);
            if b != 0.0 {
                let jac = (1.0 + t * d0 * bx) * (1.0 + t * d1 * by) - t * t * d0 * by * d1 * bx;
                min_jac = min_jac.min(jac);
            }
        }
    }
    if min_jac <= 0.0 {
        return Err(Error::InvalidStep { t, min_jacobian: min_jac });
    }
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.position(i, j);
            let b = v.bump(x, y).0;
            if b == 0.0 {
                continue;
            }
            interpolate_into(f, x + t * b * d0, y + t * b * d1, &mut buf)?;
            out.node_sheets_mut(g.index(i, j)).copy_from_slice(&buf);
        }
    }
    Ok(out)
}

/// `d/dt Dir(f ∘ X^t)` at `t = 0` by a central difference with `t = h²`.
pub fn domain_variation_derivative(f: &GridField, v: &DomainVariation) -> Result<f64> {
    v.validate(f)?;
    let t = f.grid().h * f.grid().h;
    let plus = dirichlet_energy_matched(&domain_varied(f, v, t)?).total;
    let minus = dirichlet_energy_matched(&domain_varied(f, v, -t)?).total;
    Ok((plus - minus) / (2.0 * t))
}

/// `Γₖ(y) = χ(|qᵢ − y|)·(qᵢ − y)` for the nearest site `qᵢ`, with the spatial
/// cutoff `λ(ρ − d*ₖ)` of ramp width `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeVariation {
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    pub sites: SupportDecomposition,
    pub sigma: f64,
}

impl RangeVariation {
    pub fn inner_radius(&self) -> f64 {
        0.4 * self.sigma
    }

    pub fn outer_radius(&self) -> f64 {
        0.6 * self.sigma
    }

    /// `χ(s)`: 1 up to `(2/5)σ`, 0 from `(3/5)σ`, quintic in between.
    pub fn chi(&self, s: f64) -> f64 {
        1.0 - smoothstep5((s - self.inner_radius()) / (self.outer_radius() - self.inner_radius()))
    }

    pub fn gamma_into(&self, y: &[f64], out: &mut [f64]) {
        let (i, d) = self.sites.nearest_site(y);
        let c = self.chi(d);
        for ((o, q), v) in out.iter_mut().zip(self.sites.site(i)).zip(y) {
            *o = c * (q - v);
        }
    }

    pub fn gamma(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.gamma_into(y, &mut out);
        out
    }

    pub fn lambda(&self, d_star: f64) -> f64 {
        smoothstep5((self.rho - d_star) / self.eps)
    }

    /// Largest `|Γ(a) − Γ(b)|/|a − b|` over random pairs near the sites.
    pub fn sampled_lipschitz(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.sites.n();
        let reach = 0.7 * self.sigma;
        let mut best = 0.0f64;
        for _ in 0..samples {
            let site = self.sites.site(rng.gen_range(0..self.sites.count()));
            let a: Vec<f64> = site.iter().map(|c| c + reach * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            let step = self.sigma * 1e-3 * rng.gen::<f64>().max(1e-3);
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let len = norm(&dir).max(1e-300);
            dir.iter_mut().for_each(|x| *x *= step / len);
            let b: Vec<f64> = a.iter().zip(&dir).map(|(x, d)| x + d).collect();
            let (ga, gb) = (self.gamma(&a), self.gamma(&b));
            let ratio = dist_sq(&ga, &gb).sqrt() / dist_sq(&a, &b).sqrt();
            best = best.max(ratio);
        }
        best
    }
}

/// Assembles the retraction and cutoff for level `k` of `chain`.
pub fn build_admissible_variation(chain: &NestedBallChain, k: usize, rho: f64, eps: f64) -> Result<RangeVariation> {
    if k > chain.depth() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: chain.depth() + 1,
        });
    }
    let sigma = chain.levels[k].sigma;
    if !(rho > 0.0 && rho < sigma) {
        return Err(Error::OutOfRange {
            what: "rho",
            value: rho,
            lo: 0.0,
            hi: sigma,
        });
    }
    let eps_cap = chain.levels[0].sigma / 10.0;
    if !(eps > 0.0 && eps < eps_cap) {
        return Err(Error::OutOfRange {
            what: "eps",
            value: eps,
            lo: 0.0,
            hi: eps_cap,
        });
    }
    let sites = chain.levels[k].support.clone();
    // Γ must act on bounded balls; a single site with σ = ∞ uses the
    // spatial cutoff alone, so take the radius from ρ.
    let sigma = if sigma.is_finite() { sigma } else { 2.5 * rho };
    Ok(RangeVariation {
        k,
        rho,
        eps,
        sites,
        sigma,
    })
}

/// The nodal velocity `λ(ρ − d*ₖ(x))·Γₖ(fᵢ(x))`, after checking that every
/// node with `λ > 0` lies in the admissible ball `𝔹_{(2/5)σₖ}(q⁽ᵏ⁾)`.
pub fn range_velocity(f: &GridField, d_star: &[f64], rv: &RangeVariation) -> Result<Vec<f64>> {
    let g = f.grid();
    if d_star.len() != g.node_count() {
        return Err(invalid("d* must have one value per node"));
    }
    let (q, n) = (f.q(), f.n());
    let level = rv.sites.rebuild();
    let bound = rv.inner_radius();
    let mut out = vec![0.0; f.values().len()];
    let stride = f.stride();
    for idx in 0..g.node_count() {
        if f.is_fixed(idx) {
            continue;
        }
        let lam = rv.lambda(d_star[idx]);
        if lam == 0.0 {
            continue;
        }
        let sheets = f.node_sheets(idx);
        let dist = metric_sq_sheets(level.coords(), sheets, q, n).sqrt();
        if dist > bound * (1.0 + 1e-12) {
            let (i, j) = g.coords_of(idx);
            return Err(Error::NotAdmissible {
                i,
                j,
                distance: dist,
                bound,
            });
        }
        let dst = &mut out[idx * stride..(idx + 1) * stride];
        for s in 0..q {
            rv.gamma_into(&sheets[s * n..(s + 1) * n], &mut dst[s * n..(s + 1) * n]);
        }
        dst.iter_mut().for_each(|v| *v *= lam);
    }
    Ok(out)
}

/// `f^t = Σ [[fᵢ + t·λ(ρ − d*ₖ)·Γₖ(fᵢ)]]`.
pub fn range_varied(f: &GridField, velocity: &[f64], t: f64) -> GridField {
    let mut out = f.clone();
    for idx in 0..f.grid().node_count() {
        let stride = f.stride();
        let v = &velocity[idx * stride..(idx + 1) * stride];
        out.node_sheets_mut(idx).iter_mut().zip(v).for_each(|(x, d)| *x += t * d);
    }
    out
}

/// `d/dt Dir(f^t)` at `t = 0` by a central difference with `t = h²`.
pub fn range_variation_derivative(f: &GridField, d_star: &[f64], rv: &RangeVariation) -> Result<f64> {
    let velocity = range_velocity(f, d_star, rv)?;
    let t = f.grid().h * f.grid().h;
    let plus = dirichlet_energy_matched(&range_varied(f, &velocity, t)).total;
    let minus = dirichlet_energy_matched(&range_varied(f, &velocity, -t)).total;
    Ok((plus - minus) / (2.0 * t))
}

impl MonotonicityContext {
    /// The range variation at level `k ≤ k₀` with this context's ramp width.
    pub fn admissible_variation(&self, k: usize, rho: f64) -> Result<RangeVariation> {
        let (lo, hi) = self.valid_range(k)?;
        if !(rho > lo && rho < hi) {
            return Err(Error::OutOfRange {
                what: "rho",
                value: rho,
                lo,
                hi,
            });
        }
        let sigma = self.chain.levels[k].sigma;
        let sigma = if sigma.is_finite() { sigma } else { 2.5 * hi };
        Ok(RangeVariation {
            k,
            rho,
            eps: self.eps,
            sites: self.chain.levels[k].support.clone(),
            sigma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainTrial {
    pub variation: DomainVariation,
    pub derivative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTrial {
    pub w_star: (usize, usize),
    pub k: usize,
    pub rho: f64,
    pub derivative: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub domain: Vec<DomainTrial>,
    pub range: Vec<RangeTrial>,
    pub domain_max: f64,
    pub range_max: f64,
    /// Total matched energy of `f`.
    pub energy_scale: f64,
}

impl StationarityReport {
    pub fn max_relative(&self) -> f64 {
        self.domain_max.max(self.range_max) / self.energy_scale.max(f64::MIN_POSITIVE)
    }
}

/// `max |derivative|` over `trials` random unit bumps and over every level of
/// the admissible range variations at `trials` random base points.
pub fn stationarity_residual(
    f: &GridField,
    frame: &ProjectionFrame,
    trials: usize,
    seed: u64,
) -> Result<StationarityReport> {
    let g = *f.grid();
    let width = (g.x_max() - g.x0).min(g.y_max() - g.y0);
    let energy_scale = dirichlet_energy_matched(f).total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut domain = Vec::with_capacity(trials);
    let mut attempts = 0;
    while domain.len() < trials && attempts < 100 * trials.max(1) {
        attempts += 1;
        let radius = width * rng.gen_range(0.05..0.25);
        let cx = rng.gen_range(g.x0 + radius + g.h..g.x_max() - radius - g.h);
        let cy = rng.gen_range(g.y0 + radius + g.h..g.y_max() - radius - g.h);
        let angle = rng.gen_range(0.0..core::f64::consts::TAU);
        let v = DomainVariation {
            center: (cx, cy),
            radius,
            direction: (angle.cos(), angle.sin()),
        };
        if v.validate(f).is_err() {
            continue;
        }
        let derivative = domain_variation_derivative(f, &v)?;
        domain.push(DomainTrial {
            variation: v,
            derivative,
        });
    }

    let comp = harmonic_companion(&hopf_differential(f, frame)?);
    let mut range = Vec::new();
    for trial in 0..trials {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
        trial_rng.set_stream(trial as u64 + 1);
        let i = trial_rng.gen_range(2..g.nx - 2);
        let j = trial_rng.gen_range(2..g.ny - 2);
        let (x, y) = g.position(i, j);
        let room = (x - g.x0).min(g.x_max() - x).min(y - g.y0).min(g.y_max() - y) - 2.0 * g.h;
        let r = room.min(0.25 * width);
        if r < 2.0 * g.h {
            continue;
        }
        let ctx = MonotonicityContext::new(f, &comp, (i, j), r, &MonotonicityOptions::default())?;
        for k in 0..=ctx.k0 {
            let (_, hi) = ctx.valid_range(k)?;
            let rho = 0.9 * hi.min(0.4 * ctx.chain.levels[k].sigma);
            let rv = ctx.admissible_variation(k, rho)?;
            let derivative = range_variation_derivative(f, ctx.d_star(k), &rv)?;
            range.push(RangeTrial {
                w_star: (i, j),
                k,
                rho,
                derivative,
                lipschitz: rv.sampled_lipschitz(200, seed ^ trial as u64),
            });
        }
    }
    let domain_max = domain.iter().map(|d| d.derivative.abs()).fold(0.0, f64::max);
    let range_max = range.iter().map(|d| d.derivative.abs()).fold(0.0, f64::max);
    Ok(StationarityReport {
        domain,
        range,
        domain_max,
        range_max,
        energy_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissible::{angle_separated_frame, nested_chain};
    use crate::field::GridSpec;
    use crate::qspace::{support, QPoint};

    fn chain_for(p: &QPoint) -> NestedBallChain {
        nested_chain(p, &angle_separated_frame(&support(p, 1e-9)).unwrap()).unwrap()
    }

    #[test]
    fn gamma_vanishes_at_sites_and_outside_the_outer_ball() {
        let p = QPoint::from_sheets(2, &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let chain = chain_for(&p);
        let sigma = chain.levels[0].sigma;
        let rv = build_admissible_variation(&chain, 0, 0.5 * sigma, sigma / 20.0).unwrap();
        assert_eq!(rv.gamma(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(rv.gamma(&[1.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(rv.gamma(&[1.0, 0.6 * sigma]), vec![0.0, 0.0]);
        let inside = rv.gamma(&[0.1 * sigma, 0.0]);
        assert!((inside[0] + 0.1 * sigma).abs() < 1e-15);
        let lip = rv.sampled_lipschitz(2000, 3);
        assert!(lip > 1.0 && lip < 5.0, "{lip}");
    }

    #[test]
    fn build_rejects_out_of_range_parameters() {
        let p = QPoint::from_sheets(1, &[[0.0], [1.0]]).unwrap();
        let chain = chain_for(&p);
        let sigma = chain.levels[0].sigma;
        assert!(build_admissible_variation(&chain, 0, sigma, sigma / 20.0).is_err());
        assert!(build_admissible_variation(&chain, 0, 0.5 * sigma, sigma).is_err());
        assert!(build_admissible_variation(&chain, 5, 0.5 * sigma, sigma / 20.0).is_err());
    }

    #[test]
    fn bump_validation_and_step_check() {
        let g = GridSpec::centered_square(1.0, 16);
        let f = GridField::from_fn(g, 1, 1, |x, y, o| o[0] = x * y).unwrap();
        let ok = DomainVariation {
            center: (0.0, 0.0),
            radius: 0.5,
            direction: (1.0, 0.0),
        };
        assert!(ok.validate(&f).is_ok());
        let leaving = DomainVariation {
            center: (0.5, 0.0),
            radius: 0.6,
            ..ok
        };
        assert!(leaving.validate(&f).is_err());
        let mut mask = f.boundary_mask().to_vec();
        mask[g.index(8, 8)] = true;
        let pinned = GridField::new(g, 1, 1, f.values().to_vec(), mask).unwrap();
        assert!(ok.validate(&pinned).is_err());
        assert!(matches!(domain_varied(&f, &ok, 10.0), Err(Error::InvalidStep { .. })));
        // Outside the support the node values are untouched.
        let moved = domain_varied(&f, &ok, 1e-3).unwrap();
        assert_eq!(moved.at(1, 1), f.at(1, 1));
    }

    #[test]
    fn quadratic_energy_central_difference_is_exact() {
        let g = GridSpec::centered_square(1.0, 12);
        let f = GridField::from_fn(g, 2, 1, |x, y, o| {
            o[0] = x + 0.3 * y * y;
            o[1] = 5.0 + x * y;
        })
        .unwrap();
        let p = f.at(6, 6);
        let chain = chain_for(&p);
        let sigma = chain.levels[0].sigma;
        let rv = build_admissible_variation(&chain, 0, 0.3 * sigma, sigma / 20.0).unwrap();
        // λ = 1 on the nodes next to the base point and 0 elsewhere.
        let d: Vec<f64> = (0..g.node_count())
            .map(|idx| {
                let (i, j) = g.coords_of(idx);
                if i.abs_diff(6) <= 2 && j.abs_diff(6) <= 2 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let velocity = range_velocity(&f, &d, &rv).unwrap();
        assert!(velocity.iter().any(|&v| v != 0.0));
        // Sheets stay far apart and inside the χ = 1 ball, so the energy is quadratic in t.
        let e = |t: f64| dirichlet_energy_matched(&range_varied(&f, &velocity, t)).total;
        let (e0, e1, e2) = (e(0.0), e(0.01), e(0.02));
        let slope = (4.0 * e1 - 3.0 * e0 - e2) / 0.02;
        let cd = range_variation_derivative(&f, &d, &rv).unwrap();
        let full = vec![0.0; g.node_count()];
        assert!(matches!(range_velocity(&f, &full, &rv), Err(Error::NotAdmissible { .. })));
        assert!((cd - slope).abs() < 1e-8 * (1.0 + slope.abs()), "{cd} {slope}");
    }
}
