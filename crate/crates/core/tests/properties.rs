mod common;

use common::*;
use proptest::prelude::*;
use qvk_core::admissible::{angle_separated_frame, chain_inclusion_check, interpolate, nested_chain, subtract};
use qvk_core::field::{dirichlet_energy, dirichlet_energy_matched, minimize, GridField, GridSpec, MinimizeOptions};
use qvk_core::variations::{domain_varied, range_velocity, DomainVariation, RangeVariation};
use qvk_core::{
    embedded_distance, metric_g, min_separation, optimal_matching, pushforward_projection, support, xi0, xi_alpha,
    ProjectionFrame, QPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn permuted(p: &QPoint, r: &mut ChaCha8Rng) -> QPoint {
    use rand::seq::SliceRandom;
    let mut sheets: Vec<Vec<f64>> = p.sheets().map(<[f64]>::to_vec).collect();
    sheets.shuffle(r);
    QPoint::from_sheets(p.n(), &sheets).unwrap()
}

fn xi0_vec(frame: &ProjectionFrame, p: &QPoint) -> Vec<f64> {
    xi0(frame, p).unwrap().values().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_is_symmetric_and_zero_on_relabelings(seed: u64, q in 1usize..7, n in 1usize..4) {
        let mut r = rng(seed);
        let p = clustered_qpoint(&mut r, q, n);
        let s = uniform_qpoint(&mut r, q, n, 2.0);
        let a = metric_g(&p, &s).unwrap();
        let b = metric_g(&s, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        prop_assert!(metric_g(&p, &permuted(&p, &mut r)).unwrap() <= 1e-12);
        if a <= p.default_dedup_tol() {
            prop_assert!(support(&p, p.default_dedup_tol()).count() == support(&s, s.default_dedup_tol()).count());
        }
    }

    #[test]
    fn metric_triangle_inequality(seed: u64, q in 1usize..7, n in 1usize..4) {
        let mut r = rng(seed);
        let (a, b, c) = (
            clustered_qpoint(&mut r, q, n),
            clustered_qpoint(&mut r, q, n),
            clustered_qpoint(&mut r, q, n),
        );
        let ac = metric_g(&a, &c).unwrap();
        let ab = metric_g(&a, &b).unwrap();
        let bc = metric_g(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    #[test]
    fn assignment_matches_exhaustive_search(seed: u64, q in 1usize..7, n in 1usize..4) {
        let mut r = rng(seed);
        let p = uniform_qpoint(&mut r, q, n, 1.0);
        let s = clustered_qpoint(&mut r, q, n);
        let m = optimal_matching(&p, &s).unwrap();
        let oracle = brute_metric(&p, &s);
        prop_assert!((m.distance - oracle).abs() <= 1e-12 * (1.0 + oracle));
        let mut seen = vec![false; q];
        let mut cost = 0.0;
        for (i, &j) in m.perm.iter().enumerate() {
            prop_assert!(!seen[j]);
            seen[j] = true;
            cost += p.sheet(i).iter().zip(s.sheet(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        prop_assert!((cost.sqrt() - m.distance).abs() <= 1e-12 * (1.0 + oracle));
    }

    #[test]
    fn xi0_is_one_lipschitz(seed: u64, q in 1usize..6, n in 1usize..4) {
        let mut r = rng(seed);
        let p = clustered_qpoint(&mut r, q, n);
        let s = clustered_qpoint(&mut r, q, n);
        let frame = ProjectionFrame::axes(n, q);
        let d = embedded_distance(&xi0(&frame, &p).unwrap(), &xi0(&frame, &s).unwrap()).unwrap();
        let g = metric_g(&p, &s).unwrap();
        prop_assert!(d <= g + 1e-10);
        if n == 1 {
            prop_assert!((d - g).abs() <= 1e-10);
        }
    }

    #[test]
    fn per_axis_projection_identity(seed: u64, q in 1usize..6, n in 1usize..4) {
        let mut r = rng(seed);
        let p = clustered_qpoint(&mut r, q, n);
        let s = uniform_qpoint(&mut r, q, n, 1.0);
        let frame = ProjectionFrame::axes(n, q).with_extra_directions(3);
        for a in 0..frame.p_total() {
            let dir = frame.direction(a);
            let lhs: f64 = xi_alpha(&frame, a, &p).unwrap().iter()
                .zip(xi_alpha(&frame, a, &s).unwrap())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let rhs = metric_g(
                &pushforward_projection(dir, &p).unwrap(),
                &pushforward_projection(dir, &s).unwrap(),
            ).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn separated_frames_meet_the_angle_bound(seed: u64, q in 1usize..5, n in 1usize..5) {
        let mut r = rng(seed);
        let p = clustered_qpoint(&mut r, q, n);
        let s = support(&p, p.default_dedup_tol());
        let f = angle_separated_frame(&s).unwrap();
        prop_assert!(f.achieved_min_angle >= f.target_theta0 - 1e-9);
        let sin_t = f.target_theta0.sin();
        for i in 0..s.count() {
            for j in i + 1..s.count() {
                let v: Vec<f64> = s.site(i).iter().zip(s.site(j)).map(|(a, b)| a - b).collect();
                let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for a in 0..n {
                    let c: f64 = f.frame.direction(a).iter().zip(&v).map(|(e, x)| e * x).sum();
                    prop_assert!(c.abs() / len >= sin_t - 1e-9);
                }
            }
        }
    }

    #[test]
    fn chains_satisfy_every_invariant(seed: u64, q in 1usize..6, n in 1usize..4) {
        let mut r = rng(seed);
        let p = clustered_qpoint(&mut r, q, n);
        let frame = angle_separated_frame(&support(&p, p.default_dedup_tol())).unwrap();
        let chain = nested_chain(&p, &frame).unwrap();
        if let Err(v) = chain.check_invariants(&p) {
            return Err(TestCaseError::fail(format!("{v:?}")));
        }
        let levels = &chain.levels;
        prop_assert!(levels.iter().map(|l| l.support.q()).all(|m| m == q));
        let inc = chain_inclusion_check(&chain, 50, seed);
        prop_assert!(inc.passed, "{:?}", inc.witness);
    }

    #[test]
    fn subtraction_preserves_distance_and_interpolation_is_linear(
        seed: u64, q in 1usize..6, n in 1usize..4, s in 0.0f64..=1.0
    ) {
        let mut r = rng(seed);
        let Some((ball, p)) = admissible_instance(&mut r, q, n) else { return Ok(()); };
        let center = ball.center.rebuild();
        let diff = subtract(&ball, &p).unwrap();
        let zero = QPoint::constant(q, &vec![0.0; n]).unwrap();
        let g = metric_g(&p, &center).unwrap();
        prop_assert!((metric_g(&diff, &zero).unwrap() - g).abs() <= 1e-10);

        let ps = interpolate(&ball, &p, s).unwrap();
        let (a, b, c) = (xi0_vec(&ball.frame, &p), xi0_vec(&ball.frame, &center), xi0_vec(&ball.frame, &ps));
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            prop_assert!((x + s * (y - x) - z).abs() <= 1e-10);
        }
        let e = embedded_distance(&xi0(&ball.frame, &p).unwrap(), &xi0(&ball.frame, &center).unwrap()).unwrap();
        prop_assert!((e - g).abs() <= 1e-10);
    }

    #[test]
    fn retraction_is_linear_in_xi0_inside_the_inner_balls(
        seed: u64, q in 1usize..5, n in 1usize..4, t in 0.0f64..=1.0, lam in 0.0f64..=1.0
    ) {
        let mut r = rng(seed);
        let Some((ball, p)) = admissible_instance(&mut r, q, n) else { return Ok(()); };
        let rv = RangeVariation {
            k: 0,
            rho: 1.0,
            eps: 0.1,
            sites: ball.center.clone(),
            sigma: ball.radius / 0.4,
        };
        let moved: Vec<Vec<f64>> = p.sheets()
            .map(|y| y.iter().zip(rv.gamma(y)).map(|(a, g)| a + t * lam * g).collect())
            .collect();
        let pt = QPoint::from_sheets(n, &moved).unwrap();
        let f0 = xi0_vec(&ball.frame, &p);
        let fq = xi0_vec(&ball.frame, &ball.center.rebuild());
        let ft = xi0_vec(&ball.frame, &pt);
        for ((a, b), c) in f0.iter().zip(&fq).zip(&ft) {
            prop_assert!((a + t * lam * (b - a) - c).abs() <= 1e-10);
        }
    }

    #[test]
    fn retraction_vanishes_outside_the_outer_balls_and_is_lipschitz(seed: u64, n in 1usize..4) {
        let mut r = rng(seed);
        let Some((ball, _)) = admissible_instance(&mut r, 3, n) else { return Ok(()); };
        // Outer balls of radius 0.6σ stay disjoint only while σ ≤ separation/4,
        // as in a chain; beyond that Γ jumps between neighbouring sites.
        let sigma = (ball.radius / 0.4).min(min_separation(&ball.center) / 4.0);
        let rv = RangeVariation { k: 0, rho: 1.0, eps: 0.1, sites: ball.center.clone(), sigma };
        let site = ball.center.site(0);
        let mut d = normal_vec(&mut r, n);
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let reach = rv.outer_radius() * r.gen_range(1.0..1.3);
        d.iter_mut().for_each(|x| *x *= reach / len);
        let y: Vec<f64> = site.iter().zip(&d).map(|(a, b)| a + b).collect();
        if ball.center.nearest_site(&y).1 >= rv.outer_radius() {
            prop_assert!(rv.gamma(&y).iter().all(|&g| g == 0.0));
        }
        prop_assert!(rv.sampled_lipschitz(200, seed) <= 5.0);
    }
}

fn smooth_field(seed: u64, q: usize, n: usize, cells: usize) -> GridField {
    let mut r = rng(seed);
    let coef: Vec<f64> = (0..q * n * 6).map(|_| r.gen_range(-1.0..1.0)).collect();
    GridField::from_fn(GridSpec::centered_square(0.5, cells), q, n, |x, y, out| {
        for (k, o) in out.iter_mut().enumerate() {
            let c = &coef[6 * k..6 * k + 6];
            *o = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * (x * x - y * y) + c[5] * (3.0 * x).sin();
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_nonnegative_and_additive(seed: u64, q in 1usize..4, n in 1usize..3) {
        let f = smooth_field(seed, q, n, 12);
        let frame = ProjectionFrame::axes(n, q);
        for e in [dirichlet_energy(&f, &frame).unwrap(), dirichlet_energy_matched(&f)] {
            prop_assert!(e.per_cell.iter().all(|&c| c >= 0.0));
            let sum: f64 = e.per_cell.iter().sum();
            prop_assert!((sum - e.total).abs() <= 1e-12 * e.total.max(1e-300));
        }
    }

    #[test]
    fn energy_is_frame_invariant_for_separated_sheets(seed: u64, angle in -0.3f64..0.3) {
        let mut f = smooth_field(seed, 2, 2, 12);
        let g = *f.grid();
        for idx in 0..g.node_count() {
            let s = f.node_sheets_mut(idx);
            s[2] += 10.0;
            s[3] += 7.0;
        }
        let a = dirichlet_energy(&f, &ProjectionFrame::axes(2, 2)).unwrap().total;
        let b = dirichlet_energy(&f, &ProjectionFrame::rotated_plane(2, angle)).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn minimize_never_increases_the_energy(seed: u64, q in 1usize..3, n in 1usize..3) {
        let mut f = smooth_field(seed, q, n, 10);
        let mut r = rng(seed ^ 0x5eed);
        f.perturb_interior(0.3, || r.gen_range(-1.0..1.0));
        let opts = MinimizeOptions { max_iters: 60, ..MinimizeOptions::default() };
        let m = minimize(&f, &opts).unwrap();
        for w in m.energy_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        for idx in 0..f.grid().node_count() {
            if f.is_fixed(idx) {
                prop_assert_eq!(f.node_sheets(idx), m.field.node_sheets(idx));
            }
        }
    }

    #[test]
    fn variations_leave_masked_nodes_alone(seed: u64, t in -0.05f64..0.05) {
        let f = smooth_field(seed, 2, 1, 16);
        let mut r = rng(seed);
        let v = DomainVariation {
            center: (r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1)),
            radius: r.gen_range(0.1..0.3),
            direction: (1.0, 0.5),
        };
        // Keep |t|·|∇b| well below 1 so the deformed domain does not fold.
        let moved = domain_varied(&f, &v, t * v.radius / 0.3).unwrap();
        let g = *f.grid();
        for idx in 0..g.node_count() {
            if f.is_fixed(idx) {
                prop_assert_eq!(f.node_sheets(idx), moved.node_sheets(idx));
            }
        }
        let c = f.at(8, 8);
        let s = support(&c, c.default_dedup_tol());
        let rv = RangeVariation { k: 0, rho: 10.0, eps: 0.1, sites: s, sigma: 1e6 };
        let d_star = vec![0.0; g.node_count()];
        let vel = range_velocity(&f, &d_star, &rv).unwrap();
        for idx in 0..g.node_count() {
            if f.is_fixed(idx) {
                prop_assert!(vel[idx * f.stride()..(idx + 1) * f.stride()].iter().all(|&x| x == 0.0));
            }
        }
    }
}
