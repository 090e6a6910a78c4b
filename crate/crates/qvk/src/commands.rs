//! One function per subcommand. Each reads its inputs, runs the library and
//! writes a JSON report (plus an optional CSV).

use std::path::{Path, PathBuf};

use serde::Serialize;

use qvk_core::admissible::nested_chain_with_tol;
use qvk_core::analysis::{measured_oscillation, MonotonicityOptions};
use qvk_core::{
    angle_separated_frame, chain_inclusion_check, conformality_defect, continuity_certificate,
    dirichlet_energy, dirichlet_energy_matched, harmonic_companion, holomorphy_residual,
    hopf_differential, key_lemma_check, minimize, monotonicity_report, optimal_matching,
    sqrt_field, stationarity_residual, support, xi0, xi0_invariance_gap, xi_full, GridField,
    GridSpec, HarmonicCompanion, MinimizeOptions, MonotonicityContext, ProjectionFrame,
};

use crate::cli::{Command, Common, FieldSource};
use crate::dto::{
    chain_levels, read_json, ChainLevelJson, Constants, FrameJson, GridFieldJson, InclusionJson,
    QPointJson, SupportJson, ViolationJson,
};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json, Cell};

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Metric { input, common } => metric(&input, &common),
        Command::Embed {
            input,
            frame,
            extra,
            common,
        } => embed(&input, frame.as_deref(), extra, &common),
        Command::Chain {
            input,
            samples,
            tol_dedup,
            common,
        } => chain(&input, samples, tol_dedup, &common),
        Command::Minimize {
            source,
            max_iters,
            tol_energy,
            tol_update,
            inner_sweeps,
            damping,
            csv,
            common,
        } => {
            let opts = MinimizeOptions {
                max_iters,
                tol_rel_energy: tol_energy,
                tol_update,
                inner_sweeps,
                damping,
                seed: common.seed,
            };
            run_minimize(&source, &opts, csv.as_deref(), &common)
        }
        Command::Analyze { source, csv, common } => analyze(&source, csv.as_deref(), &common),
        Command::Monotonicity {
            source,
            base,
            radius,
            ladder,
            tol_monotone,
            eps,
            subsamples,
            csv,
            common,
        } => {
            let args = MonotonicityArgs {
                base,
                radius,
                ladder,
                tolerance: tol_monotone,
                opts: MonotonicityOptions { eps, subsamples },
            };
            monotonicity(&source, &args, csv.as_deref(), &common)
        }
        Command::Variations {
            source,
            trials,
            tol_stationary,
            csv,
            common,
        } => variations(&source, trials, tol_stationary, csv.as_deref(), &common),
        Command::Certificate {
            source,
            base,
            radii,
            csv,
            common,
        } => certificate(&source, base, &radii, csv.as_deref(), &common),
    }
}

/// Worker count: 1 under `--deterministic`, else `QVK_THREADS` if set, else
/// the available parallelism.
pub fn thread_count(common: &Common) -> CliResult<usize> {
    let cap = match std::env::var("QVK_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(CliError::Parse(format!("QVK_THREADS must be a positive integer, got {s:?}"))),
        },
        Err(std::env::VarError::NotPresent) => None,
        Err(e) => return Err(CliError::Parse(format!("QVK_THREADS: {e}"))),
    };
    if common.deterministic {
        return Ok(1);
    }
    Ok(cap.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Maps `f` over `items` on up to `threads` scoped threads, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    let mut out: Vec<Option<R>> = items.iter().map(|_| None).collect();
    std::thread::scope(|s| {
        for (slots, xs) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            s.spawn(move || {
                for (slot, x) in slots.iter_mut().zip(xs) {
                    *slot = Some(f(x));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("every slot is filled")).collect()
}

fn load_field(src: &FieldSource) -> CliResult<GridField> {
    let f = match (&src.input, src.grid) {
        (Some(path), _) => read_json::<GridFieldJson>(path)?.to_core()?,
        (None, Some((nx, ny, h))) => {
            if let Some((n, q)) = src.n_q {
                if (n, q) != (2, 2) {
                    return Err(CliError::Parse("the built-in square-root field has n = 2, Q = 2".into()));
                }
            }
            let grid = GridSpec::new(
                nx,
                ny,
                -(nx.saturating_sub(1) as f64) * h / 2.0,
                -(ny.saturating_sub(1) as f64) * h / 2.0,
                h,
            )?;
            sqrt_field(grid)?
        }
        (None, None) => return Err(CliError::Parse("either --input or --grid is required".into())),
    };
    if let Some((n, q)) = src.n_q {
        if (f.n(), f.q()) != (n, q) {
            return Err(CliError::Parse(format!(
                "field has n = {}, Q = {}; --nQ asked for n = {n}, Q = {q}",
                f.n(),
                f.q()
            )));
        }
    }
    Ok(f)
}

fn companion(f: &GridField) -> CliResult<(ProjectionFrame, HarmonicCompanion)> {
    let frame = ProjectionFrame::axes(f.n(), f.q());
    let phi = hopf_differential(f, &frame)?;
    Ok((frame, harmonic_companion(&phi)))
}

fn check_base(f: &GridField, base: (usize, usize)) -> CliResult<()> {
    let g = f.grid();
    if base.0 == 0 || base.1 == 0 || base.0 + 1 >= g.nx || base.1 + 1 >= g.ny {
        return Err(CliError::Parse(format!(
            "base node ({}, {}) is not an interior node of the {}×{} grid",
            base.0, base.1, g.nx, g.ny
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricReport {
    distance: f64,
    matching: Vec<usize>,
    first: QPointJson,
    second: QPointJson,
    constants: Constants,
}

fn metric(input: &[PathBuf], common: &Common) -> CliResult<()> {
    let a = read_json::<QPointJson>(&input[0])?.to_core()?;
    let b = read_json::<QPointJson>(&input[1])?.to_core()?;
    let m = optimal_matching(&a, &b)?;
    let report = MetricReport {
        distance: m.distance,
        matching: m.perm,
        first: QPointJson::from_core(&a),
        second: QPointJson::from_core(&b),
        constants: Constants::for_shape(a.n(), a.q()),
    };
    write_json(&report, common.output.as_deref())
}

#[derive(Serialize)]
struct EmbedReport {
    point: QPointJson,
    frame: FrameJson,
    /// One block of Q sorted values per direction of the base frame.
    xi0: Vec<Vec<f64>>,
    /// Blocks over every direction of `frame`.
    xi: Vec<Vec<f64>>,
    constants: Constants,
}

fn embed(input: &Path, frame: Option<&Path>, extra: usize, common: &Common) -> CliResult<()> {
    let p = read_json::<QPointJson>(input)?.to_core()?;
    let base = match frame {
        Some(path) => read_json::<FrameJson>(path)?.to_core()?,
        None => ProjectionFrame::axes(p.n(), p.q()),
    };
    let full = if extra > 0 { base.with_extra_directions(extra) } else { base.clone() };
    let e0 = xi0(&base, &p)?;
    let e = xi_full(&full, &p)?;
    let blocks = |e: &qvk_core::EmbeddedPoint| (0..e.block_count()).map(|a| e.block(a).to_vec()).collect();
    let report = EmbedReport {
        point: QPointJson::from_core(&p),
        frame: FrameJson::from_core(&full),
        xi0: blocks(&e0),
        xi: blocks(&e),
        constants: Constants::for_shape(p.n(), p.q()),
    };
    write_json(&report, common.output.as_deref())
}

#[derive(Serialize)]
struct ChainFrameJson {
    directions: Vec<Vec<f64>>,
    achieved_min_angle: f64,
    target_theta0: f64,
    construction: String,
}

#[derive(Serialize)]
struct ChainReport {
    point: QPointJson,
    support: SupportJson,
    frame: ChainFrameJson,
    depth: usize,
    levels: Vec<ChainLevelJson>,
    invariants_passed: bool,
    violation: Option<ViolationJson>,
    inclusion: InclusionJson,
    constants: Constants,
}

fn chain(input: &Path, samples: usize, tol_dedup: Option<f64>, common: &Common) -> CliResult<()> {
    let p = read_json::<QPointJson>(input)?.to_core()?;
    let tol = tol_dedup.unwrap_or_else(|| p.default_dedup_tol());
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(CliError::Parse("--tol-dedup must be finite and nonnegative".into()));
    }
    let s = support(&p, tol);
    let frame = angle_separated_frame(&s)?;
    let chain = nested_chain_with_tol(&p, &frame, tol)?;
    let violation = chain.check_invariants(&p).err();
    let inclusion = chain_inclusion_check(&chain, samples, common.seed);
    let report = ChainReport {
        point: QPointJson::from_core(&p),
        support: SupportJson::from_core(&s),
        frame: ChainFrameJson {
            directions: FrameJson::from_core(&frame.frame).directions,
            achieved_min_angle: frame.achieved_min_angle,
            target_theta0: frame.target_theta0,
            construction: format!("{:?}", frame.construction),
        },
        depth: chain.depth(),
        levels: chain_levels(&chain),
        invariants_passed: violation.is_none(),
        violation: violation.as_ref().map(ViolationJson::from_core),
        inclusion: InclusionJson::from_core(&inclusion),
        constants: Constants::for_shape(p.n(), p.q()),
    };
    write_json(&report, common.output.as_deref())?;
    if let Some(v) = violation {
        return Err(CliError::ChainInvariant(format!(
            "{:?} at level {}: {} against {}",
            v.invariant, v.level, v.lhs, v.rhs
        )));
    }
    if let Some(w) = &inclusion.witness {
        return Err(CliError::ChainInvariant(format!(
            "inclusion at level {}: distance {} exceeds {}",
            w.level, w.distance, w.bound
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MinimizeReport {
    iterations: usize,
    converged: bool,
    initial_energy: f64,
    final_energy: f64,
    field: GridFieldJson,
    constants: Constants,
}

fn run_minimize(src: &FieldSource, opts: &MinimizeOptions, csv: Option<&Path>, common: &Common) -> CliResult<()> {
    let f = load_field(src)?;
    let m = minimize(&f, opts)?;
    let initial = dirichlet_energy_matched(&f).total;
    let report = MinimizeReport {
        iterations: m.iterations,
        converged: m.converged,
        initial_energy: initial,
        final_energy: dirichlet_energy_matched(&m.field).total,
        field: GridFieldJson::from_core(&m.field),
        constants: Constants::for_shape(f.n(), f.q()),
    };
    if let Some(path) = csv {
        let rows = m
            .energy_history
            .iter()
            .enumerate()
            .map(|(i, &e)| vec![Cell::from(i), Cell::from(e)]);
        write_csv(path, &["iteration", "energy"], rows)?;
    }
    write_json(&report, common.output.as_deref())
}

#[derive(Serialize)]
struct AnalyzeReport {
    nx: usize,
    ny: usize,
    h: f64,
    sorted_energy: f64,
    matched_energy: f64,
    hopf_sup: f64,
    holomorphy_residual: f64,
    companion_path_residual: f64,
    conformality_defect: f64,
    /// Spread of the sorted energy density between the axes and a rotated
    /// frame; only for planar targets.
    invariance_gap: Option<InvarianceJson>,
    constants: Constants,
}

#[derive(Serialize)]
struct InvarianceJson {
    mean: f64,
    stddev: f64,
    bound: f64,
}

fn analyze(src: &FieldSource, csv: Option<&Path>, common: &Common) -> CliResult<()> {
    let f = load_field(src)?;
    let frame = ProjectionFrame::axes(f.n(), f.q());
    let phi = hopf_differential(&f, &frame)?;
    let comp = harmonic_companion(&phi);
    let invariance_gap = if f.n() == 2 {
        let gap = xi0_invariance_gap(&f, &frame, &ProjectionFrame::rotated_plane(f.q(), 0.3))?;
        Some(InvarianceJson {
            mean: gap.mean,
            stddev: gap.stddev,
            bound: gap.bound,
        })
    } else {
        None
    };
    let g = f.grid();
    let report = AnalyzeReport {
        nx: g.nx,
        ny: g.ny,
        h: g.h,
        sorted_energy: dirichlet_energy(&f, &frame)?.total,
        matched_energy: dirichlet_energy_matched(&f).total,
        hopf_sup: phi.sup_norm(),
        holomorphy_residual: holomorphy_residual(&phi),
        companion_path_residual: comp.path_residual,
        conformality_defect: conformality_defect(&f, &frame, &comp)?,
        invariance_gap,
        constants: Constants::for_shape(f.n(), f.q()),
    };
    if let Some(path) = csv {
        let ig = phi.grid;
        let rows = (0..ig.ny).flat_map(|j| (0..ig.nx).map(move |i| (i, j))).map(|(i, j)| {
            let (x, y) = ig.position(i, j);
            let p = phi.at(i, j);
            let hv = comp.at(i, j);
            vec![
                Cell::from(i + 1),
                Cell::from(j + 1),
                Cell::from(x),
                Cell::from(y),
                Cell::from(p.re),
                Cell::from(p.im),
                Cell::from(hv.re),
                Cell::from(hv.im),
            ]
        });
        write_csv(path, &["i", "j", "x", "y", "phi_re", "phi_im", "h_re", "h_im"], rows)?;
    }
    write_json(&report, common.output.as_deref())
}

struct MonotonicityArgs {
    base: Vec<(usize, usize)>,
    radius: Option<f64>,
    ladder: Vec<f64>,
    tolerance: f64,
    opts: MonotonicityOptions,
}

#[derive(Serialize)]
struct RowJson {
    rho: f64,
    psi: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct RatioViolationJson {
    s: f64,
    t: f64,
    ratio_s: f64,
    ratio_t: f64,
}

#[derive(Serialize)]
struct LadderJson {
    k: usize,
    range: (f64, f64),
    floor: f64,
    resolved: bool,
    worst_ratio: f64,
    rows: Vec<RowJson>,
    violations: Vec<RatioViolationJson>,
}

#[derive(Serialize)]
struct BaseReport {
    w_star: (usize, usize),
    r: f64,
    tau_star: f64,
    k0: usize,
    eps: f64,
    passed: bool,
    unresolved: usize,
    worst_ratio: f64,
    chain_rho: Vec<f64>,
    chain_sigma: Vec<f64>,
    levels: Vec<LadderJson>,
}

#[derive(Serialize)]
struct MonotonicityJson {
    tolerance: f64,
    passed: bool,
    unresolved_levels: usize,
    worst_ratio: f64,
    bases: Vec<BaseReport>,
    constants: Constants,
}

/// Largest radius about `w` that keeps the disc inside the interior grid,
/// less half a cell.
fn default_radius(comp: &HarmonicCompanion, x: f64, y: f64) -> f64 {
    let g = &comp.grid;
    let room = (x - g.x0).min(g.x_max() - x).min(y - g.y0).min(g.y_max() - y);
    room - 0.5 * g.h
}

fn monotonicity(src: &FieldSource, args: &MonotonicityArgs, csv: Option<&Path>, common: &Common) -> CliResult<()> {
    let threads = thread_count(common)?;
    if args.ladder.is_empty() || args.ladder.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(CliError::Parse("--ladder fractions must lie in (0, 1)".into()));
    }
    if !(args.tolerance >= 0.0) {
        return Err(CliError::Parse("--tol-monotone must be nonnegative".into()));
    }
    let f = load_field(src)?;
    let (_, comp) = companion(&f)?;
    let bases = if args.base.is_empty() { vec![f.grid().center_node()] } else { args.base.clone() };
    for &b in &bases {
        check_base(&f, b)?;
    }
    let reports = par_map(&bases, threads, |&b| -> CliResult<BaseReport> {
        let (x, y) = f.grid().position(b.0, b.1);
        let r = args.radius.unwrap_or_else(|| default_radius(&comp, x, y));
        if !(r > 0.0) {
            return Err(CliError::Parse(format!("base ({}, {}) leaves no room for a disc", b.0, b.1)));
        }
        let ctx = MonotonicityContext::new(&f, &comp, b, r, &args.opts)?;
        let rep = monotonicity_report(&ctx, &args.ladder, args.tolerance)?;
        Ok(BaseReport {
            w_star: rep.w_star,
            r: rep.r,
            tau_star: rep.tau_star,
            k0: rep.k0,
            eps: rep.eps,
            passed: rep.passed(),
            unresolved: rep.unresolved(),
            worst_ratio: rep.worst_ratio(),
            chain_rho: rep.chain_rhos.clone(),
            chain_sigma: rep.chain_sigmas.clone(),
            levels: rep
                .levels
                .iter()
                .map(|l| LadderJson {
                    k: l.k,
                    range: l.range,
                    floor: l.floor,
                    resolved: l.resolved,
                    worst_ratio: l.worst_ratio,
                    rows: l
                        .rows
                        .iter()
                        .map(|row| RowJson {
                            rho: row.rho,
                            psi: row.psi,
                            ratio: row.ratio,
                        })
                        .collect(),
                    violations: l
                        .violations
                        .iter()
                        .map(|v| RatioViolationJson {
                            s: v.s,
                            t: v.t,
                            ratio_s: v.ratio_s,
                            ratio_t: v.ratio_t,
                        })
                        .collect(),
                })
                .collect(),
        })
    });
    let bases: Vec<BaseReport> = reports.into_iter().collect::<CliResult<_>>()?;
    let report = MonotonicityJson {
        tolerance: args.tolerance,
        passed: bases.iter().all(|b| b.passed),
        unresolved_levels: bases.iter().map(|b| b.unresolved).sum(),
        worst_ratio: bases.iter().map(|b| b.worst_ratio).fold(f64::INFINITY, f64::min),
        bases,
        constants: Constants::for_shape(f.n(), f.q()),
    };
    if let Some(path) = csv {
        let rows = report.bases.iter().flat_map(|b| {
            b.levels.iter().flat_map(move |l| {
                l.rows.iter().map(move |row| {
                    vec![
                        Cell::from(b.w_star.0),
                        Cell::from(b.w_star.1),
                        Cell::from(l.k),
                        Cell::from(row.rho),
                        Cell::from(row.psi),
                        Cell::from(row.ratio),
                    ]
                })
            })
        });
        write_csv(path, &["base_i", "base_j", "k", "rho", "psi", "ratio"], rows)?;
    }
    write_json(&report, common.output.as_deref())
}

#[derive(Serialize)]
struct DomainTrialJson {
    center: (f64, f64),
    radius: f64,
    direction: (f64, f64),
    derivative: f64,
}

#[derive(Serialize)]
struct RangeTrialJson {
    w_star: (usize, usize),
    k: usize,
    rho: f64,
    derivative: f64,
    lipschitz: f64,
}

#[derive(Serialize)]
struct VariationsReport {
    energy: f64,
    domain_max: f64,
    range_max: f64,
    max_relative: f64,
    tolerance: f64,
    stationary: bool,
    domain: Vec<DomainTrialJson>,
    range: Vec<RangeTrialJson>,
    constants: Constants,
}

fn variations(src: &FieldSource, trials: usize, tol: f64, csv: Option<&Path>, common: &Common) -> CliResult<()> {
    let f = load_field(src)?;
    let frame = ProjectionFrame::axes(f.n(), f.q());
    let rep = stationarity_residual(&f, &frame, trials, common.seed)?;
    let report = VariationsReport {
        energy: rep.energy_scale,
        domain_max: rep.domain_max,
        range_max: rep.range_max,
        max_relative: rep.max_relative(),
        tolerance: tol,
        stationary: rep.max_relative() <= tol,
        domain: rep
            .domain
            .iter()
            .map(|d| DomainTrialJson {
                center: d.variation.center,
                radius: d.variation.radius,
                direction: d.variation.direction,
                derivative: d.derivative,
            })
            .collect(),
        range: rep
            .range
            .iter()
            .map(|t| RangeTrialJson {
                w_star: t.w_star,
                k: t.k,
                rho: t.rho,
                derivative: t.derivative,
                lipschitz: t.lipschitz,
            })
            .collect(),
        constants: Constants::for_shape(f.n(), f.q()),
    };
    if let Some(path) = csv {
        let domain = report.domain.iter().map(|d| {
            vec![
                Cell::from("domain"),
                Cell::from(d.center.0),
                Cell::from(d.center.1),
                Cell::from(d.radius),
                Cell::Empty,
                Cell::Empty,
                Cell::from(d.derivative),
                Cell::Empty,
            ]
        });
        let g = f.grid();
        let range = report.range.iter().map(|t| {
            let (x, y) = g.position(t.w_star.0, t.w_star.1);
            vec![
                Cell::from("range"),
                Cell::from(x),
                Cell::from(y),
                Cell::Empty,
                Cell::from(t.k),
                Cell::from(t.rho),
                Cell::from(t.derivative),
                Cell::from(t.lipschitz),
            ]
        });
        write_csv(
            path,
            &["kind", "center_x", "center_y", "radius", "k", "rho", "derivative", "lipschitz"],
            domain.chain(range),
        )?;
    }
    write_json(&report, common.output.as_deref())
}

#[derive(Serialize)]
struct CertificateRow {
    radius: f64,
    modulus: f64,
    alpha1: f64,
    alpha2: f64,
    beta: f64,
    dir_f: f64,
    dir_h: f64,
    c_r0: f64,
    slice_radius: f64,
    slice_oscillation: f64,
    slice_bound: f64,
    /// Largest distance between node values in the half-radius disc.
    measured_oscillation: f64,
    bounds_oscillation: bool,
    key_lemma_lhs: f64,
    key_lemma_rhs: f64,
    key_lemma_pass: bool,
}

#[derive(Serialize)]
struct CertificateReport {
    base: (usize, usize),
    rows: Vec<CertificateRow>,
    constants: Constants,
}

fn certificate(
    src: &FieldSource,
    base: Option<(usize, usize)>,
    radii: &[f64],
    csv: Option<&Path>,
    common: &Common,
) -> CliResult<()> {
    let threads = thread_count(common)?;
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(CliError::Parse("--radii must be positive".into()));
    }
    let f = load_field(src)?;
    let (frame, comp) = companion(&f)?;
    let base = base.unwrap_or_else(|| f.grid().center_node());
    check_base(&f, base)?;
    let (x, y) = f.grid().position(base.0, base.1);
    let rows = par_map(radii, threads, |&radius| -> CliResult<CertificateRow> {
        let c = continuity_certificate(&f, &frame, base, radius)?;
        let key = key_lemma_check(&f, &frame, &comp, base, radius, 0.0)?;
        let osc = measured_oscillation(&f, x, y, radius / 2.0);
        Ok(CertificateRow {
            radius,
            modulus: c.modulus,
            alpha1: c.alpha1,
            alpha2: c.alpha2,
            beta: c.beta,
            dir_f: c.dir_f,
            dir_h: c.dir_h,
            c_r0: c.c_r0,
            slice_radius: c.slice.radius,
            slice_oscillation: c.slice.oscillation,
            slice_bound: c.slice.bound,
            measured_oscillation: osc,
            bounds_oscillation: osc <= c.modulus,
            key_lemma_lhs: key.lhs,
            key_lemma_rhs: key.rhs,
            key_lemma_pass: key.pass,
        })
    });
    let report = CertificateReport {
        base,
        rows: rows.into_iter().collect::<CliResult<_>>()?,
        constants: Constants::for_shape(f.n(), f.q()),
    };
    if let Some(path) = csv {
        let rows = report.rows.iter().map(|r| {
            vec![
                Cell::from(r.radius),
                Cell::from(r.modulus),
                Cell::from(r.measured_oscillation),
                Cell::from(r.key_lemma_lhs),
                Cell::from(r.key_lemma_rhs),
            ]
        });
        write_csv(path, &["radius", "modulus", "measured_oscillation", "key_lemma_lhs", "key_lemma_rhs"], rows)?;
    }
    write_json(&report, common.output.as_deref())
}
