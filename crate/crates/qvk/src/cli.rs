//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qvk", version, about = "Q-valued maps: metric, embeddings, chains, minimizers and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run single-threaded. Reports do not depend on the thread count, so
    /// this only matters for reproducing timings.
    #[arg(long)]
    pub deterministic: bool,
}

/// Where a field comes from: a GridField JSON file, or the two-valued
/// square root `±√z` sampled on a grid centred at the origin.
#[derive(Debug, Clone, Args)]
pub struct FieldSource {
    /// GridField JSON file.
    #[arg(long, conflicts_with = "grid")]
    pub input: Option<PathBuf>,
    /// `nx,ny,h` for the built-in square-root field.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize, f64)>,
    /// `n,Q` expected of the field.
    #[arg(long = "nQ", value_parser = parse_pair_usize)]
    pub n_q: Option<(usize, usize)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance 𝒢 between two QPoints and an optimal matching.
    Metric {
        /// The two QPoint JSON files.
        #[arg(long, num_args = 2, required = true)]
        input: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// ξ₀ and the extended embedding ξ of a QPoint.
    Embed {
        #[arg(long)]
        input: PathBuf,
        /// Frame JSON; defaults to the coordinate axes.
        #[arg(long)]
        frame: Option<PathBuf>,
        /// Extra directions appended for ξ.
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Nested admissible ball chain of a QPoint with its invariant checks.
    Chain {
        #[arg(long)]
        input: PathBuf,
        /// Random members per level for the inclusion check.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Coincidence tolerance for the support; defaults to 1e-9·(1 + diameter).
        #[arg(long)]
        tol_dedup: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Descends the Dirichlet energy with the boundary nodes held fixed.
    Minimize {
        #[command(flatten)]
        source: FieldSource,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        /// Relative energy decrease below which iteration stops.
        #[arg(long, default_value_t = 1e-13)]
        tol_energy: f64,
        /// Largest coordinate update below which iteration stops.
        #[arg(long, default_value_t = 1e-12)]
        tol_update: f64,
        #[arg(long, default_value_t = 20)]
        inner_sweeps: usize,
        #[arg(long, default_value_t = 0.8)]
        damping: f64,
        /// CSV of energy against iteration.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Energies, Hopf differential and harmonic companion of a field.
    Analyze {
        #[command(flatten)]
        source: FieldSource,
        /// CSV of φ and h per interior node.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Ψₖ(ρ)/ρ² ladders at one or more base points.
    Monotonicity {
        #[command(flatten)]
        source: FieldSource,
        /// Base node `i,j`; repeatable. Defaults to the grid centre.
        #[arg(long, value_parser = parse_pair_usize)]
        base: Vec<(usize, usize)>,
        /// Disc radius r; defaults to the largest disc inside the interior grid.
        #[arg(long)]
        radius: Option<f64>,
        /// Ladder fractions in (0, 1), comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.15,0.25,0.35,0.45,0.55,0.65,0.75,0.85,0.95")]
        ladder: Vec<f64>,
        /// Allowed relative drop of Ψ/ρ² between rungs.
        #[arg(long, default_value_t = 0.05)]
        tol_monotone: f64,
        /// Ramp width of the cutoff; defaults to min{σ₀, τ*, r}/20.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 8)]
        subsamples: usize,
        /// CSV with columns base_i, base_j, k, rho, psi, ratio.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// First variations under random domain and range deformations.
    Variations {
        #[command(flatten)]
        source: FieldSource,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        /// Residual bound relative to the energy.
        #[arg(long, default_value_t = 1e-3)]
        tol_stationary: f64,
        /// CSV of every trial.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Continuity modulus and Key-Lemma bound on discs about a base node.
    Certificate {
        #[command(flatten)]
        source: FieldSource,
        /// Base node `i,j`; defaults to the grid centre.
        #[arg(long, value_parser = parse_pair_usize)]
        base: Option<(usize, usize)>,
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1")]
        radii: Vec<f64>,
        /// CSV of modulus against R.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [nx, ny, h] = parts[..] else {
        return Err("expected nx,ny,h".into());
    };
    let nx = nx.parse().map_err(|e| format!("nx: {e}"))?;
    let ny = ny.parse().map_err(|e| format!("ny: {e}"))?;
    let h: f64 = h.parse().map_err(|e| format!("h: {e}"))?;
    if !(h > 0.0 && h.is_finite()) {
        return Err("h must be positive".into());
    }
    Ok((nx, ny, h))
}

fn parse_pair_usize(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated integers")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_pairs_parse() {
        assert_eq!(parse_grid("33, 17,0.25"), Ok((33, 17, 0.25)));
        assert!(parse_grid("33,17").is_err());
        assert!(parse_grid("3,3,-1").is_err());
        assert_eq!(parse_pair_usize("2,3"), Ok((2, 3)));
        assert!(parse_pair_usize("2").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
