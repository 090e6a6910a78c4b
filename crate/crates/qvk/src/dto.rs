//! JSON encodings of the library types.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qvk_core::admissible::{ChainViolation, InclusionCheck, NestedBallChain};
use qvk_core::analysis::report_constants;
use qvk_core::{GridField, GridSpec, ProjectionFrame, QPoint, SupportDecomposition};

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: malformed JSON: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QPointJson {
    #[serde(rename = "Q")]
    pub q: usize,
    pub n: usize,
    pub points: Vec<Vec<f64>>,
}

impl QPointJson {
    pub fn from_core(p: &QPoint) -> Self {
        Self {
            q: p.q(),
            n: p.n(),
            points: p.sheets().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_core(&self) -> CliResult<QPoint> {
        if self.points.len() != self.q || self.points.iter().any(|s| s.len() != self.n) {
            return Err(CliError::Parse(format!(
                "expected {} points of dimension {}",
                self.q, self.n
            )));
        }
        Ok(QPoint::new(self.q, self.n, self.points.concat())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameJson {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub directions: Vec<Vec<f64>>,
}

impl FrameJson {
    pub fn from_core(f: &ProjectionFrame) -> Self {
        Self {
            n: f.n(),
            q: f.q(),
            directions: (0..f.p_total()).map(|a| f.direction(a).to_vec()).collect(),
        }
    }

    pub fn to_core(&self) -> CliResult<ProjectionFrame> {
        if self.directions.iter().any(|d| d.len() != self.n) {
            return Err(CliError::Parse(format!("every direction must have dimension {}", self.n)));
        }
        Ok(ProjectionFrame::new(self.n, self.q, self.directions.concat())?)
    }
}

/// Node values are flattened as `((j·nx + i)·Q + sheet)·n + coordinate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFieldJson {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    #[serde(rename = "Q")]
    pub q: usize,
    pub n: usize,
    pub values: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

impl GridFieldJson {
    pub fn from_core(f: &GridField) -> Self {
        let g = f.grid();
        Self {
            nx: g.nx,
            ny: g.ny,
            x0: g.x0,
            y0: g.y0,
            h: g.h,
            q: f.q(),
            n: f.n(),
            values: f.values().to_vec(),
            boundary_mask: f.boundary_mask().to_vec(),
        }
    }

    pub fn to_core(&self) -> CliResult<GridField> {
        let grid = GridSpec::new(self.nx, self.ny, self.x0, self.y0, self.h)?;
        Ok(GridField::new(
            grid,
            self.q,
            self.n,
            self.values.clone(),
            self.boundary_mask.clone(),
        )?)
    }
}

/// The constants block carried by every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub theta0: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub delta: f64,
}

impl Constants {
    pub fn for_shape(n: usize, q: usize) -> Self {
        let c = report_constants(n, q);
        Self {
            theta0: c.theta0,
            k: c.k,
            c0: c.c0,
            delta: c.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportJson {
    pub sites: Vec<Vec<f64>>,
    pub multiplicities: Vec<usize>,
}

impl SupportJson {
    pub fn from_core(s: &SupportDecomposition) -> Self {
        Self {
            sites: s.sites().map(<[f64]>::to_vec).collect(),
            multiplicities: s.multiplicities().to_vec(),
        }
    }
}

/// `sigma` is `null` for `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLevelJson {
    pub k: usize,
    #[serde(flatten)]
    pub support: SupportJson,
    pub rho: f64,
    pub sigma: f64,
    pub kappa0: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationJson {
    pub invariant: String,
    pub level: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl ViolationJson {
    pub fn from_core(v: &ChainViolation) -> Self {
        Self {
            invariant: format!("{:?}", v.invariant),
            level: v.level,
            lhs: v.lhs,
            rhs: v.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionJson {
    pub passed: bool,
    pub samples_per_level: usize,
    pub witness_level: Option<usize>,
    pub witness_member: Option<QPointJson>,
    pub witness_distance: Option<f64>,
    pub witness_bound: Option<f64>,
}

impl InclusionJson {
    pub fn from_core(c: &InclusionCheck) -> Self {
        let w = c.witness.as_ref();
        Self {
            passed: c.passed,
            samples_per_level: c.samples_per_level,
            witness_level: w.map(|w| w.level),
            witness_member: w.map(|w| QPointJson::from_core(&w.member)),
            witness_distance: w.map(|w| w.distance),
            witness_bound: w.map(|w| w.bound),
        }
    }
}

pub fn chain_levels(chain: &NestedBallChain) -> Vec<ChainLevelJson> {
    chain
        .levels
        .iter()
        .enumerate()
        .map(|(k, l)| ChainLevelJson {
            k,
            support: SupportJson::from_core(&l.support),
            rho: l.rho,
            sigma: l.sigma,
            kappa0: l.kappa0,
        })
        .collect()
}
