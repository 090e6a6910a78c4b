//! Dirichlet-minimizing Q-valued maps: the space 𝐐_Q(ℝⁿ), its bi-Lipschitz
//! embeddings, admissible balls and nested chains, discrete Q-valued fields
//! and the analysis built on top of them.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

mod math;

pub mod admissible;
pub mod analysis;
pub mod assignment;
pub mod embedding;
pub mod error;
pub mod field;
pub mod qspace;
pub mod variations;

pub use admissible::{
    angle_separated_frame, chain_inclusion_check, delta_cascade, interpolate, is_admissible,
    modification_constants, nested_chain, subtract, theta0, AdmissibleBall, AngleSeparatedFrame,
    NestedBallChain,
};
pub use analysis::{
    conformality_defect, continuity_certificate, d_star, delta_constant, harmonic_companion,
    holomorphy_residual, hopf_differential, key_lemma_check, monotonicity_report, psi_k,
    xi0_invariance_gap, HarmonicCompanion, HopfField, MonotonicityContext, MonotonicityReport,
};
pub use embedding::{embedded_distance, xi0, xi_alpha, xi_full, EmbeddedPoint, ProjectionFrame};
pub use error::{Error, Result};
pub use field::{
    courant_lebesgue_slice, dirichlet_energy, dirichlet_energy_matched, interpolate_qpoint,
    minimize, sqrt_field, EnergyBreakdown, GridField, GridSpec, MinimizeOptions, Minimized,
};
pub use variations::{
    build_admissible_variation, domain_variation_derivative, range_variation_derivative,
    stationarity_residual, DomainVariation, RangeVariation, StationarityReport,
};
pub use qspace::{
    metric_g, min_separation, optimal_matching, pushforward_projection, support, Matching, QPoint,
    SupportDecomposition,
};
