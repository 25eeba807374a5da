//! Max-margin certificates, the separable/non-separable split, and restricted optima.

mod min_norm;
mod report;
mod restricted;
mod separability;
pub mod simplex;

pub use min_norm::{max_margin_linear, MarginCertificate, GAP_TOL, MAX_ITERATIONS, NONSEPARABLE_NORM};
pub use report::{write_certificate, write_split};
pub use restricted::{
    nonsep_optimum, nonsep_optimum_from, project_span, span_basis, uniqueness_probe, RestrictedOptimum, RANK_TOL,
    RESIDUAL_TOL,
};
pub use separability::{
    maximal_separable_subset, sample_lp, SeparabilitySplit, NEAR_THRESHOLD_HIGH, NEAR_THRESHOLD_LOW, SEPARABLE_LP_TOL,
};
