//! Computable bounds and identities evaluated against trajectories and datasets.

mod direction;
mod divergence;
mod generalization;

pub use direction::{
    fenchel_identity_check, finite_step_margin_floor, direction_gap_bound, nonsep_rate_check, FenchelCheck,
    NonsepRateReport, NonsepRateRow, RATE_FLOOR,
};
pub use divergence::{chi2_divergence, Chi2Estimate, Chi2Method, DensityPair, DistSpec, Gaussian};
pub use generalization::{
    generalization_bound, optimal_gamma_sweep, pooled_sup_norm, weighted_rademacher_bound, write_bound_report,
    write_sweep_csv, GammaSweep, GenBoundReport, SWEEP_GRID_POINTS, SWEEP_HEADER,
};
