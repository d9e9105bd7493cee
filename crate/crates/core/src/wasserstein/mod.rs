//! Wasserstein distances: Gaussian closed forms, exact empirical transport,
//! and two-sided bounds on the distance of `X_t(x)` to the invariant law.

mod bounds;
mod empirical;
mod gaussian;

pub use bounds::{
    contracted_spread, ergodicity_bounds, ergodicity_bounds_with_samples, BoundBundle, WpRoute,
    BOUNDS_CSV_HEADER,
};
pub(crate) use bounds::{bounds_from_samples, check_order};
pub use empirical::{min_cost_assignment, wp_empirical, EmpiricalMeasure, MAX_EMPIRICAL_POINTS};
pub use gaussian::{
    bures_distance, commuting_diagnostic, w2_gaussian, w2_gaussian_trace, w2_normal_spectral,
    CommutingDiagnostic,
};
