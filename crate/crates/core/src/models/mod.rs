//! Model self-shrinkers, their charts and pointwise geometry.

pub(crate) mod chart;
mod checks;
mod geometry;

pub use chart::{CustomChart, DerivativeMode, Factor, ModelKind, PositionFn, ShrinkerModel};
pub use checks::{
    check_minimal_in_sphere, check_parallel_principal_normal, shrinker_residual, ParallelNormalReport,
    ShrinkerResidual, PARALLEL_TOLERANCE,
};
pub use geometry::{evaluate_geometry, GeometryData, DEGENERACY_THRESHOLD, VANISHING_H};
