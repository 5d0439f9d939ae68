//! Quadrature rules, weighted grids and Gaussian-weighted integration.

mod grid;
mod identities;
mod integrate;
pub mod rules;

pub use grid::{
    build_grid, build_grid_with_kernel, default_grid, LineKernel, Resolution, WeightedGrid, DEFAULT_CIRCLE_RES, DEFAULT_LINE_RES, DEFAULT_SPHERE_RES,
    DEFAULT_TRUNCATION, MIN_RESOLUTION, MIN_TRUNCATION,
};
pub use identities::{verify_weighted_identities, IdentityReport, IDENTITY_TOLERANCE};
pub use integrate::{integrate, integrate_with, weighted_inner, weighted_inner_fields, weighted_norm_fields};
