//! Numerical laboratory for the Gaussian-weighted F-functional on model
//! self-shrinkers of mean curvature flow: weighted quadrature, first and
//! second variations, stability spectra and F-stability verdicts.

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod fields;
pub mod functional;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod nelder_mead;
pub mod par;
pub mod variation;
pub mod verdict;
pub mod quadrature;
pub mod report;
pub mod spectrum;

pub use error::{Error, Result};
