//! Seeded Monte Carlo laboratory for martingale-difference random fields.

pub mod checks;
pub mod engine;
pub mod ks;
pub mod model;

pub use checks::{
    clt_diagnostic, covariance_estimate, equicontinuity_check, estimate_moment_curves, md_check, osekowski_check,
    simulate_eta, tail_domination, LabOptions, Target, OSEKOWSKI_CONSTANT, ROSENTHAL_CONSTANT,
};
pub use model::{Kernel, MartingaleFieldModel, ModelKind};
