//! Numerics for uniform central limit theorems of martingale-difference
//! random fields: Grand Lebesgue space calculus, metric entropy and covering
//! integrals, martingale tail operators, and a seeded Monte Carlo laboratory
//! that checks the moment inequalities and entropy conditions on concrete
//! field models.

pub mod error;
pub mod numerics;
pub mod metric;
pub mod psi;
pub mod distances;
pub mod integrals;
pub mod tails;
pub mod lab;

pub use error::{Error, Result};
pub use numerics::ExtremumOptions;
pub use psi::{MomentCurve, PsiForm, PsiFunction};
