//! D-vine copula quantile regression for sector stress tests.
//!
//! The numerical core (`bicop`, `dvine`, `baselines`, `marginals`) is generic
//! over [`Real`](scalar::Real); the file-facing layers (`stress`, `datagen`,
//! `io`, `pipeline`) work in `f64`.

pub mod baselines;
pub mod bicop;
pub mod datagen;
pub mod dvine;
pub mod error;
pub mod io;
pub mod marginals;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod stress;

pub use error::{Error, Result};

pub type BivariateCopula64 = bicop::BivariateCopula<f64>;
pub type BivariateCopula32 = bicop::BivariateCopula<f32>;
pub type FittedCopula64 = bicop::FittedCopula<f64>;
pub type FittedCopula32 = bicop::FittedCopula<f32>;
pub type DVineModel64 = dvine::DVineModel<f64>;
pub type DVineModel32 = dvine::DVineModel<f32>;
pub type MarginalEcdf64 = marginals::MarginalEcdf<f64>;
pub type MarginalEcdf32 = marginals::MarginalEcdf<f32>;
pub type RawPanel64 = marginals::RawPanel<f64>;
pub type RawPanel32 = marginals::RawPanel<f32>;
pub type DiffPanel64 = marginals::DiffPanel<f64>;
pub type DiffPanel32 = marginals::DiffPanel<f32>;
pub type PseudoPanel64 = marginals::PseudoPanel<f64>;
pub type PseudoPanel32 = marginals::PseudoPanel<f32>;
pub type LinearFit64 = baselines::LinearFit<f64>;
pub type LinearFit32 = baselines::LinearFit<f32>;
