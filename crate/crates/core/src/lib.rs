//! Frequency nadir constraint linearization.
//!
//! Simulates the centralized multi-machine frequency response, labels
//! commitment scenarios with their frequency security margin, fits a
//! min-of-affine predictor over random sigmoid features that never
//! overestimates a training margin, and expands the predictor into linear
//! N-1 constraints for scheduling models.

pub mod baseline;
pub mod constraints;
pub mod data;
pub mod elm;
pub mod error;
pub mod eval;
pub mod io;
pub mod lp;
pub mod margin;
pub mod ode;
pub mod pwl;
pub mod reduced;
pub mod scalar;
pub mod sfr;

pub use error::{FncError, Result};
pub use scalar::Scalar;

/// `f64` instantiations used by the file formats and the command line.
pub type System = sfr::SystemModel<f64>;
pub type Scenario = sfr::CommitmentScenario<f64>;
pub type Dataset = data::LabeledDataset<f64>;
pub type Weights = elm::ElmWeights<f64>;
pub type Predictor = pwl::PwlModel<f64>;
pub type Baseline = baseline::BaselineModel<f64>;
pub type ConstraintBlock = constraints::LinearConstraintBlock<f64>;
