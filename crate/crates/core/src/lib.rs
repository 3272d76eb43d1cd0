//! Model-free adaptive predictive control (MFAPC) for discrete-time SISO
//! nonlinear plants, built on the full-form dynamic linearization data model.
//!
//! The pipeline per control tick is: [`identification::PgEstimator`] updates
//! the pseudo-gradient from measured I/O increments,
//! [`identification::PgForecaster`] extrapolates it over the horizon,
//! [`predictor::build_matrices_sim`] assembles the prediction matrices and
//! [`control::mfapc_increment`] solves the receding-horizon law.
//! [`simulation`] wires these into a closed-loop benchmark harness.

pub mod cli;
pub mod control;
pub mod error;
pub mod identification;
pub mod model;
pub mod predictor;
pub mod selftest;
pub mod simulation;

pub use error::{MfapcError, Result};
pub use model::{ffdl_step, ControllerConfig, IoHistory, PgVector, ResetPolicy, Trace, TraceRow};
