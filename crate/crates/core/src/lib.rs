//! Safe navigation among moving pedestrians with model predictive control.
//!
//! The crate contains four receding-horizon obstacle-avoidance formulations
//! (distance constraints, hard discrete-time CBF, soft CBF with an exact L1
//! penalty, and soft CBF plus a single-step generalized CBF), the SQP solver
//! that drives them, an ORCA crowd model, a deterministic episode simulator and
//! the batch benchmark harness that compares everything on paired scenarios.

pub mod barrier;
pub mod bench;
pub mod dynamics;
pub mod error;
pub mod ocp;
pub mod orca;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
