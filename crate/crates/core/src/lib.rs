//! Engine for hybrid discrete/Gaussian belief networks driving a soil
//! sorting line.
//!
//! The crate covers the full control loop:
//!
//! * [`model`] — network description (discrete tables, conditional linear
//!   Gaussian nodes over log-scale contamination), validation, and the
//!   reference sorter network.
//! * [`potential`] — mixed canonical-form potentials and the algebra the
//!   propagation engine runs on.
//! * [`inference`] — strong clique trees, two-phase propagation, and
//!   incremental branch updates.
//! * [`mixture`] — exact posterior mixtures for continuous nodes, moment
//!   matching, and divergence/ellipse diagnostics.
//! * [`decision`] — divert/accept loss calculus on posterior mixtures.
//! * [`compiler`] — collapses a network plus slow evidence into a small
//!   sensor-conditional model and an interval rule suitable for a PLC.
//! * [`simulator`] — seeded batch generation and controller comparisons.
//!
//! Contamination quantities are carried in natural-log units throughout;
//! mixture weights live in log space until the moment they are reported.

pub mod compiler;
pub mod decision;
pub mod error;
mod indexing;
pub mod inference;
pub mod mixture;
pub mod model;
pub mod potential;
pub mod simulator;

pub use error::{EngineError, Result};
pub use model::{Evidence, Network, NodeId};
