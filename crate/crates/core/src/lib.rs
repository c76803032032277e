//! Joint wireless-bandwidth and edge-compute allocation for multi-cell mobile
//! edge computing.
//!
//! Users offload a task (input bits, CPU cycles, deadline) to their serving
//! base station. The library minimizes total uplink transmission energy by
//! choosing each user's bandwidth and compute share, with bandwidth shared
//! dynamically across stations through a single price.
//!
//! * [`model`]: domain types and closed-form rate/power/energy formulas.
//! * [`solver`]: the distributed primal-dual alternation.
//! * [`reuse`]: the same problem when cells reuse spectrum in fixed groups.
//! * [`baselines`]: equal-split reference allocators.
//! * [`oracle`]: an independent centralized solver for small instances.
//! * [`scenario`]: random instance generation.
//! * [`harness`]: sweeps, aggregation and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod par;
pub mod reuse;
mod roots;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Allocation, StationRecord, TaskSpec, Topology, UserRecord};
pub use solver::{DualState, SolveReport, Solution, SolverSettings};
