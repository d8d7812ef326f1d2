//! Exact branch-and-bound for constrained binary quadratic programs
//!
//! ```text
//! minimize  x^T Q x + offset   subject to  A x <= b,  x in {0,1}^n
//! ```
//!
//! Node lower bounds come from the Lagrangian dual, solved by a cutting-plane
//! loop that alternates a small LP over multipliers with calls to an
//! unconstrained (UBQP) oracle. The oracle is pluggable: exhaustive
//! enumeration, simulated annealing, or a noise-injecting wrapper.

#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod branching;
pub mod driver;
pub mod error;
pub mod heuristic;
pub mod model;
pub mod oracle;
pub mod simplex;
pub mod workbench;

pub use error::{Error, Result};
pub use model::{Assignment, CbqpInstance, InteractionGraph};
