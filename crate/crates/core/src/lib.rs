//! Volume-of-tube bounds for real algebraic sets, with Monte Carlo checks.
//!
//! The crate evaluates closed-form upper bounds on the probability that a
//! uniform point of a ball (in `R^n`) or a cap (in `S^n`) lands within
//! distance `ε` of a real algebraic set, and measures that probability
//! empirically with a certified one-sided distance oracle. It also builds the
//! polar-variety deformation that approximates a singular set by smooth
//! complete intersections, and computes curvature integrals and the spherical
//! Weyl tube formula for smooth submanifolds of the sphere.

pub mod bounds;
pub mod cli;
pub mod corpus;
pub mod curvature;
pub mod deformation;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod interval;
pub mod oracle;
pub mod poly;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{AmbientSpace, PointCloud};
pub use poly::{PolySystem, SparsePoly};
pub use stats::McEstimate;
