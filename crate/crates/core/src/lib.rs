//! Numerical laboratory for branching metric measure spaces built from a
//! convex profile: exact profile, inequality margins, discrete optimal
//! transport, midpoint interpolation and entropy-convexity checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convexity;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod lemmas;
pub mod measures;
pub mod midpoint;
pub mod quadrature;
pub mod sampling;
pub mod transport;

pub use error::{LabError, Result};
pub use geometry::{Point, Space, SpaceParams};
