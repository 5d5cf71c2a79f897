//! Numerical lab for matrix-weighted dyadic maximal operators and the
//! convex-body Carleson embedding.

pub mod acceptance;
pub mod carleson;
pub mod convexbody;
pub mod dyadic;
pub mod error;
pub mod mat2;
pub mod maxop;
pub mod oracle;
pub mod random;
pub mod real;
pub mod weight;

pub use carleson::{CarlesonSequence, PhiPolicy};
pub use convexbody::Zonotope;
pub use dyadic::{DyadicInterval, IntervalClass};
pub use error::{LabError, Result};
pub use mat2::{Spectral, SymMat2, Vec2};
pub use maxop::{MaxField, Operator};
pub use real::{Backend, Ext, Real};
pub use weight::{MartingaleWeight, PiecewiseVector, PiecewiseWeight};
