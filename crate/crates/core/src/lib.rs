//! Reconstruction of non-decaying signals in shift-invariant spline spaces.

pub mod dfilter;
pub mod error;
pub mod harness;
pub mod jet;
pub mod kernel;
pub mod multiindex;
pub mod operators;
pub mod poly;
pub mod quad;
pub mod signals;
pub mod spaces;

pub use dfilter::DiscreteFilter;
pub use error::{Error, Result};
pub use kernel::PiecewisePolyKernel;
