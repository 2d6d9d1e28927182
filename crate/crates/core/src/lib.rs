//! Filtered back-projection inversion of the circular mean transform and of
//! two-dimensional wave traces recorded on a circle.

mod error;
pub mod forward;
pub mod grids;
pub mod io;
pub mod operators;
pub mod quad;
pub mod recon;
pub mod verify;
mod weights;

pub use error::{Error, Result};
