//! Dense myocardial motion from 2-D cine sequences by groupwise B-spline
//! registration with a locally low-rank dissimilarity, and the Green-Lagrange
//! strain analysis built on top of it.
//!
//! The pipeline is: [`imaging`] (data model and pyramid) -> [`deform`]
//! (control mesh and field algebra) -> [`cost`] (objective and gradients) ->
//! [`optimizer`] (projected gradient descent, coarse to fine) -> [`strain`]
//! and [`eval`]. [`phantom`] produces analytic test data and [`io`] the file
//! formats.

#![allow(clippy::needless_range_loop)]

pub mod cost;
pub mod deform;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod par;
pub mod phantom;
pub mod strain;

pub use error::{Error, Result};
