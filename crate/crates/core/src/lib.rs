//! Proximal gradient solvers for composite objectives `F(x) = g(x) + h(x)`
//! where `g` is a smooth convex loss and `h(x) = sum_i f(x_i)` applies a
//! piecewise convex penalty to each coordinate.

pub mod cli;
pub mod error;
pub mod harness;
pub mod piecewise;
pub mod problem;
pub mod prox;
pub mod smooth;
pub mod solvers;

pub use error::{Error, PiecewiseError, ProxError, Result};
