//! Numerical solver and verification harness for the continuous
//! growth-fragmentation-coagulation equation
//!
//! ```text
//! f_t = -(r f)_x - a f + int_x^inf a(y) b(x,y) f(y) dy
//!       + 1/2 int_0^x k(x-y,y) f(x-y) f(y) dy - f int_0^inf k(x,y) f(y) dy
//! ```
//!
//! posed in the weighted space `X_{0,m}` with norm `int |f| (1 + x^m) dx`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coagulation;
pub mod config;
pub mod error;
pub mod evolution;
pub mod fragmentation;
pub mod grid;
pub mod kernels;
pub mod moment_bounds;
pub mod presets;
pub mod quadrature;
pub mod report;
pub mod runner;
pub mod transport;

pub use error::{Error, Result};
