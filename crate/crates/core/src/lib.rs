//! Simulator and analysis library for online SGD learning of a two-layer
//! teacher-student network with orthogonal teacher directions.
//!
//! The teacher is an additive model `f*(x) = sum_p a_p sigma(x_p)` with
//! descending coefficients and an even activation of information exponent
//! at least four. The student is a 2-homogeneous width-`m` network
//! `f(x) = sum_k ||v_k||^2 sigma(vbar_k . x)`. Everything downstream of that
//! pair — the closed-form population loss and gradient, online SGD and
//! population gradient-descent training loops, greedy student/teacher
//! matching at initialization, emergence-time predictions, and scaling-law
//! exponents — lives in the modules below.
//!
//! - [`hermite`]: normalized Hermite polynomials, activation expansions,
//!   Gauss-Hermite quadrature, and the Gaussian correlation kernel.
//! - [`model`]: teacher/student state, closed-form loss/gradients, the
//!   per-sample stochastic gradient, and the Monte Carlo loss oracle.
//! - [`dynamics`]: training loops, trajectory logging, emergence detection,
//!   and runtime diagnostics.
//! - [`selection`]: greedy maximum selection and initialization gap
//!   statistics.
//! - [`theory`]: closed-form emergence times, the idealized overlap ODE and
//!   staircase loss, scaling exponents, and log-log slope fitting.
//! - [`oracle`]: independent brute-force reference implementations used by
//!   the validation suite and tests.

// validation guards use `!(x > y)` so that NaN inputs fail them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
mod error;
pub mod hermite;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod theory;

pub use error::{Error, Result};
