//! Secure transmit precoding for Gaussian MIMO wiretap channels.
//!
//! The transmit covariance is written as `Q = V Λ Vᵀ` with `V` a product of
//! Givens rotations, and the secrecy rate is maximized over the eigenvalues
//! and rotation angles with BFGS, starting from the GSVD precoder.
//!
//! ```
//! use rotaprec::{draw_channel, solve, SolveConfig};
//!
//! let ch = draw_channel(3, 2, 1, 7).unwrap();
//! let (sol, _trace) = solve(&ch, &SolveConfig::new(30.0)).unwrap();
//! assert!(sol.rate >= 0.0);
//! assert!((sol.q.trace() - 30.0).abs() < 1e-9);
//! ```

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfgs;
pub mod channel;
pub mod driver;
pub mod error;
pub mod gsvd;
pub mod harness;
pub mod io;
pub mod matlin;
pub mod rectifier;

pub use bfgs::{BracketMode, LineSearchConfig};
pub use channel::{draw_channel, secrecy_rate, secrecy_rate_q, ChannelPair, PrecoderSolution};
pub use driver::{
    grid_oracle, gsvd_baseline, solve, InitStrategy, OracleConfig, SolveConfig, SolveTrace,
};
pub use error::{Error, Result};
pub use gsvd::{gsvd_decompose, gsvd_init, gsvd_power_alloc, GsvdFactors, GsvdPowerAllocation};
pub use matlin::{GivensAngleSet, Matrix};
pub use rectifier::{rectify, RotationParams};
