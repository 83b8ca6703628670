//! Simulation and bound auditing for the model photon-kinetics equation
//!
//! ```text
//!     ∂t n = ∂x (x² ∂x n + n² − 2 x n),    x ∈ (0, 1]
//! ```
//!
//! truncated to `[ε, 1]`, with the outflow closure `J = n²` at `x = ε` and the
//! no-flux condition `J = 0` at `x = 1`. Mass leaving through `x = ε` is the
//! discrete condensate and is tracked in a ledger so the photon balance closes
//! to machine precision.
//!
//! Modules, bottom-up:
//!
//! * [`grid`]: cell-centred mesh on `[ε, 1]` and midpoint quadrature.
//! * [`model`]: closed-form fluxes, equilibria, bound envelopes and constants.
//! * [`initdata`]: initial-data families, mollification and cut-off compatible data.
//! * [`solver`]: IMEX finite-volume stepping and trajectories.
//! * [`diagnostics`]: bound reports, contraction, energy and persistence checks.
//! * [`equilibrium`]: identification of the large-time limit `x²/(x+μ)`.
//! * [`config`]: TOML run configuration.
//! * [`verify`]: the verification scoreboard.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod initdata;
pub mod model;
pub mod solver;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
pub use state::State;
