//! Closed-loop equilibrium strategies for Stackelberg stochastic
//! linear-quadratic differential games.
//!
//! The leader announces a linear feedback gain, the follower answers with
//! its globally optimal feedback, and the leader's gain is chosen so that no
//! spike deviation at any time lowers the leader's cost. Both gains come
//! from a coupled pair of backward matrix Riccati equations solved on a
//! uniform grid ([`riccati::solve_ere`]).
//!
//! Around the solver sit: a classifier for the structural cases with global
//! well-posedness ([`wellposed`]), an Euler–Maruyama Monte Carlo simulator
//! ([`sim`]), executable equilibrium checks ([`equilibria`]), an open-loop
//! boundary-value demonstration of time-inconsistency ([`inconsistency`])
//! and an asset-management application ([`asset`]).

pub mod asset;
pub mod config;
pub mod csvio;
pub mod equilibria;
mod error;
pub mod inconsistency;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod sim;
pub mod wellposed;

pub use error::{Category, Error, Result};
pub use linalg::{Mat, Vector};
pub use model::{
    sample_coefficients, validate_spec, CoefficientProvider, CoefficientTable, Coefficients,
    ConstantCoefficients, Dims, FnCoefficients, GameSpec, TimeGrid, ValidationReport,
};
pub use riccati::{solve_ere, EreSolution, GainSchedule, Integrator, Player};

/// Grid size used when nothing else is specified.
pub const DEFAULT_GRID_N: usize = 1000;
