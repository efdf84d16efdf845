//! Matrix Riccati machinery: pointwise formulas, the backward sweep for the
//! coupled equilibrium system, the follower Riccati solver and closed-loop
//! Lyapunov value equations.
//!
//! Index convention shared by every sweep and by the forward simulator: the
//! gain stored at node `i` acts on `[t_i, t_{i+1}]`. The backward step from
//! node `i` to `i − 1` evaluates coefficients at `t_i`, writes gains at
//! `i − 1` computed from the matrices at `i`, and applies
//! `P[i−1] = P[i] + dt·(−Ṗ[i])`.

mod lyapunov;
mod notation;
mod sweep;

pub(crate) use lyapunov::lyapunov_sweep;
pub use lyapunov::{solve_lyapunov_value, solve_lyapunov_value_table};
pub use notation::{
    lyapunov_rhs, notation_block, rhs_p1, rhs_p2, theta1_bar, theta2_star, FollowerResponse,
    NotationBlock, Player,
};
pub use sweep::{
    equilibrium_residual, solve_ere, solve_ere_table, solve_ere_with, solve_follower_riccati,
    solve_follower_riccati_table, solve_follower_riccati_with, EreSolution, FollowerSolution,
    Integrator, NodeDiagnostics, PSD_MONITOR_TOL,
};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Mat};
use crate::model::{check_shape, Dims, TimeGrid};

/// Time-varying feedback gains for both players on a grid.
///
/// `theta2 = None` means the follower best-responds to `theta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub grid: TimeGrid,
    pub theta1: Vec<Mat>,
    pub theta2: Option<Vec<Mat>>,
}

impl GainSchedule {
    pub fn new(grid: TimeGrid, theta1: Vec<Mat>, theta2: Option<Vec<Mat>>) -> Result<Self> {
        let schedule = GainSchedule {
            grid,
            theta1,
            theta2,
        };
        schedule.check_lengths()?;
        Ok(schedule)
    }

    /// Constant leader gain, follower best-responds.
    pub fn constant_leader(grid: TimeGrid, theta1: Mat) -> Self {
        GainSchedule {
            grid,
            theta1: vec![theta1; grid.len()],
            theta2: None,
        }
    }

    fn check_lengths(&self) -> Result<()> {
        let len = self.grid.len();
        let check = |name: &str, gains: &[Mat]| -> Result<()> {
            if gains.len() != len {
                return Err(Error::Invalid(format!(
                    "{name} has {} nodes, grid has {len}",
                    gains.len()
                )));
            }
            if let Some(i) = gains.iter().position(|g| !all_finite(g)) {
                return Err(Error::Invalid(format!("{name} is non-finite at node {i}")));
            }
            Ok(())
        };
        check("theta1", &self.theta1)?;
        if let Some(theta2) = &self.theta2 {
            check("theta2", theta2)?;
        }
        Ok(())
    }

    /// Full consistency check against the game dimensions.
    pub fn check(&self, dims: Dims) -> Result<()> {
        self.check_lengths()?;
        for g in &self.theta1 {
            check_shape("theta1", g, dims.m1, dims.n)?;
        }
        if let Some(theta2) = &self.theta2 {
            for g in theta2 {
                check_shape("theta2", g, dims.m2, dims.n)?;
            }
        }
        Ok(())
    }

    pub fn theta2(&self) -> Result<&[Mat]> {
        self.theta2
            .as_deref()
            .ok_or_else(|| Error::Invalid("follower gain schedule is required here".into()))
    }
}
