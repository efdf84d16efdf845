use crate::error::{Error, Result};
use crate::linalg::{all_finite, symmetrize, Mat};
use crate::model::{sample_coefficients, CoefficientTable, GameSpec, TimeGrid};

use super::notation::{lyapunov_rhs, Player};
use super::GainSchedule;

/// Quadratic value matrix `Π` of a fixed linear feedback pair.
///
/// Backward Euler for
/// `Π̇ = −(A_clᵀΠ + ΠA_cl + C_clᵀΠC_cl + Q_k + Θ_kᵀR_kΘ_k)`, `Π(T) = G_k`;
/// the cost of player `k` from `(t_i, ξ)` is `½ ξᵀΠ[i]ξ`.
pub fn solve_lyapunov_value(
    gains: &GainSchedule,
    player: Player,
    spec: &GameSpec,
    grid: &TimeGrid,
) -> Result<Vec<Mat>> {
    let table = sample_coefficients(spec, grid)?;
    solve_lyapunov_value_table(gains, player, &table)
}

pub fn solve_lyapunov_value_table(
    gains: &GainSchedule,
    player: Player,
    table: &CoefficientTable,
) -> Result<Vec<Mat>> {
    gains.check(table.dims)?;
    if gains.grid != table.grid {
        return Err(Error::Invalid("gain schedule grid differs from the game grid".into()));
    }
    let theta2 = gains.theta2()?;
    lyapunov_sweep(&gains.theta1, theta2, player, table)
}

pub(crate) fn lyapunov_sweep(
    theta1: &[Mat],
    theta2: &[Mat],
    player: Player,
    table: &CoefficientTable,
) -> Result<Vec<Mat>> {
    let steps = table.grid.steps();
    let dt = table.grid.dt();
    let mut pi = vec![Mat::zeros(0, 0); steps + 1];
    pi[steps] = match player {
        Player::Player1 => table.g1.clone(),
        Player::Player2 => table.g2.clone(),
    };
    for i in (1..=steps).rev() {
        let rhs = lyapunov_rhs(table.at(i), &theta1[i - 1], &theta2[i - 1], &pi[i], player);
        let next = symmetrize(&(&pi[i] + rhs * dt));
        if !all_finite(&next) {
            return Err(Error::MonitorBreach {
                matrix: "Π",
                node: i - 1,
                min_eigenvalue: f64::NAN,
            });
        }
        pi[i - 1] = next;
    }
    Ok(pi)
}
