use crate::error::{Error, Result};
use crate::linalg::{all_finite, min_eigenvalue, spd_inverse, symmetrize, Mat};
use crate::model::{sample_coefficients, CoefficientTable, Coefficients, GameSpec, TimeGrid};

use super::notation::{
    notation_from_response, rhs_p1_from_block, rhs_p2, theta1_bar_from_response, theta2_star,
    FollowerResponse,
};
use super::GainSchedule;

/// Lower bound on the minimum eigenvalue of `P1`, `P2` during a sweep.
pub const PSD_MONITOR_TOL: f64 = 1e-8;

/// Time stepping used by the backward sweeps.
///
/// `BackwardEuler` is the production scheme. `Rk4` is the classical
/// four-stage method and exists as a convergence reference; it evaluates
/// the coefficient provider at half steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    BackwardEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDiagnostics {
    pub min_eig_p1: f64,
    pub min_eig_p2: f64,
    /// Minimum eigenvalue of `R2 + D2ᵀP2D2`.
    pub min_eig_follower: f64,
    /// Minimum eigenvalue of `R1 + 𝐃ᵀP1𝐃`.
    pub min_eig_leader: f64,
    /// Frobenius norm of the equilibrium condition for the gain at this node.
    pub residual: f64,
}

/// Grid solution of the coupled equilibrium Riccati system.
#[derive(Debug, Clone)]
pub struct EreSolution {
    pub grid: TimeGrid,
    pub integrator: Integrator,
    pub p1: Vec<Mat>,
    pub p2: Vec<Mat>,
    pub theta1_bar: Vec<Mat>,
    pub theta2_star: Vec<Mat>,
    pub diagnostics: Vec<NodeDiagnostics>,
}

impl EreSolution {
    /// Equilibrium gain pair as a schedule.
    pub fn gains(&self) -> GainSchedule {
        GainSchedule {
            grid: self.grid,
            theta1: self.theta1_bar.clone(),
            theta2: Some(self.theta2_star.clone()),
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max)
    }
}

/// Follower Riccati solution for a fixed leader schedule.
#[derive(Debug, Clone)]
pub struct FollowerSolution {
    pub grid: TimeGrid,
    pub p2: Vec<Mat>,
    /// Best-response gains `Θ2*(Θ1)`.
    pub theta2: Vec<Mat>,
}

fn monitor(m: &Mat, matrix: &'static str, node: usize) -> Result<f64> {
    if !all_finite(m) {
        return Err(Error::MonitorBreach {
            matrix,
            node,
            min_eigenvalue: f64::NAN,
        });
    }
    let min_eigenvalue = min_eigenvalue(m);
    if min_eigenvalue < -PSD_MONITOR_TOL {
        return Err(Error::MonitorBreach {
            matrix,
            node,
            min_eigenvalue,
        });
    }
    Ok(min_eigenvalue)
}

struct EreField {
    theta1: Mat,
    theta2: Mat,
    rhs1: Mat,
    rhs2: Mat,
}

/// Gains and `−Ṗ` for both equations at one state of the sweep.
fn ere_field(c: &Coefficients, p1: &Mat, p2: &Mat, node: usize) -> Result<EreField> {
    let response = FollowerResponse::new(c, p2, node)?;
    let theta1 = theta1_bar_from_response(c, p1, &response, node)?;
    let theta2 = response.gain_for(&theta1);
    let block = notation_from_response(c, &theta1, &response);
    let rhs1 = rhs_p1_from_block(c, &theta1, p1, &block);
    let rhs2 = rhs_p2(c, &theta1, p2, node)?;
    Ok(EreField {
        theta1,
        theta2,
        rhs1,
        rhs2,
    })
}

pub fn solve_ere(spec: &GameSpec, grid: &TimeGrid) -> Result<EreSolution> {
    solve_ere_with(spec, grid, Integrator::BackwardEuler)
}

pub fn solve_ere_with(spec: &GameSpec, grid: &TimeGrid, integrator: Integrator) -> Result<EreSolution> {
    let table = sample_coefficients(spec, grid)?;
    match integrator {
        Integrator::BackwardEuler => solve_ere_table(&table),
        Integrator::Rk4 => solve_ere_rk4(spec, &table),
    }
}

/// Backward sweep over a pre-sampled table.
///
/// Step `i → i−1`: intermediate follower quantities from `P2[i]`, gains
/// `Θ̄1[i−1]`, `Θ2*[i−1]` from `P1[i]`, `P2[i]`, derivatives with those
/// gains, then the explicit update. Aborts at the first node where `P1`
/// or `P2` leaves the PSD cone or a normal matrix becomes singular.
pub fn solve_ere_table(table: &CoefficientTable) -> Result<EreSolution> {
    let grid = table.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let mut p1 = vec![Mat::zeros(0, 0); steps + 1];
    let mut p2 = vec![Mat::zeros(0, 0); steps + 1];
    let mut theta1 = vec![Mat::zeros(0, 0); steps + 1];
    let mut theta2 = vec![Mat::zeros(0, 0); steps + 1];
    p1[steps] = table.g1.clone();
    p2[steps] = table.g2.clone();

    let terminal = ere_field(table.at(steps), &p1[steps], &p2[steps], steps)?;
    theta1[steps] = terminal.theta1;
    theta2[steps] = terminal.theta2;

    for i in (1..=steps).rev() {
        let field = ere_field(table.at(i), &p1[i], &p2[i], i)?;
        let next1 = symmetrize(&(&p1[i] + &field.rhs1 * dt));
        let next2 = symmetrize(&(&p2[i] + &field.rhs2 * dt));
        monitor(&next1, "P1", i - 1)?;
        monitor(&next2, "P2", i - 1)?;
        p1[i - 1] = next1;
        p2[i - 1] = next2;
        theta1[i - 1] = field.theta1;
        theta2[i - 1] = field.theta2;
    }

    finish(table, Integrator::BackwardEuler, p1, p2, theta1, theta2)
}

fn solve_ere_rk4(spec: &GameSpec, table: &CoefficientTable) -> Result<EreSolution> {
    let grid = table.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let mut p1 = vec![Mat::zeros(0, 0); steps + 1];
    let mut p2 = vec![Mat::zeros(0, 0); steps + 1];
    p1[steps] = table.g1.clone();
    p2[steps] = table.g2.clone();
    let at = |t: f64, node: usize| -> Result<Coefficients> {
        match spec.constant_coefficients() {
            Some(_) => Ok(table.at(node).clone()),
            None => spec.coefficients_at(t, node),
        }
    };

    for i in (1..=steps).rev() {
        let t = grid.node(i);
        let (c_hi, c_mid, c_lo) = (table.at(i).clone(), at(t - 0.5 * dt, i)?, table.at(i - 1).clone());
        let k1 = ere_field(&c_hi, &p1[i], &p2[i], i)?;
        let h = 0.5 * dt;
        let k2 = ere_field(&c_mid, &(&p1[i] + &k1.rhs1 * h), &(&p2[i] + &k1.rhs2 * h), i)?;
        let k3 = ere_field(&c_mid, &(&p1[i] + &k2.rhs1 * h), &(&p2[i] + &k2.rhs2 * h), i)?;
        let k4 = ere_field(&c_lo, &(&p1[i] + &k3.rhs1 * dt), &(&p2[i] + &k3.rhs2 * dt), i - 1)?;
        let w = dt / 6.0;
        let next1 = &p1[i] + (&k1.rhs1 + &k2.rhs1 * 2.0 + &k3.rhs1 * 2.0 + &k4.rhs1) * w;
        let next2 = &p2[i] + (&k1.rhs2 + &k2.rhs2 * 2.0 + &k3.rhs2 * 2.0 + &k4.rhs2) * w;
        let next1 = symmetrize(&next1);
        let next2 = symmetrize(&next2);
        monitor(&next1, "P1", i - 1)?;
        monitor(&next2, "P2", i - 1)?;
        p1[i - 1] = next1;
        p2[i - 1] = next2;
    }

    let mut theta1 = Vec::with_capacity(steps + 1);
    let mut theta2 = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let field = ere_field(table.at(i), &p1[i], &p2[i], i)?;
        theta1.push(field.theta1);
        theta2.push(field.theta2);
    }
    finish(table, Integrator::Rk4, p1, p2, theta1, theta2)
}

fn finish(
    table: &CoefficientTable,
    integrator: Integrator,
    p1: Vec<Mat>,
    p2: Vec<Mat>,
    theta1_bar: Vec<Mat>,
    theta2_star: Vec<Mat>,
) -> Result<EreSolution> {
    let mut sol = EreSolution {
        grid: table.grid,
        integrator,
        p1,
        p2,
        theta1_bar,
        theta2_star,
        diagnostics: Vec::new(),
    };
    let residuals = equilibrium_residual(&sol, table)?;
    sol.diagnostics = (0..sol.grid.len())
        .map(|i| {
            let c = table.at(i);
            let response = FollowerResponse::new(c, &sol.p2[i], i)?;
            let d_bold = &c.d1 + &c.d2 * &response.control_gain;
            let follower = &c.r2 + c.d2.transpose() * &sol.p2[i] * &c.d2;
            let leader = &c.r1 + d_bold.transpose() * &sol.p1[i] * &d_bold;
            Ok(NodeDiagnostics {
                min_eig_p1: min_eigenvalue(&sol.p1[i]),
                min_eig_p2: min_eigenvalue(&sol.p2[i]),
                min_eig_follower: min_eigenvalue(&follower),
                min_eig_leader: min_eigenvalue(&leader),
                residual: residuals[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sol)
}

/// Per-node Frobenius norm of `R1Θ̄1 + 𝐁(P2)ᵀP1 + 𝐃(P2)ᵀP1𝐂(Θ̄1, P2)`.
///
/// The gain at node `i` is paired with the matrices it was computed from:
/// node `i + 1` for the Euler sweep (node `N` pairs with itself), node `i`
/// for the reference integrator. `𝐂` is formed from the closed-loop
/// diffusion `C + D1Θ̄1 + D2Θ2*` rather than from the notation block.
pub fn equilibrium_residual(sol: &EreSolution, table: &CoefficientTable) -> Result<Vec<f64>> {
    let steps = sol.grid.steps();
    (0..=steps)
        .map(|i| {
            let j = match sol.integrator {
                Integrator::BackwardEuler => (i + 1).min(steps),
                Integrator::Rk4 => i,
            };
            let c = table.at(j);
            let (p1, p2) = (&sol.p1[j], &sol.p2[j]);
            let theta1 = &sol.theta1_bar[i];
            let theta2 = theta2_star(c, theta1, p2, j)?;
            let inverse = spd_inverse(&(&c.r2 + c.d2.transpose() * p2 * &c.d2), "R2 + D2ᵀP2D2", j)?;
            let coupling = inverse * c.d2.transpose() * p2 * &c.d1;
            let b_bold = &c.b1 - &c.b2 * &coupling;
            let d_bold = &c.d1 - &c.d2 * &coupling;
            let c_closed = &c.c + &c.d1 * theta1 + &c.d2 * &theta2;
            let residual =
                &c.r1 * theta1 + b_bold.transpose() * p1 + d_bold.transpose() * p1 * c_closed;
            Ok(residual.norm())
        })
        .collect()
}

pub fn solve_follower_riccati(theta1: &[Mat], spec: &GameSpec, grid: &TimeGrid) -> Result<FollowerSolution> {
    solve_follower_riccati_with(theta1, spec, grid, Integrator::BackwardEuler)
}

pub fn solve_follower_riccati_with(
    theta1: &[Mat],
    spec: &GameSpec,
    grid: &TimeGrid,
    integrator: Integrator,
) -> Result<FollowerSolution> {
    let table = sample_coefficients(spec, grid)?;
    match integrator {
        Integrator::BackwardEuler => solve_follower_riccati_table(theta1, &table),
        Integrator::Rk4 => follower_rk4(theta1, spec, &table),
    }
}

fn check_leader_schedule(theta1: &[Mat], table: &CoefficientTable) -> Result<()> {
    GainSchedule::new(table.grid, theta1.to_vec(), None)?.check(table.dims)
}

/// Backward Euler for the follower Riccati equation under leader gains
/// `theta1` (one per node, same convention as the equilibrium sweep).
pub fn solve_follower_riccati_table(theta1: &[Mat], table: &CoefficientTable) -> Result<FollowerSolution> {
    check_leader_schedule(theta1, table)?;
    let steps = table.grid.steps();
    let dt = table.grid.dt();
    let mut p2 = vec![Mat::zeros(0, 0); steps + 1];
    let mut theta2 = vec![Mat::zeros(0, 0); steps + 1];
    p2[steps] = table.g2.clone();
    theta2[steps] = theta2_star(table.at(steps), &theta1[steps], &p2[steps], steps)?;
    for i in (1..=steps).rev() {
        let c = table.at(i);
        theta2[i - 1] = theta2_star(c, &theta1[i - 1], &p2[i], i)?;
        let next = symmetrize(&(&p2[i] + rhs_p2(c, &theta1[i - 1], &p2[i], i)? * dt));
        monitor(&next, "P2", i - 1)?;
        p2[i - 1] = next;
    }
    Ok(FollowerSolution {
        grid: table.grid,
        p2,
        theta2,
    })
}

fn follower_rk4(theta1: &[Mat], spec: &GameSpec, table: &CoefficientTable) -> Result<FollowerSolution> {
    check_leader_schedule(theta1, table)?;
    let grid = table.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let mut p2 = vec![Mat::zeros(0, 0); steps + 1];
    p2[steps] = table.g2.clone();
    for i in (1..=steps).rev() {
        let th = &theta1[i - 1];
        let c_mid = match spec.constant_coefficients() {
            Some(_) => table.at(i).clone(),
            None => spec.coefficients_at(grid.node(i) - 0.5 * dt, i)?,
        };
        let p = &p2[i];
        let k1 = rhs_p2(table.at(i), th, p, i)?;
        let k2 = rhs_p2(&c_mid, th, &(p + &k1 * (0.5 * dt)), i)?;
        let k3 = rhs_p2(&c_mid, th, &(p + &k2 * (0.5 * dt)), i)?;
        let k4 = rhs_p2(table.at(i - 1), th, &(p + &k3 * dt), i - 1)?;
        let next = symmetrize(&(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)));
        monitor(&next, "P2", i - 1)?;
        p2[i - 1] = next;
    }
    let theta2 = (0..=steps)
        .map(|i| theta2_star(table.at(i), &theta1[i], &p2[i], i))
        .collect::<Result<Vec<_>>>()?;
    Ok(FollowerSolution {
        grid,
        p2,
        theta2,
    })
}
