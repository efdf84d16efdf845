//! Executable checks of the equilibrium properties.
//!
//! All pass/fail decisions compare analytic values (Lyapunov value matrices
//! on the solver grid), never Monte Carlo estimates. Deviations are drawn
//! from linear feedback gains only; every report names the class it tested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{half_quadratic, operator_norm, Mat, Vector};
use crate::model::{sample_coefficients, CoefficientTable, GameSpec, TimeGrid};
use crate::riccati::lyapunov_sweep;
use crate::riccati::{
    notation_block, solve_follower_riccati_table, EreSolution, FollowerResponse, GainSchedule,
    Integrator, Player,
};

/// Slack allowed for the follower and leader dominance margins.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// Relative slack of the spike quotient: pass iff `q ≥ −SPIKE_TOL·(1 + |J|)`.
pub const SPIKE_TOL: f64 = 1e-6;

pub const DEVIATION_CLASS: &str =
    "linear feedback deviations, piecewise constant in time, operator norm at most 1";

/// Leader gain `V` added on `[t, t + ε)` with `ε = eps_steps·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub t_index: usize,
    pub eps_steps: usize,
    pub v: Mat,
    pub xi: Vector,
}

impl PerturbationSpec {
    pub fn check(&self, table: &CoefficientTable) -> Result<()> {
        let steps = table.grid.steps();
        if self.eps_steps < 1 || self.t_index + self.eps_steps > steps {
            return Err(Error::Invalid(format!(
                "spike [{}, {}) does not fit a grid with {steps} steps",
                self.t_index,
                self.t_index + self.eps_steps
            )));
        }
        let dims = table.dims;
        if self.v.shape() != (dims.m1, dims.n) || self.xi.len() != dims.n {
            return Err(Error::Invalid("perturbation has the wrong shape".into()));
        }
        if self.v.iter().chain(self.xi.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("perturbation is not finite".into()));
        }
        Ok(())
    }

    /// `theta1` with `V` added on the spike window.
    pub fn apply(&self, theta1: &[Mat]) -> Vec<Mat> {
        let mut out = theta1.to_vec();
        for g in &mut out[self.t_index..self.t_index + self.eps_steps] {
            *g += &self.v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumTestReport {
    /// `(J(Θ1 + 1_{[t,t+ε)}V) − J(Θ1)) / ε`.
    pub first_order_quotient: f64,
    /// `½⟨(R1 + 𝐃ᵀP1𝐃)Vξ, Vξ⟩` at `t`.
    pub predicted_second_order: f64,
    pub base_value: f64,
    pub perturbed_value: f64,
    pub epsilon: f64,
    pub pass: bool,
}

/// Leader value matrices `Π1` under `(Θ1, Θ2*(Θ1))` together with the
/// follower Riccati solution.
fn leader_value_matrices(theta1: &[Mat], table: &CoefficientTable) -> Result<(Vec<Mat>, Vec<Mat>)> {
    let follower = solve_follower_riccati_table(theta1, table)?;
    let pi = lyapunov_sweep(theta1, &follower.theta2, Player::Player1, table)?;
    Ok((pi, follower.p2))
}

/// Leader cost `½ξᵀΠ1(t)ξ` when the follower best-responds to `theta1`.
pub fn leader_value_of_gain(
    theta1: &[Mat],
    t_index: usize,
    xi: &Vector,
    spec: &GameSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    let table = sample_coefficients(spec, grid)?;
    leader_value_table(theta1, t_index, xi, &table)
}

pub fn leader_value_table(theta1: &[Mat], t_index: usize, xi: &Vector, table: &CoefficientTable) -> Result<f64> {
    if t_index > table.grid.steps() || xi.len() != table.dims.n {
        return Err(Error::Invalid("evaluation point is outside the grid or has the wrong size".into()));
    }
    let (pi, _) = leader_value_matrices(theta1, table)?;
    Ok(half_quadratic(&pi[t_index], xi))
}

pub fn spike_test(
    pert: &PerturbationSpec,
    sol: &EreSolution,
    spec: &GameSpec,
    grid: &TimeGrid,
) -> Result<EquilibriumTestReport> {
    let table = sample_coefficients(spec, grid)?;
    spike_test_table(pert, sol, &table)
}

/// Spike test around the equilibrium; the predicted term uses the solver's
/// `P1`, `P2` at the spike start.
pub fn spike_test_table(
    pert: &PerturbationSpec,
    sol: &EreSolution,
    table: &CoefficientTable,
) -> Result<EquilibriumTestReport> {
    if sol.grid != table.grid {
        return Err(Error::Invalid("solution grid differs from the game grid".into()));
    }
    let t = pert.t_index;
    let predicted = predicted_second_order(pert, table, &sol.p1[t], &sol.p2[t])?;
    spike_core(pert, &sol.theta1_bar, table, predicted)
}

/// Spike test around an arbitrary leader schedule; the predicted term uses
/// the schedule's own value matrix and follower Riccati solution.
pub fn spike_test_from(
    base_theta1: &[Mat],
    pert: &PerturbationSpec,
    table: &CoefficientTable,
) -> Result<EquilibriumTestReport> {
    let (pi, p2) = leader_value_matrices(base_theta1, table)?;
    let t = pert.t_index;
    let predicted = predicted_second_order(pert, table, &pi[t], &p2[t])?;
    spike_core(pert, base_theta1, table, predicted)
}

fn predicted_second_order(pert: &PerturbationSpec, table: &CoefficientTable, p1: &Mat, p2: &Mat) -> Result<f64> {
    pert.check(table)?;
    let t = pert.t_index;
    let c = table.at(t);
    let zero = Mat::zeros(table.dims.m1, table.dims.n);
    let block = notation_block(c, &zero, p2, t)?;
    let weight = &c.r1 + block.d_bold.transpose() * p1 * &block.d_bold;
    Ok(half_quadratic(&weight, &(&pert.v * &pert.xi)))
}

fn spike_core(
    pert: &PerturbationSpec,
    base: &[Mat],
    table: &CoefficientTable,
    predicted_second_order: f64,
) -> Result<EquilibriumTestReport> {
    pert.check(table)?;
    let base_value = leader_value_table(base, pert.t_index, &pert.xi, table)?;
    let perturbed_value = leader_value_table(&pert.apply(base), pert.t_index, &pert.xi, table)?;
    let epsilon = pert.eps_steps as f64 * table.grid.dt();
    let first_order_quotient = (perturbed_value - base_value) / epsilon;
    Ok(EquilibriumTestReport {
        first_order_quotient,
        predicted_second_order,
        base_value,
        perturbed_value,
        epsilon,
        pass: first_order_quotient >= -SPIKE_TOL * (1.0 + base_value.abs()),
    })
}

/// Deterministic random spike for `(seed, trial)`: start node uniform over
/// the admissible range, `V` and `ξ` with entries uniform in `[−1, 1]`,
/// `ξ` then scaled by `xi_scale`.
pub fn random_spike(seed: u64, trial: usize, table: &CoefficientTable, eps_steps: usize, xi_scale: f64) -> PerturbationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let dims = table.dims;
    let steps = table.grid.steps();
    let eps_steps = eps_steps.clamp(1, steps);
    PerturbationSpec {
        t_index: rng.random_range(0..=steps - eps_steps),
        eps_steps,
        v: Mat::from_fn(dims.m1, dims.n, |_, _| rng.random_range(-1.0..1.0)),
        xi: Vector::from_fn(dims.n, |_, _| xi_scale * rng.random_range(-1.0..1.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeSuiteReport {
    pub reports: Vec<EquilibriumTestReport>,
    pub worst_quotient: f64,
    /// Largest `|quotient − predicted| / predicted` over the suite.
    pub worst_relative_gap: f64,
    pub pass: bool,
}

/// `count` random spike tests around the equilibrium; trial `k` uses
/// `eps_choices[k % len]` steps.
pub fn spike_suite(
    sol: &EreSolution,
    table: &CoefficientTable,
    count: usize,
    seed: u64,
    eps_choices: &[usize],
    xi_scale: f64,
) -> Result<SpikeSuiteReport> {
    if eps_choices.is_empty() {
        return Err(Error::Invalid("at least one spike width is needed".into()));
    }
    let reports = (0..count)
        .into_par_iter()
        .map(|k| {
            let pert = random_spike(seed, k, table, eps_choices[k % eps_choices.len()], xi_scale);
            spike_test_table(&pert, sol, table)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_quotient = reports.iter().map(|r| r.first_order_quotient).fold(f64::INFINITY, f64::min);
    let worst_relative_gap = reports
        .iter()
        .filter(|r| r.predicted_second_order > 0.0)
        .map(|r| (r.first_order_quotient - r.predicted_second_order).abs() / r.predicted_second_order)
        .fold(0.0, f64::max);
    Ok(SpikeSuiteReport {
        pass: reports.iter().all(|r| r.pass),
        worst_quotient: if reports.is_empty() { 0.0 } else { worst_quotient },
        worst_relative_gap,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub trials: usize,
    /// Smallest `J(deviation) − J(reference)` over all trials.
    pub worst_margin: f64,
    pub pass: bool,
    pub tested_class: &'static str,
}

impl DominanceReport {
    fn from_margins(margins: &[f64]) -> Self {
        let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        let worst_margin = if margins.is_empty() { 0.0 } else { worst_margin };
        DominanceReport {
            trials: margins.len(),
            worst_margin,
            pass: worst_margin >= -DOMINANCE_TOL,
            tested_class: DEVIATION_CLASS,
        }
    }
}

/// One randomized deviation: gain offset `delta` on nodes `[start, end)`,
/// evaluated from `(t_index, xi)` with `t_index ≤ start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub start: usize,
    pub end: usize,
    pub delta: Mat,
    pub t_index: usize,
    pub xi: Vector,
}

impl Deviation {
    /// Deterministic draw for `(seed, trial)`.
    ///
    /// Even trials deviate on the whole horizon from `t = 0`; odd trials use
    /// a random window and a random evaluation node before it. The offset
    /// has operator norm uniform in `[0, 1]`.
    pub fn draw(seed: u64, trial: usize, rows: usize, n: usize, steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let raw = Mat::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
        let norm = operator_norm(&raw);
        let radius: f64 = rng.random();
        let delta = if norm > 0.0 { raw * (radius / norm) } else { raw };
        let xi = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (start, end, t_index) = if trial % 2 == 0 {
            (0, steps + 1, 0)
        } else {
            let a = rng.random_range(0..steps);
            let b = rng.random_range(a + 1..=steps + 1);
            (a, b, rng.random_range(0..=a))
        };
        Deviation {
            start,
            end,
            delta,
            t_index,
            xi,
        }
    }

    pub fn apply(&self, gains: &[Mat]) -> Vec<Mat> {
        let mut out = gains.to_vec();
        for g in &mut out[self.start..self.end] {
            *g += &self.delta;
        }
        out
    }
}

/// Follower cost under `(Θ1, Θ2*(Θ1))` against randomized `Θ2*(Θ1) + ΔΘ2`.
pub fn follower_optimality_test(
    theta1: &[Mat],
    trials: usize,
    seed: u64,
    spec: &GameSpec,
    grid: &TimeGrid,
) -> Result<DominanceReport> {
    let table = sample_coefficients(spec, grid)?;
    follower_optimality_table(theta1, trials, seed, &table)
}

pub fn follower_optimality_table(
    theta1: &[Mat],
    trials: usize,
    seed: u64,
    table: &CoefficientTable,
) -> Result<DominanceReport> {
    let steps = table.grid.steps();
    let dims = table.dims;
    let best = solve_follower_riccati_table(theta1, table)?.theta2;
    let reference = lyapunov_sweep(theta1, &best, Player::Player2, table)?;
    let margins = (0..trials)
        .into_par_iter()
        .map(|k| {
            let dev = Deviation::draw(seed, k, dims.m2, dims.n, steps);
            let pi = lyapunov_sweep(theta1, &dev.apply(&best), Player::Player2, table)?;
            Ok(half_quadratic(&pi[dev.t_index], &dev.xi) - half_quadratic(&reference[dev.t_index], &dev.xi))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DominanceReport::from_margins(&margins))
}

/// Follower response maps `v = state_gain·x + control_gain·u` frozen at the
/// equilibrium `P2`, one per node, paired as in the sweep that produced it.
pub fn frozen_responses(sol: &EreSolution, table: &CoefficientTable) -> Result<Vec<FollowerResponse>> {
    let steps = sol.grid.steps();
    (0..=steps)
        .map(|i| {
            let j = match sol.integrator {
                Integrator::BackwardEuler => (i + 1).min(steps),
                Integrator::Rk4 => i,
            };
            FollowerResponse::new(table.at(j), &sol.p2[j], j)
        })
        .collect()
}

/// Leader value from `(t, ξ)` when the leader deviates and the follower
/// answers through the frozen equilibrium response maps.
pub fn leader_value_frozen(
    theta1: &[Mat],
    responses: &[FollowerResponse],
    t_index: usize,
    xi: &Vector,
    table: &CoefficientTable,
) -> Result<f64> {
    let theta2: Vec<Mat> = theta1.iter().zip(responses).map(|(g, r)| r.gain_for(g)).collect();
    let pi = lyapunov_sweep(theta1, &theta2, Player::Player1, table)?;
    Ok(half_quadratic(&pi[t_index], xi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackStackelbergReport {
    /// Follower dominance at `Θ1 = Θ̄1`.
    pub follower: DominanceReport,
    /// Leader dominance with the follower answering through the equilibrium
    /// response map.
    pub leader: DominanceReport,
    /// Worst leader margin when the follower instead re-solves its Riccati
    /// equation against the whole deviated schedule. Informational: this is
    /// a commitment comparison, not part of the equilibrium property.
    pub resolved_leader_worst_margin: f64,
    pub pass: bool,
}

pub fn feedback_stackelberg_check(
    sol: &EreSolution,
    spec: &GameSpec,
    grid: &TimeGrid,
    trials: usize,
    seed: u64,
) -> Result<FeedbackStackelbergReport> {
    let table = sample_coefficients(spec, grid)?;
    feedback_stackelberg_table(sol, &table, trials, seed)
}

pub fn feedback_stackelberg_table(
    sol: &EreSolution,
    table: &CoefficientTable,
    trials: usize,
    seed: u64,
) -> Result<FeedbackStackelbergReport> {
    if sol.grid != table.grid {
        return Err(Error::Invalid("solution grid differs from the game grid".into()));
    }
    let follower = follower_optimality_table(&sol.theta1_bar, trials, seed, table)?;

    let steps = table.grid.steps();
    let dims = table.dims;
    let responses = frozen_responses(sol, table)?;
    let base = GainSchedule::new(table.grid, sol.theta1_bar.clone(), None)?;
    let frozen_reference = {
        let theta2: Vec<Mat> = base.theta1.iter().zip(&responses).map(|(g, r)| r.gain_for(g)).collect();
        lyapunov_sweep(&base.theta1, &theta2, Player::Player1, table)?
    };
    let (resolved_reference, _) = leader_value_matrices(&base.theta1, table)?;
    // Leader trials use a stream family disjoint from the follower trials.
    let leader_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let margins = (0..trials)
        .into_par_iter()
        .map(|k| {
            let dev = Deviation::draw(leader_seed, k, dims.m1, dims.n, steps);
            let theta1 = dev.apply(&base.theta1);
            let frozen = leader_value_frozen(&theta1, &responses, dev.t_index, &dev.xi, table)?
                - half_quadratic(&frozen_reference[dev.t_index], &dev.xi);
            let resolved = leader_value_table(&theta1, dev.t_index, &dev.xi, table)?
                - half_quadratic(&resolved_reference[dev.t_index], &dev.xi);
            Ok((frozen, resolved))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let frozen: Vec<f64> = margins.iter().map(|m| m.0).collect();
    let leader = DominanceReport::from_margins(&frozen);
    let resolved_leader_worst_margin = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    Ok(FeedbackStackelbergReport {
        pass: follower.pass && leader.pass,
        follower,
        leader,
        resolved_leader_worst_margin: if trials == 0 { 0.0 } else { resolved_leader_worst_margin },
    })
}
