//! Open-loop Stackelberg solution of a scalar deterministic game as a linear
//! two-point boundary-value problem, and the restart experiment showing it
//! is not time-consistent.
//!
//! With `z = (x, p2, y, p1)` the optimality system is `ż = Mz` with
//!
//! ```text
//! ẋ  =  A x − B1²/R1 p1 − B2²/R2 p2
//! ṗ2 = −A p2 − Q2 x
//! ẏ  =  A y + B2²/R2 p1
//! ṗ1 = −A p1 + Q2 y − Q1 x
//! ```
//!
//! and `x(0) = x0`, `y(0) = 0`, `p1(T) = G1 x(T) − G2 y(T)`, `p2(T) = G2 x(T)`.
//! The BVP is solved by shooting on `(p2(0), p1(0))` through the RK4
//! fundamental matrix of the linear system.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeGrid;

const X: usize = 0;
const P2: usize = 1;
const Y: usize = 2;
const P1: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example11Spec {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub q1: f64,
    pub q2: f64,
    pub r1: f64,
    pub r2: f64,
    pub g1: f64,
    pub g2: f64,
    pub horizon: f64,
    pub x0: f64,
}

impl Example11Spec {
    /// `A = 0`, every other constant `1`, `T = 1`, `x0 = 1`.
    pub fn unit() -> Self {
        Example11Spec {
            a: 0.0,
            b1: 1.0,
            b2: 1.0,
            q1: 1.0,
            q2: 1.0,
            r1: 1.0,
            r2: 1.0,
            g1: 1.0,
            g2: 1.0,
            horizon: 1.0,
            x0: 1.0,
        }
    }

    pub fn with_x0(self, x0: f64) -> Self {
        Example11Spec { x0, ..self }
    }

    /// Structural requirements; `x0 = 0` is allowed and yields the zero
    /// solution.
    pub fn check(&self) -> Result<()> {
        let values = [
            self.a, self.b1, self.b2, self.q1, self.q2, self.r1, self.r2, self.g1, self.g2, self.horizon, self.x0,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("example constants must be finite".into()));
        }
        let mut problems = Vec::new();
        for (name, v) in [("R1", self.r1), ("R2", self.r2), ("G1", self.g1), ("G2", self.g2), ("Q1", self.q1)] {
            if v <= 0.0 {
                problems.push(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [("B1", self.b1), ("B2", self.b2)] {
            if v == 0.0 {
                problems.push(format!("{name} must be nonzero"));
            }
        }
        if self.horizon <= 0.0 {
            problems.push(format!("horizon {} must be positive", self.horizon));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Assumption(problems))
        }
    }

    /// Whether the time-inconsistency argument applies (it needs `x0 ≠ 0`).
    pub fn is_witness(&self) -> bool {
        self.check().is_ok() && self.x0 != 0.0
    }

    pub fn system_matrix(&self) -> Matrix4<f64> {
        let s1 = self.b1 * self.b1 / self.r1;
        let s2 = self.b2 * self.b2 / self.r2;
        let a = self.a;
        #[rustfmt::skip]
        let m = Matrix4::new(
            a,        -s2,  0.0,     -s1,
            -self.q2, -a,   0.0,     0.0,
            0.0,      0.0,  a,       s2,
            -self.q1, 0.0,  self.q2, -a,
        );
        m
    }
}

/// One RK4 step of `ż = Mz`, which for a linear system is the degree-4
/// Taylor polynomial of `exp(hM)`.
pub fn rk4_step_matrix(m: &Matrix4<f64>, h: f64) -> Matrix4<f64> {
    let hm = m * h;
    let hm2 = hm * hm;
    let hm3 = hm2 * hm;
    let hm4 = hm3 * hm;
    Matrix4::identity() + hm + hm2 / 2.0 + hm3 / 6.0 + hm4 / 24.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpbvpSolution {
    pub grid: TimeGrid,
    /// Absolute time of the first node.
    pub t_start: f64,
    pub x_star: Vec<f64>,
    pub p2_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub p1_star: Vec<f64>,
    /// `u* = −B1 p1* / R1`.
    pub u_star: Vec<f64>,
    /// `v* = −B2 p2* / R2`.
    pub v_star: Vec<f64>,
    pub boundary_residual: f64,
}

impl TpbvpSolution {
    pub fn time(&self, i: usize) -> f64 {
        self.t_start + self.grid.node(i)
    }

    pub fn state(&self, i: usize) -> Vector4<f64> {
        Vector4::new(self.x_star[i], self.p2_star[i], self.y_star[i], self.p1_star[i])
    }

    /// Largest component of `|z|` over all nodes.
    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.state(i).amax()).fold(0.0, f64::max)
    }
}

pub fn solve_open_loop_fbsde(spec: &Example11Spec, grid: &TimeGrid) -> Result<TpbvpSolution> {
    spec.check()?;
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon.max(1.0) {
        return Err(Error::Invalid(format!(
            "grid horizon {} does not match the example horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    let step = rk4_step_matrix(&spec.system_matrix(), grid.dt());
    shoot(spec, spec.x0, &step, *grid, 0.0)
}

/// Shooting for `(p2(0), p1(0))` from the start state `x(0) = x_start`,
/// `y(0) = 0`, then forward propagation with the same step matrix.
fn shoot(
    spec: &Example11Spec,
    x_start: f64,
    step: &Matrix4<f64>,
    grid: TimeGrid,
    t_start: f64,
) -> Result<TpbvpSolution> {
    let steps = grid.steps();
    let mut phi = Matrix4::identity();
    for _ in 0..steps {
        phi = step * phi;
    }
    // Terminal conditions as ℓ_kᵀ z(T) = 0.
    let mut l1 = Vector4::zeros();
    l1[P1] = 1.0;
    l1[X] = -spec.g1;
    l1[Y] = spec.g2;
    let mut l2 = Vector4::zeros();
    l2[P2] = 1.0;
    l2[X] = -spec.g2;
    let rows = [l1.transpose() * phi, l2.transpose() * phi];
    let shooting = Matrix2::new(rows[0][P2], rows[0][P1], rows[1][P2], rows[1][P1]);
    let rhs = Vector2::new(-rows[0][X] * x_start, -rows[1][X] * x_start);
    let det = shooting.determinant();
    let scale = shooting.abs().max().max(1.0);
    if det.abs() <= 1e-12 * scale * scale {
        return Err(Error::Degenerate(format!("shooting matrix is singular (det = {det:e})")));
    }
    let costates = shooting
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("shooting matrix is singular".into()))?;

    let mut z = Vector4::new(x_start, costates[0], 0.0, costates[1]);
    let mut sol = TpbvpSolution {
        grid,
        t_start,
        x_star: Vec::with_capacity(steps + 1),
        p2_star: Vec::with_capacity(steps + 1),
        y_star: Vec::with_capacity(steps + 1),
        p1_star: Vec::with_capacity(steps + 1),
        u_star: Vec::with_capacity(steps + 1),
        v_star: Vec::with_capacity(steps + 1),
        boundary_residual: 0.0,
    };
    for i in 0..=steps {
        if i > 0 {
            z = step * z;
        }
        sol.x_star.push(z[X]);
        sol.p2_star.push(z[P2]);
        sol.y_star.push(z[Y]);
        sol.p1_star.push(z[P1]);
        sol.u_star.push(-spec.b1 * z[P1] / spec.r1);
        sol.v_star.push(-spec.b2 * z[P2] / spec.r2);
    }
    let zt = sol.state(steps);
    sol.boundary_residual = [
        (sol.x_star[0] - x_start).abs(),
        sol.y_star[0].abs(),
        (zt[P1] - (spec.g1 * zt[X] - spec.g2 * zt[Y])).abs(),
        (zt[P2] - spec.g2 * zt[X]).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(sol)
}

/// Central-difference residual `max_i |(z_{i+1} − z_{i−1})/2dt − M z_i|`
/// over interior nodes.
pub fn ode_residual(sol: &TpbvpSolution, spec: &Example11Spec) -> f64 {
    let m = spec.system_matrix();
    let dt = sol.grid.dt();
    (1..sol.grid.steps())
        .map(|i| ((sol.state(i + 1) - sol.state(i - 1)) / (2.0 * dt) - m * sol.state(i)).amax())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartReport {
    pub t_index: usize,
    pub t_tilde: f64,
    /// `|y*(t̃)|` from the original solve.
    pub y_at_split: f64,
    /// `sup |ũ* − u*|` on `[t̃, T]`.
    pub control_deviation: f64,
    /// `sup |ṽ* − v*|` on `[t̃, T]`.
    pub follower_deviation: f64,
    pub original: TpbvpSolution,
    pub restarted: TpbvpSolution,
}

/// Re-solves the problem on `[t̃, T]` from `x*(t̃)` with a fresh `y(t̃) = 0`
/// and compares the controls with the original ones on the overlap.
pub fn restart_experiment(spec: &Example11Spec, grid: &TimeGrid, t_index: usize) -> Result<RestartReport> {
    let original = solve_open_loop_fbsde(spec, grid)?;
    restart_from(spec, grid, original, t_index)
}

fn restart_from(
    spec: &Example11Spec,
    grid: &TimeGrid,
    original: TpbvpSolution,
    t_index: usize,
) -> Result<RestartReport> {
    if t_index >= grid.steps() {
        return Err(Error::Invalid(format!(
            "restart node {t_index} must be below N = {}",
            grid.steps()
        )));
    }
    // Same step as the original grid so that t̃ = 0 reproduces it exactly.
    let step = rk4_step_matrix(&spec.system_matrix(), grid.dt());
    let tail = grid.tail(t_index)?;
    let restarted = shoot(spec, original.x_star[t_index], &step, tail, grid.node(t_index))?;
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    Ok(RestartReport {
        t_index,
        t_tilde: grid.node(t_index),
        y_at_split: original.y_star[t_index].abs(),
        control_deviation: sup(&restarted.u_star, &original.u_star[t_index..]),
        follower_deviation: sup(&restarted.v_star, &original.v_star[t_index..]),
        original,
        restarted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t_index: usize,
    pub t_tilde: f64,
    pub y_at_split: f64,
    pub control_deviation: f64,
}

/// Restart experiment at every interior node.
pub fn restart_sweep(spec: &Example11Spec, grid: &TimeGrid) -> Result<Vec<SweepPoint>> {
    let original = solve_open_loop_fbsde(spec, grid)?;
    (1..grid.steps())
        .into_par_iter()
        .map(|k| {
            let r = restart_from(spec, grid, original.clone(), k)?;
            Ok(SweepPoint {
                t_index: k,
                t_tilde: r.t_tilde,
                y_at_split: r.y_at_split,
                control_deviation: r.control_deviation,
            })
        })
        .collect()
}
