//! Euler–Maruyama simulation of the closed-loop state and Monte Carlo cost
//! estimation.
//!
//! Brownian increments come from a counter-based stream keyed by
//! `(seed, path, step)`: ChaCha20 with the path index as stream id and the
//! step index as word position. A path's increments therefore do not depend
//! on how paths are scheduled across workers, and two simulations with the
//! same seed share increments path by path.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, Mat, Vector};
use crate::model::{sample_coefficients, CoefficientTable, GameSpec, TimeGrid};
use crate::riccati::{solve_follower_riccati_table, GainSchedule, Player};

const WORDS_PER_DRAW: u128 = 2;

/// Counter-based source of standard normal draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    /// Sequential stream for one path, starting at step 0.
    pub fn path_stream(&self, path: usize) -> PathStream {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        PathStream {
            rng,
            normal: standard_normal(),
        }
    }

    /// Uniform in `(0, 1)` at `(path, step)`, by random access.
    pub fn uniform(&self, path: usize, step: usize) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng.set_word_pos(step as u128 * WORDS_PER_DRAW);
        to_open_unit(rng.next_u64())
    }

    /// Standard normal at `(path, step)`, by random access.
    pub fn normal(&self, path: usize, step: usize) -> f64 {
        standard_normal().inverse_cdf(self.uniform(path, step))
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// 52 random bits mapped to the open interval `(0, 1)`.
fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

pub struct PathStream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl PathStream {
    pub fn next_uniform(&mut self) -> f64 {
        to_open_unit(self.rng.next_u64())
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_uniform();
        self.normal.inverse_cdf(u)
    }
}

/// Simulated closed-loop trajectories.
///
/// States and increments are stored flat; controls are recovered from the
/// stored gains as `u = Θ1X`, `v = Θ2X`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub num_paths: usize,
    pub seed: u64,
    pub n: usize,
    pub x0: Vector,
    pub theta1: Vec<Mat>,
    pub theta2: Vec<Mat>,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let start = (path * self.grid.len() + node) * self.n;
        &self.states[start..start + self.n]
    }

    pub fn state_vector(&self, path: usize, node: usize) -> Vector {
        Vector::from_column_slice(self.state(path, node))
    }

    /// Brownian increment on `[t_step, t_{step+1}]`.
    pub fn increment(&self, path: usize, step: usize) -> f64 {
        self.increments[path * self.grid.steps() + step]
    }

    pub fn increments_of(&self, path: usize) -> &[f64] {
        let steps = self.grid.steps();
        &self.increments[path * steps..(path + 1) * steps]
    }

    pub fn control_u(&self, path: usize, node: usize) -> Vector {
        &self.theta1[node] * self.state_vector(path, node)
    }

    pub fn control_v(&self, path: usize, node: usize) -> Vector {
        &self.theta2[node] * self.state_vector(path, node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_paths: usize,
    pub player: Player,
}

impl CostEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Row-major copy of a matrix for the inner loop.
fn row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn mat_vec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r * n..(r + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

pub fn simulate(
    gains: &GainSchedule,
    x0: &Vector,
    spec: &GameSpec,
    grid: &TimeGrid,
    num_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let table = sample_coefficients(spec, grid)?;
    simulate_table(gains, x0, &table, num_paths, seed, None)
}

/// Simulation on a pre-sampled table; `workers = None` uses the global
/// thread pool. The result is bit-identical for any worker count.
pub fn simulate_table(
    gains: &GainSchedule,
    x0: &Vector,
    table: &CoefficientTable,
    num_paths: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<PathEnsemble> {
    let n = table.dims.n;
    if x0.len() != n {
        return Err(Error::Invalid(format!("initial state has length {}, expected {n}", x0.len())));
    }
    if num_paths == 0 {
        return Err(Error::Invalid("num_paths must be positive".into()));
    }
    if gains.grid != table.grid {
        return Err(Error::Invalid("gain schedule grid differs from the game grid".into()));
    }
    gains.check(table.dims)?;
    let theta2 = match &gains.theta2 {
        Some(t) => t.clone(),
        None => solve_follower_riccati_table(&gains.theta1, table)?.theta2,
    };
    let grid = table.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    // Closed-loop drift and diffusion at the left node of every step.
    let (drift, diffusion): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..steps)
        .map(|i| {
            let c = table.at(i);
            let a = &c.a + &c.b1 * &gains.theta1[i] + &c.b2 * &theta2[i];
            let d = &c.c + &c.d1 * &gains.theta1[i] + &c.d2 * &theta2[i];
            (row_major(&a), row_major(&d))
        })
        .unzip();
    let rng = CounterRng::new(seed);

    let run_path = |path: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut stream = rng.path_stream(path);
        let mut states = Vec::with_capacity((steps + 1) * n);
        let mut increments = Vec::with_capacity(steps);
        states.extend(x0.iter().copied());
        let mut x = x0.as_slice().to_vec();
        let mut ax = vec![0.0; n];
        let mut cx = vec![0.0; n];
        for i in 0..steps {
            let dw = stream.next_normal() * sqrt_dt;
            mat_vec(&drift[i], &x, &mut ax);
            mat_vec(&diffusion[i], &x, &mut cx);
            for k in 0..n {
                x[k] += ax[k] * dt + cx[k] * dw;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation { path, node: i + 1 });
            }
            increments.push(dw);
            states.extend_from_slice(&x);
        }
        Ok((states, increments))
    };

    let paths: Vec<(Vec<f64>, Vec<f64>)> = match workers {
        None => (0..num_paths).into_par_iter().map(run_path).collect::<Result<_>>()?,
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(|| (0..num_paths).into_par_iter().map(run_path).collect::<Result<_>>())?,
    };

    let mut states = Vec::with_capacity(num_paths * (steps + 1) * n);
    let mut increments = Vec::with_capacity(num_paths * steps);
    for (s, w) in paths {
        states.extend(s);
        increments.extend(w);
    }
    Ok(PathEnsemble {
        grid,
        num_paths,
        seed,
        n,
        x0: x0.clone(),
        theta1: gains.theta1.clone(),
        theta2,
        states,
        increments,
    })
}

/// Realized cost of `player` on every path:
/// `½[Σ_i dt(⟨Q X_i, X_i⟩ + ⟨R w_i, w_i⟩) + ⟨G X_N, X_N⟩]` with `w` the
/// player's own control and the running sum over left nodes.
pub fn path_costs(ensemble: &PathEnsemble, table: &CoefficientTable, player: Player) -> Vec<f64> {
    let grid = ensemble.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let g = match player {
        Player::Player1 => &table.g1,
        Player::Player2 => &table.g2,
    };
    let own = match player {
        Player::Player1 => &ensemble.theta1,
        Player::Player2 => &ensemble.theta2,
    };
    // x ↦ xᵀ(Q + ΘᵀRΘ)x at each left node.
    let weights: Vec<Mat> = (0..steps)
        .map(|i| {
            let (q, r) = player.weights(table.at(i));
            q + own[i].transpose() * r * &own[i]
        })
        .collect();
    (0..ensemble.num_paths)
        .into_par_iter()
        .map(|p| {
            let running: Vec<f64> = (0..steps)
                .map(|i| {
                    let x = ensemble.state_vector(p, i);
                    x.dot(&(&weights[i] * &x))
                })
                .collect();
            let xt = ensemble.state_vector(p, steps);
            0.5 * (dt * pairwise_sum(&running) + xt.dot(&(g * &xt)))
        })
        .collect()
}

pub fn estimate_cost(ensemble: &PathEnsemble, spec: &GameSpec, player: Player) -> Result<CostEstimate> {
    let table = sample_coefficients(spec, &ensemble.grid)?;
    Ok(estimate_cost_table(ensemble, &table, player))
}

pub fn estimate_cost_table(ensemble: &PathEnsemble, table: &CoefficientTable, player: Player) -> CostEstimate {
    let costs = path_costs(ensemble, table, player);
    let (mean, std_error) = mean_and_std_error(&costs);
    CostEstimate {
        mean,
        std_error,
        num_paths: costs.len(),
        player,
    }
}

/// Sample mean and `s / √P` with the unbiased sample deviation.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let count = values.len();
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / count as f64;
    if count == 1 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&squares) / (count - 1) as f64;
    (mean, (variance / count as f64).sqrt())
}
