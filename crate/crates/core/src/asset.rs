//! Two-manager asset problem mapped onto the scalar game.
//!
//! Wealth follows `dX = [rX + Σ(μ_k − r)u_k]ds + Σσ_k u_k dW`; both managers
//! target `z` and pay `σ_k u_k²`. With the shifted state
//! `X̃ = X − z·e^{−r(T−s)}` the problem is the homogeneous game with
//! `A = r`, `C = 0`, `B_k = μ_k − r`, `D_k = R_k = σ_k`, `Q_k = 0`, `G_k = 1`.
//!
//! The application cost has no `½` factor, so application values are twice
//! the canonical ones: the follower's value is `P2(t)·X̃²`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{sample_coefficients, Coefficients, Dims, GameSpec, TimeGrid};
use crate::riccati::{solve_ere_table, EreSolution};
use crate::sim::{simulate_table, PathEnsemble};

/// Seed used by the figure reproduction when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Sample paths drawn for the figures by default.
pub const DEFAULT_PATHS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub x0: f64,
    pub z: f64,
    pub r: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub horizon: f64,
}

impl AssetSpec {
    /// Reference market: `x0 = 100`, `z = 200`, `r = 0.03`, `μ = (0.08, 0.10)`,
    /// `σ = (0.15, 0.19)`, `T = 10`.
    pub fn table2() -> Self {
        AssetSpec {
            x0: 100.0,
            z: 200.0,
            r: 0.03,
            mu1: 0.08,
            mu2: 0.10,
            sigma1: 0.15,
            sigma2: 0.19,
            horizon: 10.0,
        }
    }

    /// Validates the market. `allow_low_target` skips `z ≥ x0·e^{rT}`.
    pub fn check(&self, allow_low_target: bool) -> Result<()> {
        let values = [self.x0, self.z, self.r, self.mu1, self.mu2, self.sigma1, self.sigma2, self.horizon];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("asset parameters must be finite".into()));
        }
        let mut problems = Vec::new();
        if self.sigma1 <= 0.0 {
            problems.push(format!("sigma1 = {} must be positive", self.sigma1));
        }
        if self.sigma2 <= 0.0 {
            problems.push(format!("sigma2 = {} must be positive", self.sigma2));
        }
        if self.horizon <= 0.0 {
            problems.push(format!("horizon {} must be positive", self.horizon));
        }
        let floor = self.x0 * (self.r * self.horizon).exp();
        if !allow_low_target && self.z < floor {
            problems.push(format!("target z = {} is below x0·exp(rT) = {floor}", self.z));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Assumption(problems))
        }
    }

    /// Discounted target `z·e^{−r(T−t)}`.
    pub fn target_at(&self, t: f64) -> f64 {
        self.z * (-self.r * (self.horizon - t)).exp()
    }

    /// `x0 − z·e^{−rT}`.
    pub fn shifted_initial_state(&self) -> f64 {
        self.x0 - self.target_at(0.0)
    }
}

pub fn asset_to_game(asset: &AssetSpec) -> Result<GameSpec> {
    asset_to_game_with(asset, false)
}

pub fn asset_to_game_with(asset: &AssetSpec, allow_low_target: bool) -> Result<GameSpec> {
    asset.check(allow_low_target)?;
    let coefficients = Coefficients::scalar(
        asset.r,
        asset.mu1 - asset.r,
        asset.mu2 - asset.r,
        0.0,
        asset.sigma1,
        asset.sigma2,
        0.0,
        0.0,
        asset.sigma1,
        asset.sigma2,
    );
    Ok(GameSpec::constant(
        Dims::scalar(),
        asset.horizon,
        coefficients,
        Mat::identity(1, 1),
        Mat::identity(1, 1),
        asset.sigma1.min(asset.sigma2),
    ))
}

/// Equilibrium investments `u_k = Θ_k(t)·(X − z·e^{−r(T−t)})`.
pub fn shifted_controls(sol: &EreSolution, asset: &AssetSpec, t_index: usize, wealth: f64) -> (f64, f64) {
    let shifted = wealth - asset.target_at(sol.grid.node(t_index));
    (
        sol.theta1_bar[t_index][(0, 0)] * shifted,
        sol.theta2_star[t_index][(0, 0)] * shifted,
    )
}

/// Discounted target on the grid.
///
/// `Exponential` is `z·e^{−r(T−t_i)}`. `EulerConsistent` is
/// `z·(1 + r·dt)^{−(N−i)}`, the target the Euler scheme itself carries
/// forward; with it the shifted and direct wealth simulations agree to
/// round-off, while `Exponential` agrees to `O(dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TargetDiscount {
    #[default]
    Exponential,
    EulerConsistent,
}

impl TargetDiscount {
    pub fn target(&self, asset: &AssetSpec, grid: &TimeGrid, i: usize) -> f64 {
        match self {
            TargetDiscount::Exponential => asset.target_at(grid.node(i)),
            TargetDiscount::EulerConsistent => {
                asset.z * (1.0 + asset.r * grid.dt()).powi(-((grid.steps() - i) as i32))
            }
        }
    }
}

/// Wealth and investments per path, recovered from a shifted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPaths {
    pub grid: TimeGrid,
    pub num_paths: usize,
    pub wealth: Vec<Vec<f64>>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
}

/// `X = X̃ + target`, `u_k = Θ_k X̃`.
pub fn wealth_from_ensemble(ensemble: &PathEnsemble, asset: &AssetSpec, discount: TargetDiscount) -> WealthPaths {
    let grid = ensemble.grid;
    let targets: Vec<f64> = (0..grid.len()).map(|i| discount.target(asset, &grid, i)).collect();
    let mut paths = WealthPaths {
        grid,
        num_paths: ensemble.num_paths,
        wealth: Vec::with_capacity(ensemble.num_paths),
        u1: Vec::with_capacity(ensemble.num_paths),
        u2: Vec::with_capacity(ensemble.num_paths),
    };
    for p in 0..ensemble.num_paths {
        let shifted: Vec<f64> = (0..grid.len()).map(|i| ensemble.state(p, i)[0]).collect();
        paths.wealth.push(shifted.iter().zip(&targets).map(|(x, h)| x + h).collect());
        paths.u1.push(shifted.iter().zip(&ensemble.theta1).map(|(x, g)| g[(0, 0)] * x).collect());
        paths.u2.push(shifted.iter().zip(&ensemble.theta2).map(|(x, g)| g[(0, 0)] * x).collect());
    }
    paths
}

/// Euler–Maruyama on the original wealth equation with the affine
/// equilibrium investments, driven by the increments of `ensemble`.
pub fn simulate_wealth_direct(
    asset: &AssetSpec,
    ensemble: &PathEnsemble,
    discount: TargetDiscount,
) -> Vec<Vec<f64>> {
    let grid = ensemble.grid;
    let dt = grid.dt();
    let (b1, b2) = (asset.mu1 - asset.r, asset.mu2 - asset.r);
    (0..ensemble.num_paths)
        .map(|p| {
            let mut x = asset.x0;
            let mut out = Vec::with_capacity(grid.len());
            out.push(x);
            for (i, dw) in ensemble.increments_of(p).iter().enumerate() {
                let shifted = x - discount.target(asset, &grid, i);
                let u1 = ensemble.theta1[i][(0, 0)] * shifted;
                let u2 = ensemble.theta2[i][(0, 0)] * shifted;
                x += (asset.r * x + b1 * u1 + b2 * u2) * dt + (asset.sigma1 * u1 + asset.sigma2 * u2) * dw;
                out.push(x);
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureSummary {
    pub steps: usize,
    pub num_paths: usize,
    pub seed: u64,
    pub p1_at_0: f64,
    pub p2_at_0: f64,
    pub theta1_at_0: f64,
    pub theta2_at_0: f64,
    pub min_p: f64,
    pub max_residual: f64,
    /// `|Θ̄1| < |Θ2*|` at every node.
    pub gain_ordering_holds: bool,
    pub shifted_initial_state: f64,
    /// `½P_k(0)·X̃(0)²`.
    pub canonical_leader_value: f64,
    pub canonical_follower_value: f64,
    /// `P_k(0)·X̃(0)²`.
    pub application_leader_value: f64,
    pub application_follower_value: f64,
    pub terminal_wealth: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FigureBundle {
    pub asset: AssetSpec,
    pub solution: EreSolution,
    pub paths: WealthPaths,
    pub summary: FigureSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FigureOptions {
    pub allow_low_target: bool,
    /// Simulation workers; `None` uses the global pool.
    pub workers: Option<usize>,
}

pub fn reproduce_figures(asset: &AssetSpec, grid: &TimeGrid, num_paths: usize, seed: u64) -> Result<FigureBundle> {
    reproduce_figures_with(asset, grid, num_paths, seed, FigureOptions::default())
}

pub fn reproduce_figures_with(
    asset: &AssetSpec,
    grid: &TimeGrid,
    num_paths: usize,
    seed: u64,
    options: FigureOptions,
) -> Result<FigureBundle> {
    let game = asset_to_game_with(asset, options.allow_low_target)?;
    let table = sample_coefficients(&game, grid)?;
    let solution = solve_ere_table(&table)?;
    let xi = asset.shifted_initial_state();
    let ensemble = simulate_table(
        &solution.gains(),
        &Vector::from_element(1, xi),
        &table,
        num_paths,
        seed,
        options.workers,
    )?;
    let paths = wealth_from_ensemble(&ensemble, asset, TargetDiscount::Exponential);

    let p1_at_0 = solution.p1[0][(0, 0)];
    let p2_at_0 = solution.p2[0][(0, 0)];
    let summary = FigureSummary {
        steps: grid.steps(),
        num_paths,
        seed,
        p1_at_0,
        p2_at_0,
        theta1_at_0: solution.theta1_bar[0][(0, 0)],
        theta2_at_0: solution.theta2_star[0][(0, 0)],
        min_p: solution
            .p1
            .iter()
            .chain(&solution.p2)
            .map(|p| p[(0, 0)])
            .fold(f64::INFINITY, f64::min),
        max_residual: solution.max_residual(),
        gain_ordering_holds: solution
            .theta1_bar
            .iter()
            .zip(&solution.theta2_star)
            .all(|(a, b)| a[(0, 0)].abs() < b[(0, 0)].abs()),
        shifted_initial_state: xi,
        canonical_leader_value: 0.5 * p1_at_0 * xi * xi,
        canonical_follower_value: 0.5 * p2_at_0 * xi * xi,
        application_leader_value: p1_at_0 * xi * xi,
        application_follower_value: p2_at_0 * xi * xi,
        terminal_wealth: paths.wealth.iter().map(|w| w[grid.steps()]).collect(),
    };
    Ok(FigureBundle {
        asset: *asset,
        solution,
        paths,
        summary,
    })
}

impl FigureBundle {
    /// `t,P1,P2` per node.
    pub fn write_fig1(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# P1(s) and P2(s); gnuplot: set datafile separator ','; plot using 1:2, using 1:3")?;
        writeln!(w, "t,P1,P2")?;
        let sol = &self.solution;
        for i in 0..sol.grid.len() {
            writeln!(w, "{},{},{}", sol.grid.node(i), sol.p1[i][(0, 0)], sol.p2[i][(0, 0)])?;
        }
        Ok(())
    }

    /// `path,t,X` per path and node.
    pub fn write_fig2(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# wealth X(s) per sample path, target z = {}; gnuplot: set datafile separator ','; plot using 2:3",
            self.asset.z
        )?;
        writeln!(w, "path,t,X")?;
        let grid = self.paths.grid;
        for (p, wealth) in self.paths.wealth.iter().enumerate() {
            for (i, x) in wealth.iter().enumerate() {
                writeln!(w, "{p},{},{x}", grid.node(i))?;
            }
        }
        Ok(())
    }

    /// `path,t,u1,u2` per path and node.
    pub fn write_fig3(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# investments u1(s), u2(s) per sample path; gnuplot: set datafile separator ','; plot using 2:3, using 2:4")?;
        writeln!(w, "path,t,u1,u2")?;
        let grid = self.paths.grid;
        for p in 0..self.paths.num_paths {
            for i in 0..grid.len() {
                writeln!(w, "{p},{},{},{}", grid.node(i), self.paths.u1[p][i], self.paths.u2[p][i])?;
            }
        }
        Ok(())
    }

    pub fn write_summary(&self, mut w: impl Write) -> std::io::Result<()> {
        let s = &self.summary;
        writeln!(w, "steps {}", s.steps)?;
        writeln!(w, "paths {}", s.num_paths)?;
        writeln!(w, "seed {}", s.seed)?;
        writeln!(w, "P1(0) {}", s.p1_at_0)?;
        writeln!(w, "P2(0) {}", s.p2_at_0)?;
        writeln!(w, "theta1(0) {}", s.theta1_at_0)?;
        writeln!(w, "theta2(0) {}", s.theta2_at_0)?;
        writeln!(w, "min P {}", s.min_p)?;
        writeln!(w, "max equilibrium residual {}", s.max_residual)?;
        writeln!(w, "|theta1| < |theta2| at every node {}", s.gain_ordering_holds)?;
        writeln!(w, "shifted initial state {}", s.shifted_initial_state)?;
        writeln!(w, "leader value (application) {}", s.application_leader_value)?;
        writeln!(w, "follower value (application) {}", s.application_follower_value)?;
        for (p, x) in s.terminal_wealth.iter().enumerate() {
            writeln!(w, "terminal wealth path {p} {x}")?;
        }
        Ok(())
    }
}
