//! Game description: dimensions, coefficients, time grid and the standing
//! positivity assumptions on the weights.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, min_eigenvalue, symmetrize, Mat};

/// Tolerance on the minimum eigenvalue for positive semidefinite weights.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Leader control dimension.
    pub m1: usize,
    /// Follower control dimension.
    pub m2: usize,
}

impl Dims {
    pub fn new(n: usize, m1: usize, m2: usize) -> Result<Self> {
        let dims = Dims { n, m1, m2 };
        dims.check()?;
        Ok(dims)
    }

    pub fn scalar() -> Self {
        Dims { n: 1, m1: 1, m2: 1 }
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.m1 == 0 || self.m2 == 0 {
            return Err(Error::Invalid(format!(
                "dimensions must be positive, got n={}, m1={}, m2={}",
                self.n, self.m1, self.m2
            )));
        }
        Ok(())
    }
}

/// Uniform grid `t_i = i·dt`, `i = 0..=N`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Invalid("grid needs at least one subinterval".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid {
            steps,
            horizon,
            dt: horizon / steps as f64,
        })
    }

    /// Number of subintervals `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Node `t_i`; the last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            i as f64 * self.dt
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Sub-grid covering `[t_start, T]` with the same step.
    pub fn tail(&self, start: usize) -> Result<TimeGrid> {
        if start >= self.steps {
            return Err(Error::Invalid(format!(
                "tail start {start} must be below N = {}",
                self.steps
            )));
        }
        TimeGrid::new(self.horizon - self.node(start), self.steps - start)
    }
}

/// Coefficient values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c: Mat,
    pub d1: Mat,
    pub d2: Mat,
    pub q1: Mat,
    pub q2: Mat,
    pub r1: Mat,
    pub r2: Mat,
}

impl Coefficients {
    /// All-zero coefficients except `R1 = R2 = I`.
    pub fn zeros(dims: Dims) -> Self {
        let Dims { n, m1, m2 } = dims;
        Coefficients {
            a: Mat::zeros(n, n),
            b1: Mat::zeros(n, m1),
            b2: Mat::zeros(n, m2),
            c: Mat::zeros(n, n),
            d1: Mat::zeros(n, m1),
            d2: Mat::zeros(n, m2),
            q1: Mat::zeros(n, n),
            q2: Mat::zeros(n, n),
            r1: Mat::identity(m1, m1),
            r2: Mat::identity(m2, m2),
        }
    }

    /// Scalar game with every coefficient a plain number.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        a: f64,
        b1: f64,
        b2: f64,
        c: f64,
        d1: f64,
        d2: f64,
        q1: f64,
        q2: f64,
        r1: f64,
        r2: f64,
    ) -> Self {
        let s = |x| Mat::from_element(1, 1, x);
        Coefficients {
            a: s(a),
            b1: s(b1),
            b2: s(b2),
            c: s(c),
            d1: s(d1),
            d2: s(d2),
            q1: s(q1),
            q2: s(q2),
            r1: s(r1),
            r2: s(r2),
        }
    }

    fn entries(&self, dims: Dims) -> [(&'static str, &Mat, usize, usize); 10] {
        let Dims { n, m1, m2 } = dims;
        [
            ("A", &self.a, n, n),
            ("B1", &self.b1, n, m1),
            ("B2", &self.b2, n, m2),
            ("C", &self.c, n, n),
            ("D1", &self.d1, n, m1),
            ("D2", &self.d2, n, m2),
            ("Q1", &self.q1, n, n),
            ("Q2", &self.q2, n, n),
            ("R1", &self.r1, m1, m1),
            ("R2", &self.r2, m2, m2),
        ]
    }

    /// Shape and finiteness check; `node` is reported in data errors.
    pub fn check(&self, dims: Dims, node: usize) -> Result<()> {
        for (name, m, rows, cols) in self.entries(dims) {
            check_shape(name, m, rows, cols)?;
        }
        for (name, m, _, _) in self.entries(dims) {
            if !all_finite(m) {
                return Err(Error::NonFinite {
                    coefficient: name,
                    node,
                });
            }
        }
        Ok(())
    }

    fn symmetrized(mut self) -> Self {
        self.q1 = symmetrize(&self.q1);
        self.q2 = symmetrize(&self.q2);
        self.r1 = symmetrize(&self.r1);
        self.r2 = symmetrize(&self.r2);
        self
    }
}

pub(crate) fn check_shape(name: &'static str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape {
            coefficient: name,
            expected_rows: rows,
            expected_cols: cols,
            got_rows: m.nrows(),
            got_cols: m.ncols(),
        });
    }
    Ok(())
}

/// Source of time-dependent coefficients.
pub trait CoefficientProvider: Send + Sync {
    fn evaluate(&self, t: f64) -> std::result::Result<Coefficients, String>;
}

/// Time-invariant coefficients.
#[derive(Debug, Clone)]
pub struct ConstantCoefficients(pub Coefficients);

impl CoefficientProvider for ConstantCoefficients {
    fn evaluate(&self, _t: f64) -> std::result::Result<Coefficients, String> {
        Ok(self.0.clone())
    }
}

/// Coefficients given by a closure of time.
pub struct FnCoefficients<F>(pub F);

impl<F> CoefficientProvider for FnCoefficients<F>
where
    F: Fn(f64) -> Coefficients + Send + Sync,
{
    fn evaluate(&self, t: f64) -> std::result::Result<Coefficients, String> {
        Ok((self.0)(t))
    }
}

/// Full description of the two-player LQ game on `[0, T]`.
#[derive(Clone)]
pub struct GameSpec {
    pub dims: Dims,
    pub horizon: f64,
    provider: Arc<dyn CoefficientProvider>,
    constant: Option<Coefficients>,
    pub g1: Mat,
    pub g2: Mat,
    /// Positivity margin for `R1, R2 ⪰ δI`.
    pub delta: f64,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("constant", &self.constant)
            .field("g1", &self.g1)
            .field("g2", &self.g2)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

impl GameSpec {
    pub fn constant(
        dims: Dims,
        horizon: f64,
        coefficients: Coefficients,
        g1: Mat,
        g2: Mat,
        delta: f64,
    ) -> Self {
        GameSpec {
            dims,
            horizon,
            provider: Arc::new(ConstantCoefficients(coefficients.clone())),
            constant: Some(coefficients),
            g1,
            g2,
            delta,
        }
    }

    pub fn with_provider(
        dims: Dims,
        horizon: f64,
        provider: impl CoefficientProvider + 'static,
        g1: Mat,
        g2: Mat,
        delta: f64,
    ) -> Self {
        GameSpec {
            dims,
            horizon,
            provider: Arc::new(provider),
            constant: None,
            g1,
            g2,
            delta,
        }
    }

    /// The coefficient set when the game is time-invariant.
    pub fn constant_coefficients(&self) -> Option<&Coefficients> {
        self.constant.as_ref()
    }

    /// Evaluates, checks and symmetrizes the coefficients at time `t`.
    /// `node` only labels errors.
    pub fn coefficients_at(&self, t: f64, node: usize) -> Result<Coefficients> {
        let c = self
            .provider
            .evaluate(t)
            .map_err(|message| Error::Provider { node, message })?;
        c.check(self.dims, node)?;
        Ok(c.symmetrized())
    }

    fn check_terminal(&self, node: usize) -> Result<()> {
        let n = self.dims.n;
        check_shape("G1", &self.g1, n, n)?;
        check_shape("G2", &self.g2, n, n)?;
        for (name, g) in [("G1", &self.g1), ("G2", &self.g2)] {
            if !all_finite(g) {
                return Err(Error::NonFinite {
                    coefficient: name,
                    node,
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }
}

/// Coefficients sampled at every node of a grid.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub dims: Dims,
    pub grid: TimeGrid,
    pub nodes: Vec<Coefficients>,
    pub g1: Mat,
    pub g2: Mat,
    pub delta: f64,
}

impl CoefficientTable {
    pub fn at(&self, i: usize) -> &Coefficients {
        &self.nodes[i]
    }
}

/// Samples every coefficient at the grid nodes, symmetrizing the weights.
pub fn sample_coefficients(spec: &GameSpec, grid: &TimeGrid) -> Result<CoefficientTable> {
    spec.dims.check()?;
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon.abs().max(1.0) {
        return Err(Error::Invalid(format!(
            "grid horizon {} does not match spec horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    spec.check_terminal(grid.steps())?;
    let nodes = match &spec.constant {
        Some(c) => {
            c.check(spec.dims, 0)?;
            vec![c.clone().symmetrized(); grid.len()]
        }
        None => (0..grid.len())
            .map(|i| spec.coefficients_at(grid.node(i), i))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(CoefficientTable {
        dims: spec.dims,
        grid: *grid,
        nodes,
        g1: symmetrize(&spec.g1),
        g2: symmetrize(&spec.g2),
        delta: spec.delta,
    })
}

/// Per-node minimum eigenvalues of the weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeEigenvalues {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
    pub r1_minus_delta: f64,
    pub r2_minus_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub nodes: Vec<NodeEigenvalues>,
    pub g1: f64,
    pub g2: f64,
    pub delta: f64,
    pub violations: Vec<String>,
    pub valid: bool,
}

/// Checks the weight positivity assumptions at every grid node.
///
/// Structural and data problems (wrong shapes, non-finite entries) are
/// errors; assumption violations are reported in the returned value.
pub fn validate_spec(spec: &GameSpec, grid: &TimeGrid) -> Result<ValidationReport> {
    let table = sample_coefficients(spec, grid)?;
    Ok(validate_table(&table))
}

pub fn validate_table(table: &CoefficientTable) -> ValidationReport {
    let delta = table.delta;
    let mut violations = Vec::new();
    if !(delta.is_finite() && delta > 0.0) {
        violations.push(format!("delta must be positive, got {delta}"));
    }
    let shift = |m: &Mat| m - Mat::identity(m.nrows(), m.ncols()) * delta;
    let nodes: Vec<NodeEigenvalues> = table
        .nodes
        .iter()
        .enumerate()
        .map(|(i, c)| NodeEigenvalues {
            t: table.grid.node(i),
            q1: min_eigenvalue(&c.q1),
            q2: min_eigenvalue(&c.q2),
            r1_minus_delta: min_eigenvalue(&shift(&c.r1)),
            r2_minus_delta: min_eigenvalue(&shift(&c.r2)),
        })
        .collect();

    let mut first_breach = |label: &str, values: &mut dyn Iterator<Item = f64>| {
        if let Some((i, v)) = values.enumerate().find(|(_, v)| *v < -PSD_TOL) {
            violations.push(format!("{label} violated at node {i} (min eigenvalue {v:e})"));
        }
    };
    first_breach("Q1 ⪰ 0", &mut nodes.iter().map(|e| e.q1));
    first_breach("Q2 ⪰ 0", &mut nodes.iter().map(|e| e.q2));
    first_breach("R1 ⪰ δI", &mut nodes.iter().map(|e| e.r1_minus_delta));
    first_breach("R2 ⪰ δI", &mut nodes.iter().map(|e| e.r2_minus_delta));

    let g1 = min_eigenvalue(&table.g1);
    let g2 = min_eigenvalue(&table.g2);
    if g1 < -PSD_TOL {
        violations.push(format!("G1 ⪰ 0 violated (min eigenvalue {g1:e})"));
    }
    if g2 < -PSD_TOL {
        violations.push(format!("G2 ⪰ 0 violated (min eigenvalue {g2:e})"));
    }

    ValidationReport {
        nodes,
        g1,
        g2,
        delta,
        valid: violations.is_empty(),
        violations,
    }
}

impl ValidationReport {
    /// Turns a report with violations into [`Error::Assumption`].
    pub fn into_result(self) -> Result<Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(Error::Assumption(self.violations))
        }
    }
}
