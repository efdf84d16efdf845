//! Global well-posedness classification.
//!
//! Three sufficient conditions guarantee that the equilibrium system has a
//! solution on the whole horizon:
//!
//! * `Case_i`: scalar game with `|D2|` bounded away from zero,
//! * `Case_ii`: scalar game with `D2 ≡ 0`,
//! * `Case_iii`: `D2 ≡ 0`, `B2(t)` of full row rank, `B2`, `R2` continuously
//!   differentiable and `S = B2 R2⁻¹ B2ᵀ ⪰ ν I` with `ν > 0`.
//!
//! Differentiability cannot be read off grid samples, so it is an explicit
//! attestation. A second-difference heuristic is reported as advisory only.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{min_eigenvalue, rank, spd_inverse, Mat};
use crate::model::{sample_coefficients, CoefficientTable, GameSpec, TimeGrid};

/// `‖D2‖` at or below this on every node counts as `D2 ≡ 0`.
pub const ZERO_D2_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    #[serde(rename = "Case_i")]
    CaseI,
    #[serde(rename = "Case_ii")]
    CaseII,
    #[serde(rename = "Case_iii")]
    CaseIII,
    Unclassified,
}

impl CaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseLabel::CaseI => "Case_i",
            CaseLabel::CaseII => "Case_ii",
            CaseLabel::CaseIII => "Case_iii",
            CaseLabel::Unclassified => "Unclassified",
        }
    }
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub case_label: CaseLabel,
    /// Scalar games only: `min_i |D2(t_i)|`.
    pub d2_lower_bound: Option<f64>,
    /// `ν = min_i λ_min(S(t_i))`; populated whenever `D2 ≡ 0`.
    pub s_min_eig: Option<f64>,
    /// Whether `rank B2(t_i) = n` at every node; populated whenever `D2 ≡ 0`.
    pub rank_ok: Option<bool>,
    pub smoothness_asserted: bool,
    /// Largest second difference of `B2` and `R2` across the grid, scaled by
    /// `dt²`; a large value hints at a non-smooth coefficient.
    pub smoothness_advisory: f64,
}

pub fn classify(spec: &GameSpec, grid: &TimeGrid, smoothness_asserted: bool) -> Result<WellPosednessReport> {
    let table = sample_coefficients(spec, grid)?;
    classify_table(&table, smoothness_asserted)
}

pub fn classify_table(table: &CoefficientTable, smoothness_asserted: bool) -> Result<WellPosednessReport> {
    let dims = table.dims;
    let scalar = dims.n == 1 && dims.m1 == 1 && dims.m2 == 1;
    let d2_zero = table.nodes.iter().all(|c| c.d2.norm() <= ZERO_D2_TOL);
    let d2_lower_bound = scalar.then(|| {
        table
            .nodes
            .iter()
            .map(|c| c.d2[(0, 0)].abs())
            .fold(f64::INFINITY, f64::min)
    });

    let (s_min_eig, rank_ok) = if d2_zero {
        let curve = s_curve_table(table)?;
        let nu = curve.iter().map(|&(_, e)| e).fold(f64::INFINITY, f64::min);
        let full_rank = table.nodes.iter().all(|c| rank(&c.b2) == dims.n);
        (Some(nu), Some(full_rank))
    } else {
        (None, None)
    };

    let case_label = if scalar && !d2_zero && d2_lower_bound.is_some_and(|d| d > ZERO_D2_TOL) {
        CaseLabel::CaseI
    } else if scalar && d2_zero {
        CaseLabel::CaseII
    } else if d2_zero && rank_ok == Some(true) && smoothness_asserted && s_min_eig.is_some_and(|nu| nu > 0.0) {
        CaseLabel::CaseIII
    } else {
        CaseLabel::Unclassified
    };

    Ok(WellPosednessReport {
        case_label,
        d2_lower_bound,
        s_min_eig,
        rank_ok,
        smoothness_asserted,
        smoothness_advisory: second_difference_bound(table),
    })
}

/// Per-node `(t, λ_min(B2 R2⁻¹ B2ᵀ))`.
pub fn s_curve(spec: &GameSpec, grid: &TimeGrid) -> Result<Vec<(f64, f64)>> {
    let table = sample_coefficients(spec, grid)?;
    s_curve_table(&table)
}

pub fn s_curve_table(table: &CoefficientTable) -> Result<Vec<(f64, f64)>> {
    table
        .nodes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r2_inv = spd_inverse(&c.r2, "R2", i)?;
            let s = &c.b2 * r2_inv * c.b2.transpose();
            Ok((table.grid.node(i), min_eigenvalue(&s)))
        })
        .collect()
}

fn second_difference_bound(table: &CoefficientTable) -> f64 {
    let dt = table.grid.dt();
    let second = |series: &[&Mat]| -> f64 {
        series
            .windows(3)
            .map(|w| (w[2] - w[1] * 2.0 + w[0]).norm() / (dt * dt))
            .fold(0.0, f64::max)
    };
    let b2: Vec<&Mat> = table.nodes.iter().map(|c| &c.b2).collect();
    let r2: Vec<&Mat> = table.nodes.iter().map(|c| &c.r2).collect();
    second(&b2).max(second(&r2))
}
