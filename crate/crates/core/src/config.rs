//! Game specification files in TOML or JSON.
//!
//! ```toml
//! horizon_T = 10.0
//! delta = 0.15
//! x0 = [-48.16]          # optional initial state
//! A = 0.03               # scalars fill a 1×1 matrix
//! B1 = [[0.05]]          # or row-major nested arrays
//! R1 = 0.15              # R1 and R2 are required
//! R2 = 0.19
//! G1 = 1.0               # every other coefficient defaults to zero
//! G2 = 1.0
//!
//! [dims]
//! n = 1
//! m1 = 1
//! m2 = 1
//! ```
//!
//! The format is chosen by file extension (`.json` for JSON, anything else
//! is read as TOML).

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{Coefficients, Dims, GameSpec};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Row(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixValue {
    fn to_matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Mat> {
        let shape_error = |got: String| Error::Parse(format!("{name} must be {rows}×{cols}, got {got}"));
        match self {
            MatrixValue::Scalar(x) if rows == 1 && cols == 1 => Ok(Mat::from_element(1, 1, *x)),
            MatrixValue::Scalar(_) => Err(shape_error("a scalar".into())),
            MatrixValue::Row(v) if rows == 1 && v.len() == cols => Ok(Mat::from_row_slice(1, cols, v)),
            MatrixValue::Row(v) if cols == 1 && v.len() == rows => Ok(Mat::from_column_slice(rows, 1, v)),
            MatrixValue::Row(v) => Err(shape_error(format!("a flat array of length {}", v.len()))),
            MatrixValue::Rows(r) => {
                if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                    let widths: Vec<usize> = r.iter().map(Vec::len).collect();
                    return Err(shape_error(format!("{} rows of widths {widths:?}", r.len())));
                }
                Ok(Mat::from_fn(rows, cols, |i, j| r[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub dims: Dims,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    pub delta: f64,
    #[serde(rename = "A")]
    pub a: Option<MatrixValue>,
    #[serde(rename = "B1")]
    pub b1: Option<MatrixValue>,
    #[serde(rename = "B2")]
    pub b2: Option<MatrixValue>,
    #[serde(rename = "C")]
    pub c: Option<MatrixValue>,
    #[serde(rename = "D1")]
    pub d1: Option<MatrixValue>,
    #[serde(rename = "D2")]
    pub d2: Option<MatrixValue>,
    #[serde(rename = "Q1")]
    pub q1: Option<MatrixValue>,
    #[serde(rename = "Q2")]
    pub q2: Option<MatrixValue>,
    #[serde(rename = "R1")]
    pub r1: MatrixValue,
    #[serde(rename = "R2")]
    pub r2: MatrixValue,
    #[serde(rename = "G1")]
    pub g1: Option<MatrixValue>,
    #[serde(rename = "G2")]
    pub g2: Option<MatrixValue>,
    pub x0: Option<MatrixValue>,
}

/// A parsed specification with its optional initial state.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: GameSpec,
    pub x0: Option<Vector>,
}

impl GameConfig {
    pub fn into_spec(self) -> Result<LoadedSpec> {
        let d = self.dims;
        d.check()?;
        let get = |value: &Option<MatrixValue>, name: &str, rows: usize, cols: usize| -> Result<Mat> {
            match value {
                Some(v) => v.to_matrix(name, rows, cols),
                None => Ok(Mat::zeros(rows, cols)),
            }
        };
        let coefficients = Coefficients {
            a: get(&self.a, "A", d.n, d.n)?,
            b1: get(&self.b1, "B1", d.n, d.m1)?,
            b2: get(&self.b2, "B2", d.n, d.m2)?,
            c: get(&self.c, "C", d.n, d.n)?,
            d1: get(&self.d1, "D1", d.n, d.m1)?,
            d2: get(&self.d2, "D2", d.n, d.m2)?,
            q1: get(&self.q1, "Q1", d.n, d.n)?,
            q2: get(&self.q2, "Q2", d.n, d.n)?,
            r1: self.r1.to_matrix("R1", d.m1, d.m1)?,
            r2: self.r2.to_matrix("R2", d.m2, d.m2)?,
        };
        let spec = GameSpec::constant(
            d,
            self.horizon,
            coefficients,
            get(&self.g1, "G1", d.n, d.n)?,
            get(&self.g2, "G2", d.n, d.n)?,
            self.delta,
        );
        let x0 = match &self.x0 {
            Some(v) => Some(Vector::from_column_slice(v.to_matrix("x0", d.n, 1)?.as_slice())),
            None => None,
        };
        Ok(LoadedSpec { spec, x0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn parse_spec(text: &str, format: Format) -> Result<LoadedSpec> {
    let config: GameConfig = match format {
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
    };
    config.into_spec()
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<LoadedSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text, Format::from_path(path))
}
