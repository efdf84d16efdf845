//! CSV output of solutions and ensembles, and gain schedules read back.
//!
//! Matrix entries are spread over columns named `<name>_<row>_<col>` in
//! column-major order. Floats use the shortest round-trip representation,
//! so files are byte-stable and parse back to the same values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Dims, TimeGrid};
use crate::riccati::{EreSolution, GainSchedule};
use crate::sim::{CostEstimate, PathEnsemble};

fn matrix_columns(name: &str, rows: usize, cols: usize) -> impl Iterator<Item = String> + '_ {
    (0..cols).flat_map(move |c| (0..rows).map(move |r| format!("{name}_{r}_{c}")))
}

fn push_matrix(row: &mut Vec<String>, m: &Mat) {
    row.extend(m.iter().map(|x| x.to_string()));
}

pub fn solution_header(dims: Dims) -> Vec<String> {
    let n = dims.n;
    let mut header = vec!["t".to_string()];
    header.extend(matrix_columns("P1", n, n));
    header.extend(matrix_columns("P2", n, n));
    header.extend(matrix_columns("theta1", dims.m1, n));
    header.extend(matrix_columns("theta2", dims.m2, n));
    for extra in ["min_eig_p1", "min_eig_p2", "min_eig_follower", "min_eig_leader", "residual"] {
        header.push(extra.to_string());
    }
    header
}

/// One row per node with `P1, P2, Θ̄1, Θ2*` and the node diagnostics.
pub fn write_solution(sol: &EreSolution, w: impl Write) -> Result<()> {
    let dims = Dims {
        n: sol.p1[0].nrows(),
        m1: sol.theta1_bar[0].nrows(),
        m2: sol.theta2_star[0].nrows(),
    };
    let mut out = csv::Writer::from_writer(w);
    out.write_record(solution_header(dims)).map_err(csv_error)?;
    for i in 0..sol.grid.len() {
        let mut row = vec![sol.grid.node(i).to_string()];
        push_matrix(&mut row, &sol.p1[i]);
        push_matrix(&mut row, &sol.p2[i]);
        push_matrix(&mut row, &sol.theta1_bar[i]);
        push_matrix(&mut row, &sol.theta2_star[i]);
        let d = &sol.diagnostics[i];
        for x in [d.min_eig_p1, d.min_eig_p2, d.min_eig_follower, d.min_eig_leader, d.residual] {
            row.push(x.to_string());
        }
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed `name_r_c` column: `(name, r, c)`.
fn parse_column(name: &str) -> Option<(&str, usize, usize)> {
    let mut parts = name.rsplitn(3, '_');
    let c = parts.next()?.parse().ok()?;
    let r = parts.next()?.parse().ok()?;
    Some((parts.next()?, r, c))
}

/// Shape and column positions of one matrix family in a header.
fn locate(header: &csv::StringRecord, name: &str) -> Option<(usize, usize, Vec<(usize, usize, usize)>)> {
    let cells: Vec<(usize, usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(k, h)| match parse_column(h) {
            Some((n, r, c)) if n == name => Some((k, r, c)),
            _ => None,
        })
        .collect();
    if cells.is_empty() {
        return None;
    }
    let rows = cells.iter().map(|x| x.1).max()? + 1;
    let cols = cells.iter().map(|x| x.2).max()? + 1;
    Some((rows, cols, cells))
}

/// Reads `t` and the `theta1_*` (and optionally `theta2_*`) columns.
///
/// The grid is rebuilt from the rows: `N` is the row count minus one and
/// `T` the last `t`. Without `theta2_*` columns the follower best-responds.
pub fn read_gain_schedule(r: impl Read) -> Result<GainSchedule> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    let t_col = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::Parse("gain file has no `t` column".into()))?;
    let (m1, n, theta1_cells) =
        locate(&header, "theta1").ok_or_else(|| Error::Parse("gain file has no theta1 columns".into()))?;
    if theta1_cells.len() != m1 * n {
        return Err(Error::Parse("theta1 columns do not form a full matrix".into()));
    }
    let theta2_layout = locate(&header, "theta2");
    if let Some((m2, n2, cells)) = &theta2_layout {
        if *n2 != n || cells.len() != m2 * n2 {
            return Err(Error::Parse("theta2 columns do not form an m2×n matrix".into()));
        }
    }

    let mut times = Vec::new();
    let mut theta1 = Vec::new();
    let mut theta2 = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let value = |k: usize| -> Result<f64> {
            let cell = record.get(k).unwrap_or("");
            cell.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{cell}` is not a number", line + 1)))
        };
        times.push(value(t_col)?);
        let mut g = Mat::zeros(m1, n);
        for &(k, r, c) in &theta1_cells {
            g[(r, c)] = value(k)?;
        }
        theta1.push(g);
        if let Some((m2, _, cells)) = &theta2_layout {
            let mut g = Mat::zeros(*m2, n);
            for &(k, r, c) in cells {
                g[(r, c)] = value(k)?;
            }
            theta2.push(g);
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse("gain file needs at least two rows".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::Parse(format!("gain file must start at t = 0, found {}", times[0])));
    }
    let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
    if let Some(i) = times.iter().enumerate().position(|(i, &t)| (t - grid.node(i)).abs() > 1e-9 * grid.horizon()) {
        return Err(Error::Parse(format!("row {} is off the uniform grid", i + 1)));
    }
    GainSchedule::new(grid, theta1, theta2_layout.map(|_| theta2))
}

/// One row per `(path, node)`: `path,t,x_*,u_*,v_*`, followed by `#` summary
/// lines for the supplied cost estimates.
pub fn write_ensemble(ensemble: &PathEnsemble, costs: &[CostEstimate], mut w: impl Write) -> Result<()> {
    let n = ensemble.n;
    let m1 = ensemble.theta1[0].nrows();
    let m2 = ensemble.theta2[0].nrows();
    {
        let mut out = csv::Writer::from_writer(&mut w);
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend((0..n).map(|k| format!("x_{k}")));
        header.extend((0..m1).map(|k| format!("u_{k}")));
        header.extend((0..m2).map(|k| format!("v_{k}")));
        out.write_record(&header).map_err(csv_error)?;
        for p in 0..ensemble.num_paths {
            for i in 0..ensemble.grid.len() {
                let mut row = vec![p.to_string(), ensemble.grid.node(i).to_string()];
                row.extend(ensemble.state(p, i).iter().map(|x| x.to_string()));
                row.extend(ensemble.control_u(p, i).iter().map(|x| x.to_string()));
                row.extend(ensemble.control_v(p, i).iter().map(|x| x.to_string()));
                out.write_record(&row).map_err(csv_error)?;
            }
        }
        out.flush()?;
    }
    writeln!(w, "# paths {} seed {} steps {}", ensemble.num_paths, ensemble.seed, ensemble.grid.steps())?;
    for c in costs {
        let who = match c.player {
            crate::riccati::Player::Player1 => "leader",
            crate::riccati::Player::Player2 => "follower",
        };
        writeln!(w, "# {who} cost mean {} std_error {}", c.mean, c.std_error)?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    } else {
        Error::Parse(e.to_string())
    }
}
