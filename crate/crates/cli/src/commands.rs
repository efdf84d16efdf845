use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;
use stackelberg::asset::{reproduce_figures_with, AssetSpec, FigureOptions};
use stackelberg::config::{load_spec, LoadedSpec};
use stackelberg::csvio::{read_gain_schedule, write_ensemble, write_solution};
use stackelberg::equilibria::{feedback_stackelberg_table, spike_suite};
use stackelberg::inconsistency::{ode_residual, restart_experiment, restart_sweep, Example11Spec};
use stackelberg::model::{sample_coefficients, validate_table, CoefficientTable, TimeGrid};
use stackelberg::riccati::{solve_ere_table, solve_ere_with};
use stackelberg::sim::{estimate_cost_table, simulate_table};
use stackelberg::wellposed::classify_table;
use stackelberg::{Error, Integrator, Mat, Player, Result, Vector};

use crate::{Command, IntegratorArg};

/// Runs one subcommand; `Ok(false)` means a verification found a violation.
pub fn run(command: Command) -> Result<bool> {
    match command {
        Command::Solve { spec, grid, integrator, out } => solve(&spec, grid.grid_n, integrator, out.as_deref()),
        Command::Simulate { spec, gains, paths, seed, x0, workers, out } => {
            simulate(&spec, &gains, paths, seed, x0, workers, out.as_deref())
        }
        Command::Check { spec, grid, smooth, json } => check(&spec, grid.grid_n, smooth, json),
        Command::Verify { spec, grid, trials, spikes, seed, json } => {
            verify(&spec, grid.grid_n, trials, spikes, seed, json)
        }
        Command::DemoInconsistency { t_split, grid, x0, sweep, out, json } => {
            demo_inconsistency(t_split, grid.grid_n, x0, sweep, out.as_deref(), json)
        }
        Command::ReproduceTable2 { out_dir, grid, paths, seed, x0, z, force, workers } => {
            reproduce_table2(&out_dir, grid.grid_n, paths, seed, x0, z, force, workers)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Loads a spec and samples it on `steps` nodes, rejecting invalid weights.
fn load_table(path: &Path, steps: usize) -> Result<(LoadedSpec, CoefficientTable)> {
    let loaded = load_spec(path)?;
    let grid = loaded.spec.grid(steps)?;
    let table = sample_coefficients(&loaded.spec, &grid)?;
    validate_table(&table).into_result()?;
    Ok((loaded, table))
}

/// `[a, b; c, d]`, rows separated by semicolons.
fn flat(m: &Mat) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn solve(spec: &Path, steps: usize, integrator: IntegratorArg, out: Option<&Path>) -> Result<bool> {
    let (loaded, table) = load_table(spec, steps)?;
    let sol = match integrator {
        IntegratorArg::Euler => solve_ere_table(&table)?,
        IntegratorArg::Rk4 => solve_ere_with(&loaded.spec, &table.grid, Integrator::Rk4)?,
    };
    let mut w = output(out)?;
    write_solution(&sol, &mut w)?;
    w.flush()?;
    let mut log: Box<dyn Write> = if out.is_some() { Box::new(io::stdout()) } else { Box::new(io::stderr()) };
    writeln!(log, "steps {}", table.grid.steps())?;
    writeln!(log, "P1(0) {}", flat(&sol.p1[0]))?;
    writeln!(log, "P2(0) {}", flat(&sol.p2[0]))?;
    writeln!(log, "max equilibrium residual {:e}", sol.max_residual())?;
    Ok(true)
}

fn simulate(
    spec: &Path,
    gains: &Path,
    paths: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<bool> {
    let loaded = load_spec(spec)?;
    let schedule = read_gain_schedule(File::open(gains)?)?;
    let grid = schedule.grid;
    if (grid.horizon() - loaded.spec.horizon).abs() > 1e-9 * loaded.spec.horizon {
        return Err(Error::Invalid(format!(
            "gain file ends at t = {}, the spec horizon is {}",
            grid.horizon(),
            loaded.spec.horizon
        )));
    }
    let x0 = match (x0, loaded.x0) {
        (Some(v), _) => Vector::from_vec(v),
        (None, Some(v)) => v,
        (None, None) => return Err(Error::Invalid("no initial state: pass --x0 or set x0 in the spec".into())),
    };
    let table = sample_coefficients(&loaded.spec, &grid)?;
    validate_table(&table).into_result()?;
    let ensemble = simulate_table(&schedule, &x0, &table, paths, seed, workers)?;
    let costs = [
        estimate_cost_table(&ensemble, &table, Player::Player1),
        estimate_cost_table(&ensemble, &table, Player::Player2),
    ];
    let mut w = output(out)?;
    write_ensemble(&ensemble, &costs, &mut w)?;
    w.flush()?;
    for (name, c) in ["leader", "follower"].iter().zip(&costs) {
        eprintln!("{name} cost {} ± {} ({} paths)", c.mean, c.std_error, c.num_paths);
    }
    Ok(true)
}

fn optional(x: Option<impl ToString>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn check(spec: &Path, steps: usize, smooth: bool, as_json: bool) -> Result<bool> {
    let loaded = load_spec(spec)?;
    let grid = loaded.spec.grid(steps)?;
    let table = sample_coefficients(&loaded.spec, &grid)?;
    let validation = validate_table(&table);
    // Constant coefficients are trivially smooth.
    let smooth = smooth || loaded.spec.constant_coefficients().is_some();
    let report = classify_table(&table, smooth)?;
    if as_json {
        let value = json!({ "valid": validation.valid, "violations": validation.violations, "wellposedness": report });
        println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Error::Invalid(e.to_string()))?);
    } else {
        println!("valid {}", validation.valid);
        for v in &validation.violations {
            println!("violation {v}");
        }
        println!("case {}", report.case_label);
        println!("d2_lower_bound {}", optional(report.d2_lower_bound));
        println!("s_min_eig {}", optional(report.s_min_eig));
        println!("rank_ok {}", optional(report.rank_ok));
        println!("smoothness_asserted {}", report.smoothness_asserted);
        println!("smoothness_advisory {}", report.smoothness_advisory);
    }
    validation.into_result()?;
    Ok(true)
}

fn verify(spec: &Path, steps: usize, trials: usize, spikes: usize, seed: u64, as_json: bool) -> Result<bool> {
    let (loaded, table) = load_table(spec, steps)?;
    let sol = solve_ere_table(&table)?;
    let xi_scale = loaded.x0.map_or(1.0, |x| x.amax().max(1.0));
    let suite = spike_suite(&sol, &table, spikes, seed, &[1, 2, 4], xi_scale)?;
    let dominance = feedback_stackelberg_table(&sol, &table, trials, seed)?;
    let pass = suite.pass && dominance.pass;
    if as_json {
        let value = json!({
            "pass": pass,
            "spikes": {
                "count": suite.reports.len(),
                "worst_quotient": suite.worst_quotient,
                "worst_relative_gap": suite.worst_relative_gap,
                "pass": suite.pass,
            },
            "dominance": dominance,
        });
        println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Error::Invalid(e.to_string()))?);
    } else {
        println!("spike tests {} worst quotient {:e} pass {}", suite.reports.len(), suite.worst_quotient, suite.pass);
        println!("spike worst relative gap to second-order term {:e}", suite.worst_relative_gap);
        println!(
            "follower dominance trials {} worst margin {:e} pass {}",
            dominance.follower.trials, dominance.follower.worst_margin, dominance.follower.pass
        );
        println!(
            "leader dominance trials {} worst margin {:e} pass {}",
            dominance.leader.trials, dominance.leader.worst_margin, dominance.leader.pass
        );
        println!("leader margin with re-solved follower {:e}", dominance.resolved_leader_worst_margin);
        println!("tested class: {}", dominance.follower.tested_class);
        println!("pass {pass}");
    }
    Ok(pass)
}

fn demo_inconsistency(
    t_split: f64,
    steps: usize,
    x0: f64,
    sweep: bool,
    out: Option<&Path>,
    as_json: bool,
) -> Result<bool> {
    let spec = Example11Spec::unit().with_x0(x0);
    let grid = TimeGrid::new(spec.horizon, steps)?;
    if sweep {
        let points = restart_sweep(&spec, &grid)?;
        let mut w = output(out)?;
        writeln!(w, "t_index,t,y_at_split,control_deviation")?;
        for p in &points {
            writeln!(w, "{},{},{},{}", p.t_index, p.t_tilde, p.y_at_split, p.control_deviation)?;
        }
        w.flush()?;
        return Ok(true);
    }
    if !(0.0..1.0).contains(&t_split) {
        return Err(Error::Invalid(format!("--t-split {t_split} must lie in [0, 1)")));
    }
    let t_index = (t_split * steps as f64).round() as usize;
    let report = restart_experiment(&spec, &grid, t_index)?;
    let residual = ode_residual(&report.original, &spec);
    if as_json {
        let value = json!({
            "t_index": report.t_index,
            "t_tilde": report.t_tilde,
            "boundary_residual": report.original.boundary_residual,
            "ode_residual": residual,
            "y_at_split": report.y_at_split,
            "control_deviation": report.control_deviation,
            "follower_deviation": report.follower_deviation,
        });
        println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Error::Invalid(e.to_string()))?);
    } else {
        println!("restart node {} (t = {})", report.t_index, report.t_tilde);
        println!("boundary residual {:e}", report.original.boundary_residual);
        println!("ode residual {residual:e}");
        println!("|y*(t)| at restart {}", report.y_at_split);
        println!("sup |u restarted - u original| {}", report.control_deviation);
        println!("sup |v restarted - v original| {}", report.follower_deviation);
        let consistent = report.control_deviation <= 1e-3;
        println!("time consistent {consistent}");
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn reproduce_table2(
    out_dir: &Path,
    steps: usize,
    paths: usize,
    seed: u64,
    x0: Option<f64>,
    z: Option<f64>,
    force: bool,
    workers: Option<usize>,
) -> Result<bool> {
    let mut asset = AssetSpec::table2();
    asset.x0 = x0.unwrap_or(asset.x0);
    asset.z = z.unwrap_or(asset.z);
    let grid = TimeGrid::new(asset.horizon, steps)?;
    let options = FigureOptions {
        allow_low_target: force,
        workers,
    };
    let bundle = reproduce_figures_with(&asset, &grid, paths, seed, options)?;
    fs::create_dir_all(out_dir)?;
    let file = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(out_dir.join(name))?)) };
    let mut w = file("fig1.csv")?;
    bundle.write_fig1(&mut w)?;
    w.flush()?;
    let mut w = file("fig2.csv")?;
    bundle.write_fig2(&mut w)?;
    w.flush()?;
    let mut w = file("fig3.csv")?;
    bundle.write_fig3(&mut w)?;
    w.flush()?;
    let mut w = file("diagnostics.csv")?;
    write_solution(&bundle.solution, &mut w)?;
    w.flush()?;
    let mut w = file("summary.txt")?;
    bundle.write_summary(&mut w)?;
    w.flush()?;
    bundle.write_summary(io::stdout().lock())?;
    Ok(true)
}
