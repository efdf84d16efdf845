use proptest::prelude::*;
use stackelberg::linalg::{asymmetry, min_eigenvalue};
use stackelberg::model::{sample_coefficients, Coefficients, Dims, GameSpec, TimeGrid};
use stackelberg::riccati::{
    equilibrium_residual, rhs_p2, solve_ere_with, solve_follower_riccati, solve_follower_riccati_with,
    solve_lyapunov_value, Integrator,
};
use stackelberg::{solve_ere, Error, GainSchedule, Mat, Player};

const R: f64 = 0.03;
const MU1: f64 = 0.08;
const MU2: f64 = 0.10;
const S1: f64 = 0.15;
const S2: f64 = 0.19;

fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

fn table2_spec() -> GameSpec {
    let c = Coefficients::scalar(R, MU1 - R, MU2 - R, 0.0, S1, S2, 0.0, 0.0, S1, S2);
    GameSpec::constant(Dims::scalar(), 10.0, c, s(1.0), s(1.0), 0.15)
}

/// The scalar asset recursion written out by hand, without the matrix notation.
/// Returns `(P1, P2, Θ̄1, Θ2*)` per node.
fn scalar_recursion(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let dt = 10.0 / n as f64;
    let (b1, b2) = (MU1 - R, MU2 - R);
    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    let mut t1 = vec![0.0; n + 1];
    let mut t2 = vec![0.0; n + 1];
    p1[n] = 1.0;
    p2[n] = 1.0;
    for i in (1..=n).rev() {
        let (q1, q2) = (p1[i], p2[i]);
        let inv2 = 1.0 / (S2 + S2 * S2 * q2);
        let a1 = S1 - S2 * inv2 * S2 * q2 * S1;
        let g1 = -(q1 * (b1 - b2 * inv2 * S2 * q2 * S1) - q1 * a1 * S2 * inv2 * b2 * q2) / (S1 + q1 * a1 * a1);
        let g2 = -inv2 * (b2 * q2 + S2 * q2 * S1 * g1);
        let d1 = -(2.0 * q1 * (R + b1 * g1 + b2 * g2) + q1 * (S1 * g1 + S2 * g2).powi(2) + S1 * g1 * g1);
        let d2 = -2.0 * (R + b1 * g1) * q2 - S1 * S1 * g1 * g1 * q2 + (q2 * b2 + S1 * g1 * q2 * S2).powi(2) * inv2;
        t1[i - 1] = g1;
        t2[i - 1] = g2;
        p1[i - 1] = q1 - d1 * dt;
        p2[i - 1] = q2 - d2 * dt;
    }
    let last = n - 1;
    t1[n] = t1[last];
    t2[n] = t2[last];
    (p1, p2, t1, t2)
}

#[test]
fn zero_weights_give_zero_solution() {
    let c = Coefficients::scalar(0.4, 1.0, 0.5, 0.2, 0.3, 0.1, 0.0, 0.0, 1.0, 1.0);
    let spec = GameSpec::constant(Dims::scalar(), 1.0, c, s(0.0), s(0.0), 0.5);
    let sol = solve_ere(&spec, &spec.grid(50).unwrap()).unwrap();
    for i in 0..=50 {
        assert_eq!(sol.p1[i][(0, 0)], 0.0);
        assert_eq!(sol.p2[i][(0, 0)], 0.0);
        assert_eq!(sol.theta1_bar[i][(0, 0)], 0.0);
        assert_eq!(sol.theta2_star[i][(0, 0)], 0.0);
    }
}

#[test]
fn table2_matches_hand_written_recursion() {
    let spec = table2_spec();
    let sol = solve_ere(&spec, &spec.grid(1000).unwrap()).unwrap();
    let (p1, p2, t1, t2) = scalar_recursion(1000);
    for i in 0..=1000 {
        assert!((sol.p1[i][(0, 0)] - p1[i]).abs() < 1e-12, "P1 at {i}");
        assert!((sol.p2[i][(0, 0)] - p2[i]).abs() < 1e-12, "P2 at {i}");
        if i < 1000 {
            assert!((sol.theta1_bar[i][(0, 0)] - t1[i]).abs() < 1e-12, "Θ1 at {i}");
            assert!((sol.theta2_star[i][(0, 0)] - t2[i]).abs() < 1e-12, "Θ2 at {i}");
        }
    }
    // Values from an independent floating-point run of the same recursion.
    assert!((p1[0] - 1.10632244499906).abs() < 1e-12);
    assert!((p2[0] - 1.227226185760676).abs() < 1e-12);
    assert!((t1[0] + 0.2066594234614701).abs() < 1e-12);
    assert!((t2[0] + 0.33574386778134496).abs() < 1e-12);
    assert!((t1[999] + 0.20352042228039935).abs() < 1e-12);
    assert!((t2[999] + 0.2839436884785875).abs() < 1e-12);
}

#[test]
fn table2_positivity_terminal_and_ordering() {
    let spec = table2_spec();
    let sol = solve_ere(&spec, &spec.grid(1000).unwrap()).unwrap();
    assert_eq!(sol.p1[1000], s(1.0));
    assert_eq!(sol.p2[1000], s(1.0));
    for i in 0..=1000 {
        assert!(sol.p1[i][(0, 0)] > 0.0 && sol.p2[i][(0, 0)] > 0.0);
        assert!(sol.theta1_bar[i][(0, 0)].abs() < sol.theta2_star[i][(0, 0)].abs(), "node {i}");
    }
}

#[test]
fn table2_residual_regression() {
    let spec = table2_spec();
    let sol = solve_ere(&spec, &spec.grid(1000).unwrap()).unwrap();
    let max = sol.max_residual();
    assert!(max < 1e-14, "max residual {max:e}");
    let diag: Vec<f64> = sol.diagnostics.iter().map(|d| d.residual).collect();
    let table = sample_coefficients(&spec, &sol.grid).unwrap();
    let recomputed = equilibrium_residual(&sol, &table).unwrap();
    assert_eq!(diag, recomputed);
}

fn two_dim_spec() -> GameSpec {
    let dims = Dims::new(2, 1, 2).unwrap();
    let mut c = Coefficients::zeros(dims);
    c.a = Mat::from_row_slice(2, 2, &[0.1, 0.3, -0.2, -0.1]);
    c.b1 = Mat::from_column_slice(2, 1, &[0.6, -0.2]);
    c.b2 = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]);
    c.c = Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.05, 0.2]);
    c.d1 = Mat::from_column_slice(2, 1, &[0.2, 0.1]);
    c.d2 = Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]);
    c.q1 = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    c.q2 = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
    c.r1 = s(0.8);
    c.r2 = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.6]);
    let g1 = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let g2 = Mat::identity(2, 2) * 0.7;
    GameSpec::constant(dims, 1.5, c, g1, g2, 0.4)
}

#[test]
fn matrix_solutions_stay_symmetric_and_psd() {
    let spec = two_dim_spec();
    let sol = solve_ere(&spec, &spec.grid(400).unwrap()).unwrap();
    assert_eq!(sol.p1[400], spec.g1);
    assert_eq!(sol.p2[400], spec.g2);
    for i in 0..=400 {
        assert!(asymmetry(&sol.p1[i]) <= 1e-12);
        assert!(asymmetry(&sol.p2[i]) <= 1e-12);
        assert!(min_eigenvalue(&sol.p1[i]) >= -1e-8);
        assert!(min_eigenvalue(&sol.p2[i]) >= -1e-8);
        let bound = 1e-9 * (1.0 + sol.p1[i].norm());
        assert!(sol.diagnostics[i].residual <= bound, "node {i}");
    }
}

#[test]
fn follower_normal_equation_holds_on_the_solution() {
    let spec = two_dim_spec();
    let grid = spec.grid(200).unwrap();
    let sol = solve_ere(&spec, &grid).unwrap();
    let c = spec.constant_coefficients().unwrap();
    for i in 0..200 {
        // Gains at node i were built from P at node i + 1.
        let p2 = &sol.p2[i + 1];
        let (t1, t2) = (&sol.theta1_bar[i], &sol.theta2_star[i]);
        let lhs = (&c.r2 + c.d2.transpose() * p2 * &c.d2) * t2
            + c.b2.transpose() * p2
            + c.d2.transpose() * p2 * (&c.c + &c.d1 * t1);
        assert!(lhs.norm() <= 1e-9 * (1.0 + p2.norm()), "node {i}: {}", lhs.norm());
    }
}

#[test]
fn lyapunov_values_reproduce_the_equilibrium() {
    let spec = two_dim_spec();
    let mut gaps = Vec::new();
    for n in [200, 400, 800] {
        let grid = spec.grid(n).unwrap();
        let sol = solve_ere(&spec, &grid).unwrap();
        let gains = sol.gains();
        let pi1 = solve_lyapunov_value(&gains, Player::Player1, &spec, &grid).unwrap();
        let pi2 = solve_lyapunov_value(&gains, Player::Player2, &spec, &grid).unwrap();
        let mut gap: f64 = 0.0;
        for i in 0..=n {
            gap = gap.max((&pi1[i] - &sol.p1[i]).norm()).max((&pi2[i] - &sol.p2[i]).norm());
            assert!(asymmetry(&pi1[i]) <= 1e-12 && asymmetry(&pi2[i]) <= 1e-12);
        }
        assert!(gap <= 1e-8, "N = {n}: gap {gap:e}");
        gaps.push(gap);
    }
    // Same update formula, so the gap is pure round-off and does not grow.
    assert!(gaps[2] <= 1e-8);
}

/// One-player LQ Riccati with the standard-form right side.
fn lq_riccati(a: f64, b: f64, c: f64, d: f64, q: f64, r: f64, g: f64, horizon: f64, n: usize) -> f64 {
    let dt = horizon / n as f64;
    let mut p = g;
    for _ in 0..n {
        let k = b * p + d * p * c;
        let rhs = 2.0 * a * p + c * c * p + q - k * k / (r + d * d * p);
        p += dt * rhs;
    }
    p
}

#[test]
fn leader_alone_reduces_to_lq() {
    let (a, b, c, d, q, r, g) = (0.3, 0.8, 0.4, 0.5, 1.2, 0.7, 2.0);
    let coeffs = Coefficients::scalar(a, b, 0.0, c, d, 0.0, q, 0.0, r, 1.0);
    let spec = GameSpec::constant(Dims::scalar(), 1.0, coeffs, s(g), s(0.0), 0.5);
    let sol = solve_ere(&spec, &spec.grid(10_000).unwrap()).unwrap();
    let oracle = lq_riccati(a, b, c, d, q, r, g, 1.0, 10_000);
    assert!((sol.p1[0][(0, 0)] - oracle).abs() < 1e-6);
    assert!(sol.p2.iter().all(|p| p[(0, 0)] == 0.0));
}

#[test]
fn indefinite_state_weight_trips_the_monitor() {
    let coeffs = Coefficients::scalar(0.0, 1.0, 1.0, 0.0, 0.1, 0.1, -5.0, 1.0, 1.0, 1.0);
    let spec = GameSpec::constant(Dims::scalar(), 1.0, coeffs, s(0.0), s(1.0), 0.5);
    let err = solve_ere(&spec, &spec.grid(100).unwrap()).unwrap_err();
    match err {
        Error::MonitorBreach { node, min_eigenvalue, .. } => {
            assert_eq!(node, 99);
            assert!(min_eigenvalue < -1e-8);
        }
        other => panic!("expected a monitor breach, got {other}"),
    }
}

#[test]
fn perturbed_gain_has_large_residual() {
    let spec = table2_spec();
    let grid = spec.grid(500).unwrap();
    let mut sol = solve_ere(&spec, &grid).unwrap();
    for g in sol.theta1_bar.iter_mut() {
        g[(0, 0)] += 0.1;
    }
    let table = sample_coefficients(&spec, &grid).unwrap();
    let residual = equilibrium_residual(&sol, &table).unwrap();
    assert!(residual.iter().all(|&r| r >= 0.1 * 0.15), "min {:?}", residual.iter().cloned().fold(f64::MAX, f64::min));
}

#[test]
fn follower_riccati_trivial_and_first_order() {
    let spec = table2_spec();
    let zero_leader = |grid: &TimeGrid| vec![s(0.0); grid.len()];

    let mut no_cost = table2_spec();
    no_cost.g2 = s(0.0);
    let grid = no_cost.grid(100).unwrap();
    let sol = solve_follower_riccati(&zero_leader(&grid), &no_cost, &grid).unwrap();
    assert!(sol.p2.iter().all(|p| p[(0, 0)] == 0.0));

    let p0 = |n: usize| {
        let grid = spec.grid(n).unwrap();
        solve_follower_riccati(&zero_leader(&grid), &spec, &grid).unwrap().p2[0][(0, 0)]
    };
    let (a, b, c) = (p0(1000), p0(2000), p0(4000));
    let ratio = (a - b) / (b - c);
    assert!((1.9..=2.1).contains(&ratio), "ratio {ratio}");
}

#[test]
fn follower_riccati_matches_reference_at_fine_grid() {
    let coeffs = Coefficients::scalar(0.2, 0.5, 0.8, 0.3, 0.2, 0.4, 0.5, 1.0, 1.0, 0.6);
    let spec = GameSpec::constant(Dims::scalar(), 1.0, coeffs, s(1.0), s(1.5), 0.3);
    let leader = s(-0.4);
    let euler_grid = spec.grid(100_000).unwrap();
    let euler = solve_follower_riccati(&vec![leader.clone(); euler_grid.len()], &spec, &euler_grid).unwrap();
    let ref_grid = spec.grid(2_000).unwrap();
    let reference =
        solve_follower_riccati_with(&vec![leader; ref_grid.len()], &spec, &ref_grid, Integrator::Rk4).unwrap();
    let gap = (euler.p2[0][(0, 0)] - reference.p2[0][(0, 0)]).abs();
    assert!(gap < 1e-5, "gap {gap:e}");
}

#[test]
fn rhs_p2_is_the_value_derivative() {
    let spec = two_dim_spec();
    let c = spec.constant_coefficients().unwrap().clone();
    let leader = Mat::from_row_slice(1, 2, &[-0.3, 0.2]);
    let grid = spec.grid(3000).unwrap();
    let reference =
        solve_follower_riccati_with(&vec![leader.clone(); grid.len()], &spec, &grid, Integrator::Rk4).unwrap();
    let h = grid.dt();
    for i in [1, 1000, 2999] {
        let derivative = (&reference.p2[i - 1] - &reference.p2[i + 1]) / (2.0 * h);
        let rhs = rhs_p2(&c, &leader, &reference.p2[i], i).unwrap();
        assert!((&derivative - &rhs).norm() < 1e-6, "node {i}: {}", (&derivative - &rhs).norm());
    }
}

#[test]
fn euler_and_rk4_agree_on_the_equilibrium() {
    let spec = table2_spec();
    let euler = solve_ere(&spec, &spec.grid(100_000).unwrap()).unwrap();
    let rk4 = solve_ere_with(&spec, &spec.grid(1000).unwrap(), Integrator::Rk4).unwrap();
    assert!((euler.p1[0][(0, 0)] - rk4.p1[0][(0, 0)]).abs() < 1e-5);
    assert!((euler.p2[0][(0, 0)] - rk4.p2[0][(0, 0)]).abs() < 1e-5);
}

#[test]
fn lyapunov_of_zero_gains_without_cost_is_zero() {
    let mut spec = table2_spec();
    spec.g1 = s(0.0);
    let grid = spec.grid(20).unwrap();
    let gains = GainSchedule::new(grid, vec![s(0.0); 21], Some(vec![s(0.0); 21])).unwrap();
    let pi = solve_lyapunov_value(&gains, Player::Player1, &spec, &grid).unwrap();
    assert!(pi.iter().all(|p| p[(0, 0)] == 0.0));
}

fn scalar_instance() -> impl Strategy<Value = GameSpec> {
    (
        (-0.5f64..0.5, -1.0f64..1.0, -1.0f64..1.0, -0.5f64..0.5),
        (-0.5f64..0.5, -0.5f64..0.5, 0.0f64..2.0, 0.0f64..2.0),
        (0.2f64..2.0, 0.2f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
    )
        .prop_map(|((a, b1, b2, c), (d1, d2, q1, q2), (r1, r2, g1, g2))| {
            let coeffs = Coefficients::scalar(a, b1, b2, c, d1, d2, q1, q2, r1, r2);
            GameSpec::constant(Dims::scalar(), 1.0, coeffs, s(g1), s(g2), r1.min(r2))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solves_preserve_invariants(spec in scalar_instance()) {
        let grid = spec.grid(200).unwrap();
        let sol = solve_ere(&spec, &grid).unwrap();
        prop_assert_eq!(&sol.p1[200], &spec.g1);
        prop_assert_eq!(&sol.p2[200], &spec.g2);
        for i in 0..=200 {
            prop_assert!(min_eigenvalue(&sol.p1[i]) >= -1e-8);
            prop_assert!(min_eigenvalue(&sol.p2[i]) >= -1e-8);
            prop_assert!(sol.diagnostics[i].residual <= 1e-9 * (1.0 + sol.p1[i].norm()));
        }
        let gains = sol.gains();
        let pi1 = solve_lyapunov_value(&gains, Player::Player1, &spec, &grid).unwrap();
        let pi2 = solve_lyapunov_value(&gains, Player::Player2, &spec, &grid).unwrap();
        for i in 0..=200 {
            prop_assert!((&pi1[i] - &sol.p1[i]).norm() <= 1e-8 * (1.0 + sol.p1[i].norm()));
            prop_assert!((&pi2[i] - &sol.p2[i]).norm() <= 1e-8 * (1.0 + sol.p2[i].norm()));
        }
    }
}
