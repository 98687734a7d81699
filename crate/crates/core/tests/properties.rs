use proptest::prelude::*;
use proptest::strategy::ValueTree;

use connmaint::actuation::{lowpass_step, FilterState};
use connmaint::analysis::spectrum;
use connmaint::config::{Mode, ScenarioConfig};
use connmaint::control::{connectivity_control, modified_laplacian_row, ControlNeighbor, ControlParams, ObstacleParams};
use connmaint::estimator::{lambda2_gradient_local, GradientNeighbor};
use connmaint::graph::{build_graph, spectral_oracle, CommGraph, Position, RangeParams};
use connmaint::linalg::Matrix;
use connmaint::sim::{run_scenario, run_scenario_with, RunOptions, Simulation};

fn weights_strategy(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0..1.0f64, n * (n - 1) / 2).prop_map(move |upper| {
        let mut w = Matrix::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                // Keep some entries exactly zero so sparse graphs occur.
                let a = if upper[k] < 0.2 { 0.0 } else { upper[k] };
                w[(i, j)] = a;
                w[(j, i)] = a;
                k += 1;
            }
        }
        w
    })
}

fn layout(n: usize, side: f64) -> impl Strategy<Value = Vec<Position>> {
    prop::collection::vec((0.0..side, 0.0..side), n).prop_map(|v| v.into_iter().map(|(x, y)| Position::xy(x, y)).collect())
}

/// Characteristic polynomial coefficients of `m`, highest degree first, by
/// the Faddeev-LeVerrier recursion.
fn char_poly(m: &Matrix) -> Vec<f64> {
    let n = m.dim();
    let mut coeffs = vec![1.0];
    let mut mk = Matrix::zeros(n);
    for k in 1..=n {
        // mk <- m * (mk + c_{k-1} I)
        let c_prev = *coeffs.last().unwrap();
        let mut shifted = mk.clone();
        for i in 0..n {
            shifted[(i, i)] += c_prev;
        }
        let mut next = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] = (0..n).map(|l| m[(i, l)] * shifted[(l, j)]).sum();
            }
        }
        let trace: f64 = (0..n).map(|i| next[(i, i)]).sum();
        coeffs.push(-trace / k as f64);
        mk = next;
    }
    coeffs
}

/// Smallest nonzero eigenvalue of a Laplacian of a connected graph: divide
/// out the root at zero and run Newton from zero, which converges
/// monotonically to the smallest root of a real-rooted polynomial.
fn brute_lambda2(l: &Matrix) -> f64 {
    let mut p = char_poly(l);
    p.pop();
    let eval = |x: f64| p.iter().fold(0.0, |acc, c| acc * x + c);
    let deg = p.len() - 1;
    let deriv = |x: f64| {
        p.iter()
            .enumerate()
            .take(deg)
            .fold(0.0, |acc, (k, c)| acc * x + c * (deg - k) as f64)
    };
    let mut x = 0.0;
    for _ in 0..200 {
        let d = deriv(x);
        if d == 0.0 {
            break;
        }
        let next = x - eval(x) / d;
        if (next - x).abs() < 1e-15 * next.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_invariants(w in (2usize..8).prop_flat_map(weights_strategy)) {
        let g = CommGraph::from_weights(w).unwrap();
        let l = g.laplacian();
        let n = l.dim();
        for i in 0..n {
            let row: f64 = l.row(i).iter().sum();
            prop_assert!(row.abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(l[(i, j)], l[(j, i)]);
            }
        }
        let s = spectral_oracle(&g).unwrap();
        prop_assert!(s.all_eigenvalues[0].abs() < 1e-10);
        prop_assert!(s.all_eigenvalues.iter().all(|&v| v > -1e-10));
        prop_assert!(s.all_eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        let norm: f64 = s.fiedler.iter().map(|x| x * x).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
        // With a simple zero eigenvalue the Fiedler vector is orthogonal to 1.
        if s.lambda2 > 1e-6 {
            let sum: f64 = s.fiedler.iter().sum();
            prop_assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn lambda2_matches_characteristic_polynomial(w in (3usize..=4).prop_flat_map(weights_strategy)) {
        let g = CommGraph::from_weights(w).unwrap();
        let s = spectral_oracle(&g).unwrap();
        prop_assume!(s.lambda2 > 1e-3);
        let brute = brute_lambda2(g.laplacian());
        prop_assert!((s.lambda2 - brute).abs() < 1e-8 * s.lambda2.max(1.0), "{} vs {}", s.lambda2, brute);
    }

    #[test]
    fn filter_output_bounded_by_input(us in prop::collection::vec(-5.0..5.0f64, 1..400), cutoff in 0.5..200.0f64) {
        let mut f = FilterState::at_rest(1, cutoff);
        let bound = us.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        for u in &us {
            let y = lowpass_step(&mut f, &[*u], 1e-3)[0];
            prop_assert!(y.abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn parseval_and_scale_invariance(xs in prop::collection::vec(-10.0..10.0f64, 2..300), gain in 0.01..100.0f64) {
        let s = spectrum(&xs, 1e-3, 10.0).unwrap();
        let time: f64 = xs.iter().map(|x| x * x).sum();
        prop_assume!(time > 1e-9);
        prop_assert!((s.total_energy() - time).abs() <= 1e-6 * time);
        let scaled: Vec<f64> = xs.iter().map(|x| gain * x).collect();
        let t = spectrum(&scaled, 1e-3, 10.0).unwrap();
        prop_assert!((t.hf_fraction - s.hf_fraction).abs() < 1e-9);
    }

    #[test]
    fn scalar_and_row_connectivity_laws_agree(
        p_i in (-2.0..2.0f64, -2.0..2.0f64),
        nbrs in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -1.5..1.5f64, 0.01..1.0f64), 1..5),
        nu_i in -1.5..1.5f64,
        lambda2_i in 0.3..6.0f64,
        gamma in 0.2..3.0f64,
    ) {
        let params = ControlParams { u_c_max: f64::INFINITY, ..Default::default() };
        let sigma = RangeParams::default().sigma();
        let p_i = Position::xy(p_i.0, p_i.1);
        let pos: Vec<Position> = nbrs.iter().map(|n| Position::xy(n.0, n.1)).collect();
        let grad: Vec<GradientNeighbor<'_>> = nbrs.iter().zip(&pos).map(|(n, p)| GradientNeighbor { nu: n.2, position: p, weight: n.3 }).collect();
        let rows: Vec<ControlNeighbor<'_>> = nbrs.iter().zip(&pos).map(|(n, p)| ControlNeighbor { position: p, nu: n.2, weight: n.3, offset: None }).collect();
        let a = connectivity_control(lambda2_i, &lambda2_gradient_local(nu_i, &p_i, &grad, sigma), gamma, &params);
        let b = modified_laplacian_row(&p_i, nu_i, lambda2_i, gamma, &rows, &params, sigma);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn saturation_respected(grad in (-1e3..1e3f64, -1e3..1e3f64), lambda2_i in -3.0..3.0f64) {
        let params = ControlParams::default();
        let u = connectivity_control(lambda2_i, &[grad.0, grad.1], 1.0, &params);
        prop_assert!(u[0].hypot(u[1]) <= params.u_c_max * (1.0 + 1e-12));
    }
}

/// Central-difference agreement over at least 50 connected layouts.
#[test]
fn gradient_matches_finite_differences() {
    let params = RangeParams::default();
    let sigma = params.sigma();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mut checked = 0;
    while checked < 60 {
        let n = 3 + checked % 3;
        let ps = layout(n, 3.5).new_tree(&mut runner).unwrap().current();
        if ps.iter().enumerate().any(|(i, a)| ps[i + 1..].iter().any(|b| (a.distance(b) - params.range()).abs() < 1e-3)) {
            continue;
        }
        let g = build_graph(&ps, &params).unwrap();
        let s = spectral_oracle(&g).unwrap();
        if s.lambda2 < 1e-3 || s.all_eigenvalues[2] - s.lambda2 < 1e-3 {
            continue;
        }
        let exact = connmaint::graph::lambda2_gradient_exact(&ps, &g, &s, sigma).per_agent;
        let numeric = connmaint::validate::finite_difference_gradient(&ps, &params, 1e-6);
        let scale = numeric.iter().flatten().fold(1e-6f64, |m, x| m.max(x.abs()));
        for (a, b) in exact.iter().flatten().zip(numeric.iter().flatten()) {
            assert!((a - b).abs() / scale < 1e-4, "layout {ps:?}: {a} vs {b}");
        }
        checked += 1;
    }
}

fn short(mode: Mode, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        mode,
        horizon: 0.3,
        ..Default::default()
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let mut cfg = short(Mode::Formation, 3);
    cfg.disturbance.p_fail = 0.3;
    cfg.disturbance.eta = 0.5;
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.outcome, b.outcome);
}

#[test]
fn oracle_never_reaches_agents() {
    let mut cfg = short(Mode::Formation, 5);
    cfg.disturbance.eta = 0.3;
    let with = run_scenario_with(&cfg, RunOptions { oracle: true }).unwrap();
    let without = run_scenario_with(&cfg, RunOptions { oracle: false }).unwrap();
    for (a, b) in with.trace.iter().zip(&without.trace) {
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.lambda2_est, b.lambda2_est);
        assert_eq!(a.nu, b.nu);
        assert!(b.lambda2_true.is_nan());
    }
}

/// Moving an agent that is out of range of agent 0 (before and after the
/// move) must leave agent 0's next state bit-identical.
#[test]
fn agents_only_see_neighbors() {
    let mut cfg = ScenarioConfig {
        n_agents: 4,
        mode: Mode::Formation,
        obstacles: ObstacleParams {
            count: 0,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.disturbance.eta = 0.2;
    cfg.disturbance.p_fail = 0.1;
    // Chain 0 - 1 - 2 - 3 with spacing 3: agent 3 is 9 m from agent 0.
    let base: Vec<Position> = (0..4).map(|k| Position::xy(3.0 * k as f64, 0.0)).collect();
    let mut moved = base.clone();
    moved[3] = Position::xy(9.0, 1.5);
    let mut a = Simulation::with_layout(&cfg, base, vec![]).unwrap();
    let mut b = Simulation::with_layout(&cfg, moved, vec![]).unwrap();
    let ua = a.step().unwrap();
    let ub = b.step().unwrap();
    assert_eq!(a.positions()[0], b.positions()[0]);
    assert_eq!(a.estimators()[0], b.estimators()[0]);
    assert_eq!(ua.u_c[0], ub.u_c[0]);
    assert_eq!(ua.lambda2_est[0], ub.lambda2_est[0]);
    // Agent 3's own state does change.
    assert_ne!(a.positions()[3], b.positions()[3]);
}

#[test]
fn loss_latches_estimate_validity_and_run_continues() {
    // A formation far wider than the range pulls the team apart.
    let mut cfg = ScenarioConfig {
        horizon: 2.0,
        ..Default::default()
    };
    cfg.formation.radius = 8.0;
    cfg.control.u_c_max = 0.01;
    cfg.obstacles.count = 0;
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.trace.len(), cfg.steps());
    let t_loss = match r.outcome {
        connmaint::sim::Outcome::Lost { t_loss } => t_loss,
        other => panic!("expected a loss, got {other:?}"),
    };
    for rec in &r.trace {
        assert_eq!(rec.estimates_valid, rec.t < t_loss);
        if rec.t == t_loss {
            assert!(!rec.connected);
        }
    }
}
