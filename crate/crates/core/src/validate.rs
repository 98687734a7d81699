//! Self-checks grouped by property, for running against a fresh build.
//!
//! Each group reports pass/fail with a one-line detail. The gradient check
//! takes the gradient as a function so that a deliberately broken variant can
//! be shown to fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::{lowpass_step, FilterState};
use crate::analysis::spectrum;
use crate::control::{connectivity_control, modified_laplacian_row, ControlNeighbor, ControlParams};
use crate::disturbance::{system_failure_rate, ChannelRng};
use crate::estimator::{lambda2_gradient_local, GradientNeighbor};
use crate::graph::{
    build_graph, lambda2_gradient_exact, lambda2_of, spectral_oracle, CommGraph, Position, RangeParams, SpectralResult,
};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl GroupReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Gradient of lambda2 for every agent, from positions, graph and spectrum.
pub type GradientFn = dyn Fn(&[Position], &CommGraph, &SpectralResult, f64) -> Vec<Vec<f64>>;

pub fn exact_gradient(positions: &[Position], graph: &CommGraph, spectral: &SpectralResult, sigma: f64) -> Vec<Vec<f64>> {
    lambda2_gradient_exact(positions, graph, spectral, sigma).per_agent
}

pub fn check_spectral() -> GroupReport {
    let complete = Matrix::from_rows(&(0..5).map(|i| (0..5).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect::<Vec<_>>());
    let path = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
    let split = Matrix::from_rows(&[
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 2.0],
        vec![0.0, 0.0, 2.0, 0.0],
    ]);
    let l2 = |m: Matrix| CommGraph::from_weights(m).and_then(|g| spectral_oracle(&g)).map(|s| s.lambda2);
    match (l2(complete), l2(path), l2(split)) {
        (Ok(k5), Ok(p3), Ok(two)) => {
            let ok = (k5 - 5.0).abs() < 1e-8 && (p3 - 1.0).abs() < 1e-8 && two.abs() < 1e-10;
            GroupReport::new("spectral", ok, format!("K5 {k5:.12}, P3 {p3:.12}, two components {two:.3e}"))
        }
        (a, b, c) => GroupReport::new("spectral", false, format!("oracle error: {a:?} {b:?} {c:?}")),
    }
}

/// Random connected layouts with a clear spectral gap and no pair near the
/// range cutoff, where the weight is not differentiable.
fn gradient_fixtures(count: usize, seed: u64, params: &RangeParams) -> Vec<Vec<Position>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(3..=5);
        let ps: Vec<Position> = (0..n)
            .map(|_| Position::xy(rng.random_range(0.0..3.5), rng.random_range(0.0..3.5)))
            .collect();
        let near_cutoff = ps
            .iter()
            .enumerate()
            .any(|(i, a)| ps[i + 1..].iter().any(|b| (a.distance(b) - params.range()).abs() < 1e-3));
        if near_cutoff {
            continue;
        }
        let Ok(g) = build_graph(&ps, params) else { continue };
        let Ok(s) = spectral_oracle(&g) else { continue };
        let gap = s.all_eigenvalues[2.min(n - 1)] - s.lambda2;
        if s.lambda2 > 1e-3 && gap > 1e-3 {
            out.push(ps);
        }
    }
    out
}

/// Central differences with step `h` of the oracle lambda2.
pub fn finite_difference_gradient(positions: &[Position], params: &RangeParams, h: f64) -> Vec<Vec<f64>> {
    (0..positions.len())
        .map(|i| {
            (0..positions[i].dim())
                .map(|k| {
                    let mut e = vec![0.0; positions[i].dim()];
                    e[k] = h;
                    let mut plus = positions.to_vec();
                    plus[i] = positions[i].offset(&e, 1.0);
                    let mut minus = positions.to_vec();
                    minus[i] = positions[i].offset(&e, -1.0);
                    let lp = lambda2_of(&plus, params).unwrap_or(f64::NAN);
                    let lm = lambda2_of(&minus, params).unwrap_or(f64::NAN);
                    (lp - lm) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

pub fn check_gradient(gradient: &GradientFn) -> GroupReport {
    let params = RangeParams::default();
    let mut worst = 0.0_f64;
    for ps in gradient_fixtures(50, 0x6772_6164, &params) {
        let g = build_graph(&ps, &params).expect("fixture graph");
        let s = spectral_oracle(&g).expect("fixture spectrum");
        let analytic = gradient(&ps, &g, &s, params.sigma());
        let numeric = finite_difference_gradient(&ps, &params, 1e-6);
        let scale = numeric.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-6);
        let err = analytic
            .iter()
            .flatten()
            .zip(numeric.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let rel = err / scale;
        worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
    }
    GroupReport::new("gradient", worst < 1e-4, format!("50 layouts, worst relative error {worst:.3e}"))
}

/// Steady-state amplitude ratio of the discretized filter for a unit sinusoid.
pub fn filter_amplitude_ratio(cutoff: f64, omega: f64, dt: f64) -> f64 {
    let mut f = FilterState::at_rest(1, cutoff);
    let settle = (5.0 / cutoff / dt).ceil() as usize;
    let period = 2.0 * std::f64::consts::PI / omega;
    let window = ((50.0 * period) / dt).round() as usize;
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..settle + window {
        let t = k as f64 * dt;
        let y = lowpass_step(&mut f, &[(omega * t).sin()], dt)[0];
        if k >= settle {
            // Output of step k is the state at t + dt.
            let tk = t + dt;
            s += y * (omega * tk).sin();
            c += y * (omega * tk).cos();
        }
    }
    2.0 * s.hypot(c) / window as f64
}

pub fn check_filter() -> GroupReport {
    let mut f = FilterState::at_rest(1, 10.0);
    let mut y = 0.0;
    for _ in 0..20_000 {
        y = lowpass_step(&mut f, &[1.0], 1e-3)[0];
    }
    let at_cutoff = filter_amplitude_ratio(10.0, 10.0, 1e-3);
    let above = filter_amplitude_ratio(10.0, 100.0, 1e-3);
    let ok = (y - 1.0).abs() < 1e-9
        && ((at_cutoff - std::f64::consts::FRAC_1_SQRT_2) / std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01
        && ((above - 0.0995) / 0.0995).abs() < 0.02;
    GroupReport::new(
        "filter",
        ok,
        format!("DC gain {y:.12}, |H| at 10 rad/s {at_cutoff:.5}, at 100 rad/s {above:.5}"),
    )
}

pub fn check_disturbance() -> GroupReport {
    let draws = 100_000;
    let p = 0.2;
    let mut rng = ChannelRng::for_agent(0x6469_7374, 0);
    let failures = (0..draws).filter(|_| rng.draw_failure(p)).count();
    let rate = failures as f64 / draws as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    let mut ok = (rate - p).abs() < 3.0 * se;
    let mut detail = format!("failure rate {rate:.4}");
    for &eta in &[0.1, 0.5, 5.0] {
        let mut rng = ChannelRng::for_agent(0x6e6f_6973, 1);
        let xs: Vec<f64> = (0..draws).map(|_| rng.draw_noise(eta)).collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (draws - 1) as f64;
        ok &= ((var - eta) / eta).abs() < 0.04;
        detail.push_str(&format!(", var(eta={eta}) {var:.4}"));
    }
    ok &= system_failure_rate(5, 0.2) == 1.0;
    GroupReport::new("disturbance", ok, detail)
}

/// Scalar (csch^2-scaled gradient) and row (modified Laplacian) forms of the
/// connectivity law on random local states.
pub fn check_equivalence() -> GroupReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6571_7569);
    let params = ControlParams {
        u_c_max: f64::INFINITY,
        ..Default::default()
    };
    let sigma = RangeParams::default().sigma();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let p_i = Position::xy(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let count = rng.random_range(1..=4);
        let others: Vec<Position> = (0..count)
            .map(|_| Position::xy(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let nus: Vec<f64> = (0..count).map(|_| rng.random_range(-1.5..1.5)).collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.01..1.0)).collect();
        let nu_i = rng.random_range(-1.5..1.5);
        let lambda2_i = rng.random_range(0.3..5.0);
        let gamma = rng.random_range(0.5..2.0);
        let grad_nbrs: Vec<GradientNeighbor<'_>> = (0..count)
            .map(|j| GradientNeighbor {
                nu: nus[j],
                position: &others[j],
                weight: weights[j],
            })
            .collect();
        let ctrl_nbrs: Vec<ControlNeighbor<'_>> = (0..count)
            .map(|j| ControlNeighbor {
                position: &others[j],
                nu: nus[j],
                weight: weights[j],
                offset: None,
            })
            .collect();
        let scalar = connectivity_control(lambda2_i, &lambda2_gradient_local(nu_i, &p_i, &grad_nbrs, sigma), gamma, &params);
        let row = modified_laplacian_row(&p_i, nu_i, lambda2_i, gamma, &ctrl_nbrs, &params, sigma);
        for (a, b) in scalar.iter().zip(&row) {
            worst = worst.max((a - b).abs());
        }
    }
    GroupReport::new("equivalence", worst < 1e-12, format!("100 states, max difference {worst:.3e}"))
}

pub fn check_spectrum() -> GroupReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7370_6563);
    let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    match spectrum(&x, 1e-3, 10.0) {
        Ok(s) => {
            let time: f64 = x.iter().map(|v| v * v).sum();
            let rel = (s.total_energy() - time).abs() / time;
            GroupReport::new("spectrum", rel < 1e-6, format!("Parseval relative error {rel:.3e}"))
        }
        Err(e) => GroupReport::new("spectrum", false, e.to_string()),
    }
}

pub fn run_all() -> Vec<GroupReport> {
    vec![
        check_spectral(),
        check_gradient(&exact_gradient),
        check_filter(),
        check_disturbance(),
        check_equivalence(),
        check_spectrum(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_groups_pass() {
        for r in run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn sign_flipped_gradient_is_caught() {
        let flipped = |ps: &[Position], g: &CommGraph, s: &SpectralResult, sigma: f64| {
            exact_gradient(ps, g, s, sigma)
                .into_iter()
                .map(|v| v.into_iter().map(|x| -x).collect())
                .collect()
        };
        assert!(!check_gradient(&flipped).passed);
    }
}
