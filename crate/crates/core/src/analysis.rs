//! Post-processing of run traces: connectivity minima, empirical estimation
//! error bounds, control-effort spectra and per-cell sweep statistics.

use std::cmp::Ordering;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::estimator::EstimatorGains;
use crate::sim::{Outcome, RunResult, TraceRecord};

/// Spectral energy above this frequency counts as high-frequency content.
pub const DEFAULT_HF_THRESHOLD_HZ: f64 = 10.0;

/// Records before this time are excluded from `xi_settled`.
pub const SETTLING_TIME: f64 = 2.0;

/// Relative tolerance on sample spacing before a series counts as non-uniform.
const UNIFORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("sample spacing must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("series is not uniformly sampled near index {index}")]
    NonUniform { index: usize },
    #[error("time and value columns differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub lambda2_min: f64,
    pub t_min: f64,
    /// `max |lambda2_i - lambda2|` over agents and valid records.
    pub xi_empirical: f64,
    /// As `xi_empirical`, restricted to `t >= SETTLING_TIME`; the initial
    /// transient of the estimator otherwise dominates the maximum. Zero when
    /// no valid record is that late.
    pub xi_settled: f64,
    /// `max |lambda2_i - lambda2_tilde|`, with `lambda2_tilde` rebuilt from
    /// the recorded eigenvector estimates and their true mean square.
    pub xi_prime_empirical: f64,
    /// Minimum lambda2 of the undisturbed twin, when one was run.
    pub lambda2_bar_min: Option<f64>,
    pub outcome: Outcome,
}

/// `(k3/k2)(1 - mean(nu^2))`, the estimate every agent would hold if its
/// mean-square tracker were exact.
pub fn lambda2_tilde(nu: &[f64], gains: &EstimatorGains) -> f64 {
    let mean_sq = nu.iter().map(|v| v * v).sum::<f64>() / nu.len() as f64;
    gains.k3 / gains.k2 * (1.0 - mean_sq)
}

fn trace_minimum(trace: &[TraceRecord]) -> (f64, f64) {
    let mut best = (f64::INFINITY, trace[0].t);
    for r in trace {
        if r.lambda2_true < best.0 {
            best = (r.lambda2_true, r.t);
        }
    }
    best
}

/// Metrics of one trace. Records after a connectivity loss are excluded from
/// the estimation error bounds, since the estimates are no longer meaningful.
pub fn trace_metrics(trace: &[TraceRecord], outcome: Outcome, gains: &EstimatorGains) -> Result<RunMetrics, AnalysisError> {
    if trace.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let (lambda2_min, t_min) = trace_minimum(trace);
    let mut xi = 0.0_f64;
    let mut xi_settled = 0.0_f64;
    let mut xi_prime = 0.0_f64;
    for r in trace.iter().filter(|r| r.estimates_valid) {
        let tilde = lambda2_tilde(&r.nu, gains);
        for &est in &r.lambda2_est {
            let err = (est - r.lambda2_true).abs();
            xi = xi.max(err);
            if r.t >= SETTLING_TIME {
                xi_settled = xi_settled.max(err);
            }
            xi_prime = xi_prime.max((est - tilde).abs());
        }
    }
    Ok(RunMetrics {
        lambda2_min,
        t_min,
        xi_empirical: xi,
        xi_settled,
        xi_prime_empirical: xi_prime,
        lambda2_bar_min: None,
        outcome,
    })
}

pub fn compute_metrics(result: &RunResult, reference: Option<&RunResult>) -> Result<RunMetrics, AnalysisError> {
    let mut m = trace_metrics(&result.trace, result.outcome, &result.config.estimator)?;
    if let Some(r) = reference {
        if r.trace.is_empty() {
            return Err(AnalysisError::EmptyTrace);
        }
        m.lambda2_bar_min = Some(trace_minimum(&r.trace).0);
    }
    Ok(m)
}

/// Samples with explicit timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if t.len() != values.len() {
            return Err(AnalysisError::LengthMismatch {
                times: t.len(),
                values: values.len(),
            });
        }
        Ok(Self { t, values })
    }

    pub fn from_uniform(values: Vec<f64>, dt: f64) -> Self {
        let t = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self { t, values }
    }

    /// The common sample spacing, or an error if the spacing varies.
    pub fn uniform_step(&self) -> Result<f64, AnalysisError> {
        if self.t.len() < 2 {
            return Err(AnalysisError::TooShort(self.t.len()));
        }
        let span = self.t[self.t.len() - 1] - self.t[0];
        let dt = span / (self.t.len() - 1) as f64;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(AnalysisError::InvalidStep(dt));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOLERANCE * dt.max(span) {
                return Err(AnalysisError::NonUniform { index: k + 1 });
            }
        }
        Ok(dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Bin frequencies in Hz, from 0 to Nyquist.
    pub freqs: Vec<f64>,
    /// Single-sided amplitude: a sinusoid of amplitude `A` on a bin shows `A`.
    pub magnitude: Vec<f64>,
    /// Share of the signal's `sum x^2` carried by each bin. Sums to the
    /// time-domain energy.
    pub energy: Vec<f64>,
    pub hf_threshold: f64,
    pub hf_fraction: f64,
}

impl SpectrumResult {
    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    /// Frequency of the largest-magnitude bin.
    pub fn peak_frequency(&self) -> f64 {
        let k = self
            .magnitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.freqs[k]
    }
}

pub fn dft(values: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse of [`dft`], including the `1/n` normalization.
pub fn inverse_dft(spectrum: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut buf = spectrum.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Rectangular-window spectrum of a uniformly sampled real series.
pub fn spectrum(values: &[f64], dt: f64, hf_threshold: f64) -> Result<SpectrumResult, AnalysisError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::TooShort(n));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(AnalysisError::InvalidStep(dt));
    }
    let x = dft(values);
    let nf = n as f64;
    let bins = n / 2 + 1;
    let mut freqs = Vec::with_capacity(bins);
    let mut magnitude = Vec::with_capacity(bins);
    let mut energy = Vec::with_capacity(bins);
    for (k, c) in x.iter().take(bins).enumerate() {
        // Bins other than DC and (for even n) Nyquist have a mirror image.
        let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
        let fold = if mirrored { 2.0 } else { 1.0 };
        freqs.push(k as f64 / (nf * dt));
        magnitude.push(fold * c.norm() / nf);
        energy.push(fold * c.norm_sqr() / nf);
    }
    let total: f64 = energy.iter().sum();
    let high: f64 = freqs.iter().zip(&energy).filter(|(f, _)| **f > hf_threshold).map(|(_, e)| e).sum();
    let hf_fraction = if total > 0.0 { high / total } else { 0.0 };
    Ok(SpectrumResult {
        freqs,
        magnitude,
        energy,
        hf_threshold,
        hf_fraction,
    })
}

pub fn spectrum_of(series: &TimeSeries, hf_threshold: f64) -> Result<SpectrumResult, AnalysisError> {
    let dt = series.uniform_step()?;
    spectrum(&series.values, dt, hf_threshold)
}

/// Spectrum of the aggregate connectivity effort of a run.
pub fn control_spectrum(result: &RunResult) -> Result<SpectrumResult, AnalysisError> {
    let series = TimeSeries::new(
        result.trace.iter().map(|r| r.t).collect(),
        result.u_c_series(),
    )?;
    spectrum_of(&series, DEFAULT_HF_THRESHOLD_HZ)
}

/// The per-run numbers a sweep keeps once the trace is dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub p_fail: f64,
    pub eta: f64,
    pub outcome: Outcome,
    pub lambda2_min: f64,
    pub xi_empirical: f64,
    pub hf_fraction: f64,
}

pub fn summarize_run(result: &RunResult) -> Result<RunSummary, AnalysisError> {
    let m = compute_metrics(result, None)?;
    let s = control_spectrum(result)?;
    Ok(RunSummary {
        seed: result.seed,
        p_fail: result.config.disturbance.p_fail,
        eta: result.config.disturbance.eta,
        outcome: m.outcome,
        lambda2_min: m.lambda2_min,
        xi_empirical: m.xi_empirical,
        hf_fraction: s.hf_fraction,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub p_fail: f64,
    pub eta: f64,
    pub runs: usize,
    /// Runs planned for the cell; `runs < expected` marks it incomplete.
    pub expected: usize,
    pub maintained: usize,
    pub rate: f64,
    pub mean_lambda2_min: f64,
    pub mean_xi: f64,
    pub mean_hf_fraction: f64,
}

impl SweepCell {
    pub fn complete(&self) -> bool {
        self.runs >= self.expected
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn cell_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Groups runs by `(p_fail, eta)`, sorted by `p_fail` then `eta`. Cells with
/// fewer than `expected_per_cell` runs are reported as incomplete.
pub fn sweep_summary(runs: &[RunSummary], expected_per_cell: Option<usize>) -> Vec<SweepCell> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in runs {
        let key = (r.p_fail, r.eta);
        if !keys.iter().any(|k| cell_order(*k, key) == Ordering::Equal) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| cell_order(*a, *b));
    keys.into_iter()
        .map(|(p_fail, eta)| {
            let members: Vec<&RunSummary> = runs
                .iter()
                .filter(|r| cell_order((r.p_fail, r.eta), (p_fail, eta)) == Ordering::Equal)
                .collect();
            let maintained = members.iter().filter(|r| r.outcome.is_maintained()).count();
            SweepCell {
                p_fail,
                eta,
                runs: members.len(),
                expected: expected_per_cell.unwrap_or(members.len()),
                maintained,
                rate: maintained as f64 / members.len() as f64,
                mean_lambda2_min: mean(members.iter().map(|r| r.lambda2_min)),
                mean_xi: mean(members.iter().map(|r| r.xi_empirical)),
                mean_hf_fraction: mean(members.iter().map(|r| r.hf_fraction)),
            }
        })
        .collect()
}
