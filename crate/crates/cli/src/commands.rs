use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use connmaint::analysis::{
    compute_metrics, control_spectrum, spectrum_of, summarize_run, sweep_summary, RunSummary, SpectrumResult, SweepCell,
    TimeSeries, DEFAULT_HF_THRESHOLD_HZ,
};
use connmaint::config::{parse_config, ScenarioConfig};
use connmaint::export::{
    fmt_float, format_summary_table, lambda2_series, write_spectrum_csv, write_summary_csv, write_trace_csv,
};
use connmaint::sim::{batch_map, run_scenario, Execution, Outcome, RunResult};
use connmaint::validate;

use crate::output::{write_file_with, OutputDir, PLOT_RUN, PLOT_SPECTRUM, PLOT_SWEEP};

/// Failure classes, mapped to process exit codes by `main`.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(anyhow::Error),
    /// I/O or simulation failure.
    Runtime(anyhow::Error),
    /// A validation group failed.
    Validation,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Validation => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn runtime<T>(r: Result<T>) -> CliResult<T> {
    r.map_err(CliError::Runtime)
}

/// Reads the config file (if any) and applies overrides on top.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<ScenarioConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("reading config {}", p.display()))
            .map_err(CliError::Usage)?,
        None => String::new(),
    };
    parse_config(&text, overrides).map_err(|e| CliError::Usage(anyhow!(e)))
}

fn outcome_fields(o: Outcome) -> (&'static str, String) {
    match o {
        Outcome::Maintained => ("maintained", String::new()),
        Outcome::Lost { t_loss } => ("lost", fmt_float(t_loss)),
    }
}

/// The undisturbed twin's lambda2 series, when the run is disturbed.
fn reference_series(cfg: &ScenarioConfig) -> Result<Option<Vec<f64>>> {
    if !cfg.disturbance.is_active() {
        return Ok(None);
    }
    let mut twin = cfg.clone();
    twin.disturbance = cfg.disturbance.disabled();
    Ok(Some(lambda2_series(&run_scenario(&twin)?)))
}

const METRICS_HEADER: &str = "seed,outcome,t_loss,lambda2_min,t_min,xi,xi_settled,xi_prime,lambda2_bar_min,hf_fraction";

fn metrics_row(result: &RunResult, bar: Option<&[f64]>) -> Result<String> {
    let m = compute_metrics(result, None)?;
    let hf = control_spectrum(result)?.hf_fraction;
    let bar_min = bar.map(|s| s.iter().copied().fold(f64::INFINITY, f64::min)).unwrap_or(m.lambda2_min);
    let (outcome, t_loss) = outcome_fields(m.outcome);
    Ok(format!(
        "{},{outcome},{t_loss},{},{},{},{},{},{},{}",
        result.seed,
        fmt_float(m.lambda2_min),
        fmt_float(m.t_min),
        fmt_float(m.xi_empirical),
        fmt_float(m.xi_settled),
        fmt_float(m.xi_prime_empirical),
        fmt_float(bar_min),
        fmt_float(hf)
    ))
}

fn seeded(cfg: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.seed = seed;
    c
}

pub fn cmd_run(cfg: &ScenarioConfig, seeds: &[u64], execution: Execution, out: &OutputDir, command: &str) -> CliResult<()> {
    runtime(out.echo_inputs(cfg, seeds, command))?;
    runtime(out.write("plot_run.py", PLOT_RUN))?;
    let rows = batch_map(cfg, seeds, execution, |r| -> Result<(String, String)> {
        let r = r?;
        let bar = reference_series(&seeded(cfg, r.seed))?;
        let path = out.path(&format!("trace_seed{}.csv", r.seed));
        write_file_with(&path, |buf| write_trace_csv(buf, &r, bar.as_deref()))?;
        let row = metrics_row(&r, bar.as_deref())?;
        let line = match r.outcome {
            Outcome::Maintained => format!("seed {}: maintained", r.seed),
            Outcome::Lost { t_loss } => format!("seed {}: lost at t = {t_loss:.3} s", r.seed),
        };
        Ok((row, line))
    });
    let mut csv = format!("{METRICS_HEADER}\n");
    let mut errors = Vec::new();
    for (seed, row) in seeds.iter().zip(rows) {
        match row {
            Ok((row, line)) => {
                csv.push_str(&row);
                csv.push('\n');
                println!("{line}");
            }
            Err(e) => errors.push(format!("seed {seed}: {e:#}")),
        }
    }
    runtime(out.write("metrics.csv", &csv))?;
    fail_on(errors)
}

fn fail_on(errors: Vec<String>) -> CliResult<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow!("{} run(s) failed:\n  {}", errors.len(), errors.join("\n  "))))
    }
}

pub struct Grid {
    pub p_fail: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Grid {
    pub fn full() -> Self {
        Self {
            p_fail: (0..=14).map(|k| k as f64 * 0.05).map(|p| (p * 100.0).round() / 100.0).collect(),
            eta: vec![0.0, 0.1, 0.3, 0.5, 1.0, 5.0],
        }
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        self.p_fail.iter().flat_map(|&p| self.eta.iter().map(move |&e| (p, e))).collect()
    }
}

fn pending_cell(p_fail: f64, eta: f64, expected: usize) -> SweepCell {
    SweepCell {
        p_fail,
        eta,
        runs: 0,
        expected,
        maintained: 0,
        rate: f64::NAN,
        mean_lambda2_min: f64::NAN,
        mean_xi: f64::NAN,
        mean_hf_fraction: f64::NAN,
    }
}

fn write_summary(out: &OutputDir, grid: &Grid, done: &[RunSummary], expected: usize) -> Result<Vec<SweepCell>> {
    let finished = sweep_summary(done, Some(expected));
    let cells: Vec<SweepCell> = grid
        .cells()
        .into_iter()
        .map(|(p, e)| {
            finished
                .iter()
                .find(|c| c.p_fail == p && c.eta == e)
                .cloned()
                .unwrap_or_else(|| pending_cell(p, e, expected))
        })
        .collect();
    write_file_with(&out.path("summary.csv"), |buf| write_summary_csv(buf, &cells))?;
    out.write("summary.txt", &format_summary_table(&cells))?;
    Ok(cells)
}

pub struct SweepOptions {
    pub write_traces: bool,
}

pub fn cmd_sweep(
    cfg: &ScenarioConfig,
    grid: &Grid,
    seeds: &[u64],
    execution: Execution,
    options: &SweepOptions,
    out: &OutputDir,
    command: &str,
) -> CliResult<()> {
    runtime(out.echo_inputs(cfg, seeds, command))?;
    let grid_text = format!(
        "p_fail = [{}]\neta = [{}]\n",
        grid.p_fail.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
        grid.eta.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
    );
    runtime(out.write("grid.toml", &grid_text))?;
    runtime(out.write("plot_sweep.py", PLOT_SWEEP))?;
    let expected = seeds.len();
    let mut done: Vec<RunSummary> = Vec::new();
    runtime(write_summary(out, grid, &done, expected))?;

    // The undisturbed twin does not depend on the cell, so compute it once per seed.
    let quiet = {
        let mut c = cfg.clone();
        c.disturbance = cfg.disturbance.disabled();
        c
    };
    let references: Vec<Result<Vec<f64>, String>> = if options.write_traces {
        batch_map(&quiet, seeds, execution, |r| r.map(|r| lambda2_series(&r)).map_err(|e| e.to_string()))
    } else {
        Vec::new()
    };

    let mut errors = Vec::new();
    for (p_fail, eta) in grid.cells() {
        let mut cell_cfg = cfg.clone();
        cell_cfg.disturbance.p_fail = p_fail;
        cell_cfg.disturbance.eta = eta;
        if let Err(e) = cell_cfg.validate() {
            return Err(CliError::Usage(anyhow!(e)));
        }
        let dir = if options.write_traces {
            Some(runtime(out.subdir(&format!("runs/p{p_fail}_eta{eta}")))?)
        } else {
            None
        };
        let results = batch_map(&cell_cfg, seeds, execution, |r| -> Result<RunSummary> {
            let r = r?;
            if let Some(dir) = &dir {
                let k = seeds.iter().position(|&s| s == r.seed).expect("seed from list");
                let bar = references.get(k).and_then(|b| b.as_ref().ok()).map(Vec::as_slice);
                let path: PathBuf = dir.join(format!("trace_seed{}.csv", r.seed));
                write_file_with(&path, |buf| write_trace_csv(buf, &r, bar))?;
            }
            Ok(summarize_run(&r)?)
        });
        for (seed, r) in seeds.iter().zip(results) {
            match r {
                Ok(s) => done.push(s),
                Err(e) => errors.push(format!("p_fail={p_fail} eta={eta} seed {seed}: {e:#}")),
            }
        }
        let cells = runtime(write_summary(out, grid, &done, expected))?;
        if let Some(c) = cells.iter().find(|c| c.p_fail == p_fail && c.eta == eta) {
            println!(
                "p_fail={p_fail} eta={eta}: {}/{} maintained",
                c.maintained, c.runs
            );
        }
    }
    let cells = runtime(write_summary(out, grid, &done, expected))?;
    print!("{}", format_summary_table(&cells));
    fail_on(errors)
}

fn write_spectrum(out: &OutputDir, name: &str, s: &SpectrumResult) -> Result<()> {
    write_file_with(&out.path(&format!("spectrum_{name}.csv")), |buf| write_spectrum_csv(buf, s))
}

pub fn cmd_spectrum(cfg: &ScenarioConfig, seeds: &[u64], execution: Execution, out: &OutputDir, command: &str) -> CliResult<()> {
    runtime(out.echo_inputs(cfg, seeds, command))?;
    runtime(out.write("plot_spectrum.py", PLOT_SPECTRUM))?;
    let results = batch_map(cfg, seeds, execution, |r| -> Result<String> {
        let r = r?;
        let s = control_spectrum(&r)?;
        write_spectrum(out, &format!("seed{}", r.seed), &s)?;
        Ok(format!(
            "seed {}: hf_fraction (> {} Hz) = {:.6}, peak {:.3} Hz",
            r.seed, s.hf_threshold, s.hf_fraction, s.peak_frequency()
        ))
    });
    let mut errors = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => errors.push(format!("seed {seed}: {e:#}")),
        }
    }
    fail_on(errors)
}

/// Spectrum of the `uc_norm` column of an existing trace CSV.
pub fn cmd_spectrum_from_trace(trace: &Path, out: &OutputDir) -> CliResult<()> {
    let text = fs::read_to_string(trace)
        .with_context(|| format!("reading {}", trace.display()))
        .map_err(CliError::Usage)?;
    let series = parse_trace_columns(&text).map_err(CliError::Usage)?;
    let s = spectrum_of(&series, DEFAULT_HF_THRESHOLD_HZ).map_err(|e| CliError::Usage(anyhow!(e)))?;
    runtime(out.write("plot_spectrum.py", PLOT_SPECTRUM))?;
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    runtime(write_spectrum(out, stem, &s))?;
    println!("{stem}: hf_fraction (> {} Hz) = {:.6}, peak {:.3} Hz", s.hf_threshold, s.hf_fraction, s.peak_frequency());
    Ok(())
}

fn parse_trace_columns(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("empty trace file"))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| anyhow!("trace has no `{name}` column"));
    let (ti, ui) = (col("t")?, col("uc_norm")?);
    let (mut t, mut u) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| anyhow!("line {}: too few fields", k + 2))?
                .parse::<f64>()
                .with_context(|| format!("line {}: bad number", k + 2))
        };
        t.push(get(ti)?);
        u.push(get(ui)?);
    }
    Ok(TimeSeries::new(t, u)?)
}

pub fn cmd_validate() -> CliResult<()> {
    let reports = validate::run_all();
    let mut text = String::new();
    for r in &reports {
        let _ = writeln!(text, "{:<12} {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    print!("{text}");
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::Validation)
    }
}
