//! CSV and plain-text writers. Floats use 17 significant digits so that a
//! written value parses back to the same `f64`.

use std::io::{self, Write};

use crate::analysis::{SpectrumResult, SweepCell};
use crate::sim::RunResult;

/// Scientific notation with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn coordinate_name(k: usize) -> String {
    match k {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("c{k}"),
    }
}

pub fn trace_header(n_agents: usize, dim: usize) -> String {
    let mut cols = vec!["t".to_string(), "lambda2".into(), "lambda2_bar".into()];
    cols.extend((1..=n_agents).map(|i| format!("lambda2_i_{i}")));
    cols.push("uc_norm".into());
    for i in 1..=n_agents {
        cols.extend((0..dim).map(|k| format!("{}_{i}", coordinate_name(k))));
    }
    cols.push("connected".into());
    cols.join(",")
}

/// Oracle lambda2 per record, the `lambda2_bar` column of a disturbed run.
pub fn lambda2_series(result: &RunResult) -> Vec<f64> {
    result.trace.iter().map(|r| r.lambda2_true).collect()
}

/// One row per record. `lambda2_bar` is the undisturbed twin's lambda2
/// series; without one the run is its own reference.
pub fn write_trace_csv<W: Write>(mut w: W, result: &RunResult, lambda2_bar: Option<&[f64]>) -> io::Result<()> {
    let n = result.config.n_agents;
    writeln!(w, "{}", trace_header(n, result.config.dim()))?;
    for (k, r) in result.trace.iter().enumerate() {
        let bar = match lambda2_bar {
            Some(series) => series.get(k).copied().unwrap_or(f64::NAN),
            None => r.lambda2_true,
        };
        let mut row = vec![fmt_float(r.t), fmt_float(r.lambda2_true), fmt_float(bar)];
        row.extend(r.lambda2_est.iter().map(|&v| fmt_float(v)));
        row.push(fmt_float(r.u_c_norm));
        for p in &r.positions {
            row.extend(p.coords().iter().map(|&v| fmt_float(v)));
        }
        row.push(if r.connected { "1".into() } else { "0".into() });
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn trace_csv_string(result: &RunResult, lambda2_bar: Option<&[f64]>) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, result, lambda2_bar).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn write_spectrum_csv<W: Write>(mut w: W, s: &SpectrumResult) -> io::Result<()> {
    writeln!(w, "freq_hz,magnitude")?;
    for (f, m) in s.freqs.iter().zip(&s.magnitude) {
        writeln!(w, "{},{}", fmt_float(*f), fmt_float(*m))?;
    }
    Ok(())
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "p_fail",
    "eta",
    "runs",
    "expected",
    "maintained",
    "rate",
    "mean_lambda2_min",
    "mean_xi",
    "mean_hf_fraction",
    "complete",
];

fn summary_fields(c: &SweepCell) -> [String; 10] {
    [
        fmt_float(c.p_fail),
        fmt_float(c.eta),
        c.runs.to_string(),
        c.expected.to_string(),
        c.maintained.to_string(),
        fmt_float(c.rate),
        fmt_float(c.mean_lambda2_min),
        fmt_float(c.mean_xi),
        fmt_float(c.mean_hf_fraction),
        if c.complete() { "yes".into() } else { "no".into() },
    ]
}

pub fn write_summary_csv<W: Write>(mut w: W, cells: &[SweepCell]) -> io::Result<()> {
    writeln!(w, "{}", SUMMARY_COLUMNS.join(","))?;
    for c in cells {
        writeln!(w, "{}", summary_fields(c).join(","))?;
    }
    Ok(())
}

/// Human-readable table with right-aligned columns and short float formatting.
pub fn format_summary_table(cells: &[SweepCell]) -> String {
    let rows: Vec<[String; 10]> = cells
        .iter()
        .map(|c| {
            [
                format!("{:.2}", c.p_fail),
                format!("{:.2}", c.eta),
                c.runs.to_string(),
                c.expected.to_string(),
                c.maintained.to_string(),
                format!("{:.3}", c.rate),
                format!("{:.4}", c.mean_lambda2_min),
                format!("{:.4}", c.mean_xi),
                format!("{:.4}", c.mean_hf_fraction),
                if c.complete() { "yes".into() } else { "INCOMPLETE".into() },
            ]
        })
        .collect();
    let mut widths: Vec<usize> = SUMMARY_COLUMNS.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, field) in widths.iter_mut().zip(row) {
            *w = (*w).max(field.len());
        }
    }
    let line = |fields: Vec<&str>| -> String {
        fields
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{f:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(SUMMARY_COLUMNS.to_vec());
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
