use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn connmaint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_connmaint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const SHORT: &str = "horizon=0.2";

#[test]
fn validate_passes_on_fresh_build() {
    let o = connmaint(&["validate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    for group in ["spectral", "gradient", "filter", "disturbance", "equivalence", "spectrum"] {
        assert!(text.lines().any(|l| l.starts_with(group) && l.contains("PASS")), "{text}");
    }
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = connmaint(&[
            "run", "--seeds", "3,4", "--set", SHORT, "--set", "disturbance.p_fail=0.2", "--set", "disturbance.eta=0.1",
            "-o", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["trace_seed3.csv", "trace_seed4.csv", "metrics.csv", "config.toml", "seeds.txt", "plot_run.py"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
    assert!(read(&a.join("metadata.txt")).contains("unix_time"));
    assert_eq!(read(&a.join("seeds.txt")), "3\n4\n");

    let trace = read(&a.join("trace_seed3.csv"));
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,lambda2,lambda2_bar,lambda2_i_1,"));
    assert!(header.ends_with(",x_5,y_5,connected"));
    assert_eq!(lines.count(), 200);
    let metrics = read(&a.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn config_file_then_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("scenario.toml");
    fs::write(&cfg, "horizon = 0.1\nseed = 9\n[disturbance]\np_fail = 0.1\neta = 0.3\n").unwrap();
    let out = dir.path().join("out");
    let o = connmaint(&[
        "run", "-c", cfg.to_str().unwrap(), "--set", "disturbance.p_fail=0.25", "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = read(&out.join("config.toml"));
    assert!(echoed.contains("p_fail = 0.25"), "{echoed}");
    assert!(echoed.contains("eta = 0.3"), "{echoed}");
    assert!(out.join("trace_seed9.csv").exists());
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = connmaint(&["run", "--set", "disturbance.p_fail=1.5", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("disturbance.p_fail"));

    let o = connmaint(&["run", "--set", "control.bogus=1", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = connmaint(&["run", "-c", "/nonexistent/scenario.toml"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&connmaint(&["no-such-command"])), 1);
    assert_eq!(code(&connmaint(&["--help"])), 0);
}

#[test]
fn one_cell_sweep() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    let o = connmaint(&[
        "sweep", "--p-fail", "0.2", "--eta", "0.5", "--runs", "1", "--set", SHORT, "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(&out.join("summary.csv"));
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].ends_with(",yes"), "{summary}");
    assert!(out.join("runs/p0.2_eta0.5/trace_seed1.csv").exists());
    assert!(read(&out.join("summary.txt")).contains("maintained"));
    assert!(out.join("plot_sweep.py").exists());
    assert!(read(&out.join("grid.toml")).contains("p_fail = [0.2]"));
}

#[test]
fn failed_runs_leave_cells_incomplete_and_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    // Five agents scattered over a 1 km square with one placement attempt
    // essentially never form a connected graph.
    let o = connmaint(&[
        "sweep", "--p-fail", "0,0.1", "--runs", "2", "--set", SHORT, "--set", "init_box_max=[1000.0, 1000.0]",
        "--set", "max_init_retries=1", "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let summary = read(&out.join("summary.csv"));
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with(",no")), "{summary}");
    assert!(read(&out.join("summary.txt")).contains("INCOMPLETE"));
}

#[test]
fn spectrum_from_runs_and_from_trace() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("spectra");
    let o = connmaint(&["spectrum", "--seeds", "2", "--set", SHORT, "--set", "disturbance.eta=0.5", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("spectrum_seed2.csv"));
    assert_eq!(csv.lines().next().unwrap(), "freq_hz,magnitude");
    // 200 samples give 101 bins from 0 to 500 Hz.
    assert_eq!(csv.lines().count(), 102);

    let trace = dir.path().join("t.csv");
    fs::write(&trace, "t,uc_norm\n0.0,1.0\n0.001,0.0\n0.002,1.0\n0.003,0.0\n").unwrap();
    let o = connmaint(&["spectrum", "--trace", trace.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("spectrum_t.csv"));
    assert_eq!(csv.lines().count(), 4);

    let bad = dir.path().join("uneven.csv");
    fs::write(&bad, "t,uc_norm\n0.0,1.0\n0.001,0.0\n0.005,1.0\n").unwrap();
    let o = connmaint(&["spectrum", "--trace", bad.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not uniformly sampled"));
}
