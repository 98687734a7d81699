//! Output directory layout: effective config, seed list, metadata, data files
//! and plot scripts.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

use connmaint::config::ScenarioConfig;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.path(name), contents.as_bytes())
    }

    /// Everything needed to reproduce the invocation. Only `metadata.txt`
    /// carries a timestamp.
    pub fn echo_inputs(&self, cfg: &ScenarioConfig, seeds: &[u64], command: &str) -> Result<()> {
        self.write("config.toml", &cfg.to_toml())?;
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        self.write("seeds.txt", &(list.join("\n") + "\n"))?;
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.write(
            "metadata.txt",
            &format!(
                "command: {command}\nversion: {}\nunix_time: {secs}\n",
                env!("CARGO_PKG_VERSION")
            ),
        )
    }
}

/// Writes through a temporary file and renames, so a reader never sees a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_file_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf).with_context(|| format!("formatting {}", path.display()))?;
    write_atomic(path, &buf)
}

pub const PLOT_RUN: &str = r#"#!/usr/bin/env python3
"""Connectivity and control effort for every trace_seed*.csv next to this script."""
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "trace_seed*.csv"))):
    df = pd.read_csv(path)
    stem = os.path.splitext(os.path.basename(path))[0]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for col in [c for c in df.columns if c.startswith("lambda2_i_")]:
        ax.plot(df["t"], df[col], lw=0.7, alpha=0.7, label=col)
    ax.plot(df["t"], df["lambda2"], "k", lw=1.6, label="lambda2")
    ax.plot(df["t"], df["lambda2_bar"], "k--", lw=1.2, label="lambda2 (undisturbed)")
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("algebraic connectivity")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(os.path.join(here, stem + "_lambda2.png"), dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(df["t"], df["uc_norm"], lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("|u_c|")
    fig.tight_layout()
    fig.savefig(os.path.join(here, stem + "_uc.png"), dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 5))
    n = len([c for c in df.columns if c.startswith("x_")])
    for i in range(1, n + 1):
        ax.plot(df[f"x_{i}"], df[f"y_{i}"], lw=0.8)
        ax.plot(df[f"x_{i}"].iloc[-1], df[f"y_{i}"].iloc[-1], "o")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(os.path.join(here, stem + "_paths.png"), dpi=150)
    plt.close(fig)
"#;

pub const PLOT_SWEEP: &str = r#"#!/usr/bin/env python3
"""Maintenance rate over the (p_fail, eta) grid from summary.csv."""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))
df = pd.read_csv(os.path.join(here, "summary.csv"))
grid = df.pivot(index="eta", columns="p_fail", values="rate")

fig, ax = plt.subplots(figsize=(9, 4))
im = ax.imshow(grid.values, origin="lower", aspect="auto", vmin=0.0, vmax=1.0, cmap="viridis")
ax.set_xticks(range(len(grid.columns)), [f"{v:g}" for v in grid.columns], rotation=45)
ax.set_yticks(range(len(grid.index)), [f"{v:g}" for v in grid.index])
ax.set_xlabel("p_fail")
ax.set_ylabel("eta")
fig.colorbar(im, label="maintenance rate")
fig.tight_layout()
fig.savefig(os.path.join(here, "summary_rate.png"), dpi=150)

fig, ax = plt.subplots(figsize=(7, 4))
for eta, part in df.groupby("eta"):
    ax.plot(part["p_fail"], part["rate"], "o-", label=f"eta={eta:g}")
ax.set_xlabel("p_fail")
ax.set_ylabel("maintenance rate")
ax.set_ylim(-0.05, 1.05)
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(os.path.join(here, "summary_rate_lines.png"), dpi=150)
"#;

pub const PLOT_SPECTRUM: &str = r#"#!/usr/bin/env python3
"""Single-sided amplitude spectrum for every spectrum_*.csv next to this script."""
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "spectrum_*.csv"))):
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.semilogy(df["freq_hz"], df["magnitude"], lw=0.7)
    ax.axvline(10.0, color="red", lw=0.8, ls="--")
    ax.set_xlabel("f [Hz]")
    ax.set_ylabel("|U_c(f)|")
    fig.tight_layout()
    fig.savefig(os.path.splitext(path)[0] + ".png", dpi=150)
    plt.close(fig)
"#;
