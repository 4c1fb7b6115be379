//! Deterministic output artifacts: CSV and JSON writers with overwrite
//! protection, plus the meta.json echo.

use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::{fmt_f64, CliError, CliResult};

pub struct OutDir {
    dir: PathBuf,
    force: bool,
}

impl OutDir {
    /// Creates the output directory (idempotent) and remembers the
    /// overwrite policy.
    pub fn create(dir: &Path, force: bool) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            force,
        })
    }

    fn target(&self, name: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        if path.exists() && !self.force {
            return Err(CliError::Config(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.target(name)?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Domain(format!("serialization failed: {e}")))?;
        self.write_text(name, &(text + "\n"))
    }
}

/// CSV with columns `t, x_1, ..., x_N`.
pub fn trajectory_csv(times: &[f64], states: &[Vec<f64>]) -> String {
    let n = states.first().map_or(0, |row| row.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for (t, row) in times.iter().zip(states) {
        out.push_str(&fmt_f64(*t));
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Long-format report CSV: `N,t,l,empirical,predicted,gap`.
pub fn report_csv(rows: &[jacobi_core::harness::ReportRow]) -> String {
    let mut out = String::from("N,t,l,empirical,predicted,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            fmt_f64(r.t),
            r.l,
            fmt_f64(r.empirical),
            fmt_f64(r.predicted),
            fmt_f64(r.gap)
        ));
    }
    out
}

/// Long-format moment CSV: `t,l,value`.
pub fn moments_csv(t_grid: &[f64], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("t,l,value\n");
    for (t, values) in t_grid.iter().zip(rows) {
        for (l, v) in values.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt_f64(*t), l, fmt_f64(*v)));
        }
    }
    out
}

#[derive(Serialize)]
pub struct Meta<'a, C: Serialize> {
    pub schema: u32,
    pub tool: ToolInfo<'a>,
    pub subcommand: &'a str,
    pub config: &'a C,
    pub seed_override: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Serialize)]
pub struct ToolInfo<'a> {
    pub name: &'a str,
    pub version: &'a str,
}

pub fn meta<'a, C: Serialize>(
    subcommand: &'a str,
    config: &'a C,
    seed_override: Option<u64>,
    jobs: Option<usize>,
) -> Meta<'a, C> {
    Meta {
        schema: 1,
        tool: ToolInfo {
            name: "jacobi-lab",
            version: env!("CARGO_PKG_VERSION"),
        },
        subcommand,
        config,
        seed_override,
        jobs,
    }
}
