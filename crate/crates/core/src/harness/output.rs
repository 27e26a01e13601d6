//! Report files: tables and plots alongside a JSON summary. Emission is a
//! pure function of the report, so re-emitting gives identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiments::{BoundaryReport, OracleReport, ScalingReport, SolverDiagnostics, SweepReport};
use super::svg::{Plot, Series};
use crate::error::Result;

/// Everything one invocation produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sweep: Option<SweepReport>,
    pub boundary: Option<BoundaryReport>,
    pub oracle: Option<OracleReport>,
    pub diagnostics: Option<SolverDiagnostics>,
    pub scaling: Option<ScalingReport>,
}

impl RunReport {
    /// True when every verdict that was computed passed.
    pub fn passed(&self) -> bool {
        self.sweep.as_ref().map_or(true, |s| s.passed)
            && self.boundary.as_ref().map_or(true, |b| b.passed)
            && self.oracle.as_ref().map_or(true, |o| o.passed)
            && self
                .diagnostics
                .as_ref()
                .map_or(true, |d| d.entropy_passed && d.energy_passed)
            && self.scaling.as_ref().map_or(true, |s| s.passed)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn sweep_csv(sweep: Option<&SweepReport>) -> String {
    let times: Vec<f64> = sweep.map_or_else(Vec::new, |s| s.config.obs_times.clone());
    let mut out = String::from("n,k,sigma,members,events");
    for t in &times {
        let _ = write!(out, ",l1_t{t}");
    }
    out.push_str(",l1_mean,error\n");
    for row in sweep.iter().flat_map(|s| &s.rows) {
        let s = row.summary.as_ref();
        let _ = write!(
            out,
            "{},{},{},{},{}",
            row.n,
            s.map_or(String::new(), |s| s.k.to_string()),
            opt(s.map(|s| s.sigma)),
            s.map_or(String::new(), |s| s.members.to_string()),
            s.map_or(String::new(), |s| s.events.to_string())
        );
        for i in 0..times.len() {
            let _ = write!(out, ",{}", opt(row.l1.as_ref().map(|d| d.per_time[i])));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            opt(row.l1.as_ref().map(|d| d.mean)),
            row.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}

fn convergence_plot(sweep: &SweepReport) -> String {
    let points: Vec<(f64, f64)> = sweep
        .rows
        .iter()
        .filter_map(|r| r.l1.as_ref().map(|d| (r.n as f64, d.mean)))
        .collect();
    let reference: Vec<(f64, f64)> = points
        .first()
        .map(|&(n0, e0)| {
            points
                .iter()
                .map(|&(n, _)| (n, e0 * (n0 / n).powf(1.0 / 3.0)))
                .collect()
        })
        .unwrap_or_default();
    Plot {
        title: "L1 distance to the entropy solution".into(),
        x_label: "N".into(),
        y_label: "mean L1 distance".into(),
        log_log: true,
        series: vec![
            Series {
                name: "measured".into(),
                points,
                dashed: false,
                markers: true,
            },
            Series {
                name: "slope -1/3".into(),
                points: reference,
                dashed: true,
                markers: false,
            },
        ],
    }
    .render()
}

fn density_plot(sweep: &SweepReport, obs: usize) -> String {
    let t = sweep.config.obs_times[obs];
    let mut series: Vec<Series> = sweep
        .rows
        .iter()
        .filter_map(|r| r.summary.as_ref())
        .map(|s| {
            let f = &s.field().field;
            Series {
                name: format!("N = {}", s.n),
                points: (0..f.grid.cells)
                    .map(|j| (f.grid.center(j), f.values[obs][j]))
                    .collect(),
                dashed: false,
                markers: false,
            }
        })
        .collect();
    if let Some(pde) = &sweep.pde.field {
        series.push(Series {
            name: format!("PDE M = {}", sweep.pde.cells),
            points: (0..pde.grid.cells)
                .step_by((pde.grid.cells / 512).max(1))
                .map(|j| (pde.grid.center(j), pde.values[obs][j]))
                .collect(),
            dashed: true,
            markers: false,
        });
    }
    Plot {
        title: format!("density at t = {t}"),
        x_label: "x".into(),
        y_label: "u".into(),
        log_log: false,
        series,
    }
    .render()
}

fn boundary_csvs(b: &BoundaryReport) -> (String, String) {
    let mut pin = String::from("n,edge,t,y,average,se,target,gap\n");
    for r in &b.pinning {
        let _ = writeln!(
            pin,
            "{},{:?},{},{},{},{},{},{}",
            r.n, r.edge, r.t, r.y, r.average.mean, r.average.se, r.target, r.gap
        );
    }
    let mut ins = String::from("n,gap_mean,error\n");
    for r in &b.insensitivity {
        let _ = writeln!(
            ins,
            "{},{},{}",
            r.n,
            opt(r.gap.as_ref().map(|g| g.mean)),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    (pin, ins)
}

fn oracle_csv(o: &OracleReport) -> String {
    let mut out = String::from("n,p,sigma,t,site,empirical,exact,z\n");
    for r in &o.rows {
        for (i, z) in r.table.z.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n, r.p, r.sigma, r.table.time, i, r.table.empirical[i], r.table.exact[i], z
            );
        }
    }
    out
}

fn diagnostics_csv(d: &SolverDiagnostics) -> String {
    let mut out = String::from("cells,energy,entropy_floor,entropy_tolerance,entropy_passed\n");
    for r in &d.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.cells, r.energy, r.entropy_floor, r.entropy_tolerance, r.entropy_passed
        );
    }
    out
}

fn scaling_csv(s: &ScalingReport) -> String {
    let mut out = String::from("quantity,n,k,sigma,residual,se,envelope,relative\n");
    for (name, rows) in [("one_block", &s.one_block), ("h1", &s.h1)] {
        for r in rows {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{},{},{}",
                r.n, r.k, r.sigma, r.residual.mean, r.residual.se, r.envelope, r.relative
            );
        }
    }
    out
}

/// Writes the report under `dir` and returns the written paths in order.
pub fn emit_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(PathBuf, String)> = vec![
        (dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n"),
        (dir.join("sweep.csv"), sweep_csv(report.sweep.as_ref())),
    ];
    if let Some(sweep) = &report.sweep {
        let fields = dir.join("fields");
        for row in &sweep.rows {
            if let Some(s) = &row.summary {
                files.push((fields.join(format!("empirical_N{}.csv", row.n)), s.field().to_csv()));
            }
        }
        if let Some(pde) = &sweep.pde.field {
            files.push((
                fields.join(format!("pde_M{}.csv", sweep.pde.cells)),
                pde.to_csv(&format!("M={} p={}", sweep.pde.cells, sweep.config.p)),
            ));
        }
        if sweep.rows.iter().any(|r| r.l1.is_some()) {
            files.push((dir.join("convergence.svg"), convergence_plot(sweep)));
            for (o, t) in sweep.config.obs_times.iter().enumerate() {
                files.push((dir.join(format!("density_t{t}.svg")), density_plot(sweep, o)));
            }
        }
    }
    if let Some(b) = &report.boundary {
        let (pin, ins) = boundary_csvs(b);
        files.push((dir.join("boundary_pinning.csv"), pin));
        files.push((dir.join("rate_insensitivity.csv"), ins));
    }
    if let Some(o) = &report.oracle {
        files.push((dir.join("oracle.csv"), oracle_csv(o)));
    }
    if let Some(d) = &report.diagnostics {
        files.push((dir.join("diagnostics.csv"), diagnostics_csv(d)));
    }
    if let Some(s) = &report.scaling {
        files.push((dir.join("block_scaling.csv"), scaling_csv(s)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_gives_header_only_table() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(&RunReport::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv, "n,k,sigma,members,events,l1_mean,error\n");
        assert!(RunReport::default().passed());
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(emit_outputs(&RunReport::default(), &blocker.join("out")).is_err());
    }
}
