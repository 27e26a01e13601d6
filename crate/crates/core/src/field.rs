//! Piecewise-constant space-time fields on uniform grids, shared by the
//! particle and continuum sides so they can be compared directly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `cells` intervals of width `dx` starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub origin: f64,
    pub dx: f64,
    pub cells: usize,
}

impl UniformGrid {
    pub fn unit(cells: usize) -> Self {
        Self {
            origin: 0.0,
            dx: 1.0 / cells as f64,
            cells,
        }
    }

    pub fn left(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.dx
    }

    pub fn center(&self, j: usize) -> f64 {
        self.origin + (j as f64 + 0.5) * self.dx
    }

    pub fn end(&self) -> f64 {
        self.left(self.cells)
    }
}

/// Values on `grid` at each of `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub grid: UniformGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: UniformGrid, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() || values.iter().any(|v| v.len() != grid.cells) {
            return Err(Error::Incompatible(
                "field values do not match its grid and time list".into(),
            ));
        }
        Ok(Self { grid, times, values })
    }

    /// Cell averages of `self` over the cells of `target`, exact for
    /// piecewise-constant data. `target` must lie inside this field's grid.
    pub fn restrict_to(&self, target: UniformGrid) -> Result<SpaceTimeField> {
        let src = self.grid;
        let slack = 1e-9 * src.dx;
        if target.origin < src.origin - slack || target.end() > src.end() + slack {
            return Err(Error::Incompatible(format!(
                "target grid [{}, {}] not covered by [{}, {}]",
                target.origin,
                target.end(),
                src.origin,
                src.end()
            )));
        }
        // overlap weights, shared by every time slice
        let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(target.cells);
        for j in 0..target.cells {
            let (a, b) = (target.left(j), target.left(j + 1));
            let first = (((a - src.origin) / src.dx).floor().max(0.0)) as usize;
            let mut row = Vec::new();
            let mut s = first;
            while s < src.cells && src.left(s) < b {
                let lo = a.max(src.left(s));
                let hi = b.min(src.left(s + 1));
                if hi > lo {
                    row.push((s, (hi - lo) / (b - a)));
                }
                s += 1;
            }
            let total: f64 = row.iter().map(|(_, w)| w).sum();
            for w in &mut row {
                w.1 /= total;
            }
            weights.push(row);
        }
        let values = self
            .values
            .iter()
            .map(|v| {
                weights
                    .iter()
                    .map(|row| row.iter().map(|&(s, w)| w * v[s]).sum())
                    .collect()
            })
            .collect();
        SpaceTimeField::new(target, self.times.clone(), values)
    }

    /// Rows `time,x,value` after `#` header lines carrying `meta` and the time list.
    pub fn to_csv(&self, meta: &str) -> String {
        let mut out = String::new();
        let times: Vec<String> = self.times.iter().map(|t| format!("{t}")).collect();
        let _ = writeln!(out, "# {meta}");
        let _ = writeln!(out, "# times={}", times.join(";"));
        out.push_str("time,x,value\n");
        for (t, row) in self.times.iter().zip(&self.values) {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{t},{:.10},{:.10}", self.grid.center(j), v);
            }
        }
        out
    }
}
