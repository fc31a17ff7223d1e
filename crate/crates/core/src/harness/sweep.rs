//! Grid sweeps over preset parameters.
//!
//! A grid file names a base preset, optional fixed overrides and one or more
//! axes. Keys listed together in one axis move in lockstep; separate axes
//! form a Cartesian product.
//!
//! ```toml
//! base = "ellipse-slow"
//!
//! [set]
//! duration = 30.0
//!
//! [[axis]]
//! keys = ["controller.gamma1", "controller.gamma2", "controller.alpha1", "controller.alpha2"]
//! values = [0.1, 1.0]
//! ```

use std::io::Write;

use rayon::prelude::*;
use serde::Deserialize;

use super::preset::{resolve, Preset};
use super::records::RunMetrics;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub keys: Vec<String>,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub base: String,
    #[serde(default)]
    pub set: toml::Table,
    #[serde(default, rename = "axis")]
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let grid: Grid = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for axis in &grid.axes {
            if axis.keys.is_empty() || axis.values.is_empty() {
                return Err(HarnessError::Config("every axis needs at least one key and one value".into()));
            }
        }
        Ok(grid)
    }

    /// Every grid point as `(axis label, value)` pairs, first axis slowest.
    pub fn points(&self) -> Vec<Vec<(usize, toml::Value)>> {
        let mut points: Vec<Vec<(usize, toml::Value)>> = vec![Vec::new()];
        for (i, axis) in self.axes.iter().enumerate() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((i, v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn labels(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.keys.join("+")).collect()
    }

    fn preset_for(&self, point: &[(usize, toml::Value)]) -> Result<Preset, HarnessError> {
        let mut p = resolve(&self.base)?;
        for (k, v) in &self.set {
            p.set(k, v.clone())?;
        }
        for (axis, value) in point {
            for key in &self.axes[*axis].keys {
                p.set(key, value.clone())?;
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    pub metrics: RunMetrics,
}

fn failed_row(name: &str, err: &HarnessError) -> RunMetrics {
    RunMetrics {
        preset: name.to_string(),
        records: 0,
        final_time: 0.0,
        rmse_e1: f64::NAN,
        rmse_e1_late: f64::NAN,
        max_input: f64::NAN,
        v4_initial: f64::NAN,
        v4_final: f64::NAN,
        guard_tripped: false,
        min_thrust: f64::NAN,
        error: Some(err.to_string()),
    }
}

/// Runs every grid point on a pool of `jobs` threads. Failed runs become rows.
pub fn sweep(grid: &Grid, jobs: usize) -> Result<Vec<SweepRow>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let points = grid.points();
    let rows = pool.install(|| {
        points
            .par_iter()
            .map(|point| {
                let values = point.iter().map(|(_, v)| v.to_string()).collect();
                let metrics = match grid.preset_for(point) {
                    Ok(p) => match p.simulate() {
                        Ok(run) => RunMetrics::from_run(&p.name, &run),
                        Err(e) => failed_row(&p.name, &e),
                    },
                    Err(e) => failed_row(&grid.base, &e),
                };
                SweepRow { values, metrics }
            })
            .collect()
    });
    Ok(rows)
}

pub fn write_sweep<W: Write>(out: W, grid: &Grid, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["point".to_string()];
    header.extend(grid.labels());
    header.extend(RunMetrics::COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.values.iter().cloned());
        rec.extend(row.metrics.row());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin;

    #[test]
    fn cartesian_points() {
        let g = Grid::from_toml(
            "base = \"regulation\"\n[[axis]]\nkeys = [\"controller.k1\"]\nvalues = [1.0, 2.0]\n[[axis]]\nkeys = [\"dt\", \"settle\"]\nvalues = [1e-3, 2e-3, 5e-3]\n",
        )
        .unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1][1].1, toml::Value::Float(2e-3));
        assert_eq!(g.labels(), vec!["controller.k1", "dt+settle"]);
    }

    #[test]
    fn single_point_matches_direct_run() {
        let g = Grid::from_toml("base = \"regulation\"\n[set]\nduration = 0.5\n").unwrap();
        let rows = sweep(&g, 2).unwrap();
        assert_eq!(rows.len(), 1);
        let mut p = builtin("regulation").unwrap();
        p.duration = Some(0.5);
        let direct = RunMetrics::from_run(&p.name, &p.simulate().unwrap());
        assert_eq!(rows[0].metrics, direct);
    }

    #[test]
    fn failures_become_rows() {
        let g = Grid::from_toml(
            "base = \"singular-hover\"\n[set]\nduration = 0.5\n[[axis]]\nkeys = [\"controller.eps_f\"]\nvalues = [1e-6, 50.0, -1.0]\n",
        )
        .unwrap();
        let rows = sweep(&g, 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].metrics.error.is_none());
        assert!(rows[1].metrics.guard_tripped);
        assert!(rows[2].metrics.error.as_deref().unwrap().contains("eps_f"));
        let mut buf = Vec::new();
        write_sweep(&mut buf, &g, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
