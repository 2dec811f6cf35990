//! Artifact writer. All files of a run go through one `Output`, so writes
//! are serialized even when solves run on several workers.
//!
//! Frozen CSV layouts:
//! - `*_velocity.csv`: `z1,z2,z3,component,value`; components `u1`, `u2`
//!   (dimension 2 only), `u3` at cell centers, then the bottom traces `b1`,
//!   `b2` at `z3 = 0`. `z2` is the origin ordinate in dimension 1.
//! - `full_pressure.csv`: `z1,z2,z3,value`.
//! - `limit_pressure.csv`: `z1,z2,value`.
//! - `metrics.csv`, `sweep_metrics.csv`, `verify_report.csv`: `eps,metric,value`.
//!
//! Numbers are written with 17 significant digits.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thinslip_core::field::ReducedVelocityLayout;
use thinslip_core::{Field, FieldKind, Grid3};

use crate::error::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn time(&mut self, label: impl Into<String>, seconds: f64) {
        self.timings.push((label.into(), seconds));
    }

    fn writer(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>, CliError> {
        self.artifacts.push(name.to_string());
        Ok(csv::Writer::from_path(self.dir.join(name))?)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.artifacts.push(name.to_string());
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    pub fn metrics(&mut self, name: &str, rows: &[(f64, String, f64)]) -> Result<(), CliError> {
        let mut w = self.writer(name)?;
        w.write_record(["eps", "metric", "value"])?;
        for (eps, metric, value) in rows {
            w.write_record([num(*eps), metric.clone(), num(*value)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes a cell-centered velocity (`VelocityReduced`) field.
    pub fn velocity(&mut self, name: &str, field: &Field) -> Result<(), CliError> {
        debug_assert_eq!(field.kind, FieldKind::VelocityReduced);
        let g = &field.grid;
        let lay = ReducedVelocityLayout::new(g);
        let nh = lay.n_horizontal;
        let labels = ["u1", "u2", "u3"];
        let mut w = self.writer(name)?;
        w.write_record(["z1", "z2", "z3", "component", "value"])?;
        for c in 0..=nh {
            let label = if c == nh { labels[2] } else { labels[c] };
            for_cells(g, |cell, z| {
                w.write_record([
                    num(z[0]),
                    num(z[1]),
                    num(z[2]),
                    label.into(),
                    num(field.values[lay.value(c, cell)]),
                ])
            })?;
        }
        for c in 0..nh {
            let label = ["b1", "b2"][c];
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let z = g.reduced.center(i, j);
                    let v = field.values[lay.trace(c, g.reduced.cell_index(i, j))];
                    w.write_record([num(z[0]), num(z[1]), num(0.0), label.into(), num(v)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn pressure(&mut self, name: &str, field: &Field) -> Result<(), CliError> {
        let g = &field.grid;
        let mut w = self.writer(name)?;
        match field.kind {
            FieldKind::PressureFull => {
                w.write_record(["z1", "z2", "z3", "value"])?;
                for_cells(g, |cell, z| {
                    w.write_record([num(z[0]), num(z[1]), num(z[2]), num(field.values[cell])])
                })?;
            }
            _ => {
                w.write_record(["z1", "z2", "value"])?;
                for j in 0..g.ny() {
                    for i in 0..g.nx() {
                        let z = g.reduced.center(i, j);
                        w.write_record([num(z[0]), num(z[1]), num(field.values[g.reduced.cell_index(i, j)])])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json` listing every artifact written so far.
    pub fn finish(mut self, command: &str, config: &Value) -> Result<(), CliError> {
        let mut artifacts = self.artifacts.clone();
        artifacts.push("manifest.json".into());
        let timings: serde_json::Map<String, Value> = self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "artifacts": artifacts,
            "timings_seconds": timings,
            "total_seconds": self.started.elapsed().as_secs_f64(),
        });
        self.json("manifest.json", &manifest)
    }
}

fn for_cells(g: &Grid3, mut f: impl FnMut(usize, [f64; 3]) -> csv::Result<()>) -> Result<(), CliError> {
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let [x, y] = g.reduced.center(i, j);
            let dz = g.dz(i, j);
            for k in 0..g.nz {
                f(g.cell_index(i, j, k), [x, y, (k as f64 + 0.5) * dz])?;
            }
        }
    }
    Ok(())
}
