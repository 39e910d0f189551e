//! Plain-text file formats: field snapshots, series CSVs and JSON reports.

use crate::error::{HarnessError, Result};
use glb_core::dynamics::Tick;
use glb_core::modulation::ModulationSample;
use glb_core::{RadialField, RadialGrid, C64};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SNAPSHOT_HEADER: &str = "r,re_u,im_u";
pub const TRAJECTORY_HEADER: &str = "t,E,norm_E,tension_l2,dtu_l2,linf,dissipation_accum";

pub fn write_snapshot(path: &Path, u: &RadialField) -> Result<()> {
    let mut s = String::with_capacity(64 * u.len());
    s.push_str(SNAPSHOT_HEADER);
    s.push('\n');
    for (r, v) in u.grid().nodes().iter().zip(u.values()) {
        let _ = writeln!(s, "{},{},{}", num(*r), num(v.re), num(v.im));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Read a snapshot and check its node column against `grid` (relative 1e-12).
pub fn read_snapshot(path: &Path, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    let input = |msg: String| HarnessError::Input { path: path.to_path_buf(), msg };
    let f = File::open(path).map_err(|e| input(e.to_string()))?;
    let mut lines = BufReader::new(f).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == SNAPSHOT_HEADER => {}
        _ => return Err(input(format!("missing header `{SNAPSHOT_HEADER}`"))),
    }
    let mut values = Vec::with_capacity(grid.len());
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| input(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| input(format!("row {}: {e}", k + 1)))?;
        if cols.len() != 3 {
            return Err(input(format!("row {}: expected 3 columns", k + 1)));
        }
        let Some(&r) = grid.nodes().get(values.len()) else {
            return Err(input("more rows than grid nodes".into()));
        };
        if (cols[0] - r).abs() > 1e-12 * r {
            return Err(input(format!("row {}: node {} does not match grid node {r}", k + 1, cols[0])));
        }
        values.push(C64::new(cols[1], cols[2]));
    }
    if values.len() != grid.len() {
        return Err(input(format!("{} rows for a grid of {} nodes", values.len(), grid.len())));
    }
    RadialField::new(grid.clone(), values).map_err(|e| input(e.to_string()))
}

/// Line-oriented CSV writer that either starts a file or appends to one.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        Ok(CsvSink { out })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().append(true).open(path)?;
        Ok(CsvSink { out: BufWriter::new(f) })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn tick_row(t: &Tick) -> Vec<String> {
    [t.t, t.energy, t.norm_e, t.tension_l2, t.dtu_l2, t.linf, t.dissipation_accum].iter().map(|v| num(*v)).collect()
}

pub fn modulation_header(n: usize) -> String {
    let mut h = String::from("t,d,g_norm");
    for j in 1..=n {
        let _ = write!(h, ",theta_{j}");
    }
    for j in 1..=n {
        let _ = write!(h, ",lambda_{j}");
    }
    h.push_str(",ortho_max_resid,converged");
    h
}

pub fn modulation_row(s: &ModulationSample) -> Vec<String> {
    let mut row = vec![num(s.t), num(s.d), num(s.fit.g_norm)];
    row.extend(s.fit.params.theta().iter().map(|v| num(*v)));
    row.extend(s.fit.params.lambda().iter().map(|v| num(*v)));
    row.push(num(s.fit.ortho_max()));
    row.push(s.fit.converged.to_string());
    row
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use glb_core::grid::make_grid;
    use glb_core::Stretch;

    #[test]
    fn snapshot_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(4, 1e-3, 10.0, 64, Stretch::Geometric).unwrap();
        let u = RadialField::from_fn(&g, |r| C64::new((r * 1.234567).sin() / 3.0, -r.sqrt() * 1e-7));
        let p = dir.path().join("u.csv");
        write_snapshot(&p, &u).unwrap();
        let back = read_snapshot(&p, &g).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn snapshot_on_other_grid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(4, 1e-3, 10.0, 64, Stretch::Geometric).unwrap();
        let h = make_grid(4, 1e-3, 20.0, 64, Stretch::Geometric).unwrap();
        let p = dir.path().join("u.csv");
        write_snapshot(&p, &RadialField::zeros(&g)).unwrap();
        assert_eq!(read_snapshot(&p, &h).unwrap_err().exit_code(), 2);
    }

    proptest::proptest! {
        #[test]
        fn numbers_round_trip_bitwise(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            proptest::prop_assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn modulation_header_layout() {
        assert_eq!(modulation_header(2), "t,d,g_norm,theta_1,theta_2,lambda_1,lambda_2,ortho_max_resid,converged");
    }
}
