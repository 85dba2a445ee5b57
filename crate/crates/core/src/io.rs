//! Field dumps and report files.
//!
//! Fields are written node by node in storage order (axis 1 fastest), all
//! components of a node together. The binary layout is
//!
//! ```text
//! b"DCLF" | version u32 | dim u32 | n u32 | components u32 | f64 values…
//! ```
//!
//! little-endian throughout. Reports are a JSON envelope or a CSV table
//! whose first lines are `#` comments carrying the schema version and the
//! resolved configuration.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DCLF";

pub fn write_field_csv<W: Write>(mut w: W, field: &VectorField) -> io::Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    writeln!(w, "# divcurl field schema {SCHEMA_VERSION} n={} dim={dim}", grid.n())?;
    let coords = (1..=dim).map(|a| format!("x{a}"));
    let comps = (1..=field.dim()).map(|c| format!("f{c}"));
    writeln!(w, "{}", coords.chain(comps).collect::<Vec<_>>().join(","))?;
    for idx in 0..grid.len() {
        let p = grid.point(idx);
        let mut row: Vec<String> = p[..dim].iter().map(|x| x.to_string()).collect();
        row.extend(field.components().iter().map(|c| c.get(idx).to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_field_binary<W: Write>(mut w: W, field: &VectorField) -> io::Result<()> {
    let grid = field.grid();
    w.write_all(MAGIC)?;
    for v in [SCHEMA_VERSION, grid.dim() as u32, grid.n() as u32, field.dim() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for idx in 0..grid.len() {
        for c in field.components() {
            w.write_all(&c.get(idx).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<VectorField> {
    let bad = |msg: &str| LabError::InvalidData(msg.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a field dump"));
    }
    let mut header = [0u32; 4];
    for v in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
        *v = u32::from_le_bytes(b);
    }
    let [version, dim, n, ncomp] = header;
    if version != SCHEMA_VERSION {
        return Err(bad("unsupported schema version"));
    }
    let grid = Grid::new(dim as usize, n as usize)?;
    let ncomp = ncomp as usize;
    let mut comps = vec![Vec::with_capacity(grid.len()); ncomp];
    let mut b = [0u8; 8];
    for _ in 0..grid.len() {
        for c in comps.iter_mut() {
            r.read_exact(&mut b).map_err(|_| bad("truncated values"))?;
            c.push(f64::from_le_bytes(b));
        }
    }
    let comps = comps
        .into_iter()
        .map(|v| ScalarField::from_values(grid, v))
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(comps)
}

/// Reads the values of a CSV field dump back; coordinates are checked
/// against the grid implied by the header.
pub fn read_field_csv<R: BufRead>(r: R) -> Result<VectorField> {
    let bad = |msg: String| LabError::InvalidData(msg);
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("truncated csv".into()))?
            .map_err(|e| bad(e.to_string()))
    };
    let comment = next()?;
    let field_of = |key: &str| -> Result<usize> {
        comment
            .split_whitespace()
            .find_map(|t| t.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("header lacks {key}")))
    };
    let grid = Grid::new(field_of("dim=")?, field_of("n=")?)?;
    let header = next()?;
    let ncomp = header.split(',').count() - grid.dim();
    let mut comps = vec![Vec::with_capacity(grid.len()); ncomp];
    for idx in 0..grid.len() {
        let line = next()?;
        let vals = line
            .split(',')
            .map(|t| t.parse::<f64>().map_err(|e| bad(format!("row {idx}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != grid.dim() + ncomp {
            return Err(bad(format!("row {idx}: wrong column count")));
        }
        let p = grid.point(idx);
        if vals[..grid.dim()] != p[..grid.dim()] {
            return Err(bad(format!("row {idx}: coordinates out of order")));
        }
        for (c, v) in comps.iter_mut().zip(&vals[grid.dim()..]) {
            c.push(*v);
        }
    }
    let comps = comps
        .into_iter()
        .map(|v| ScalarField::from_values(grid, v))
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(comps)
}

/// Plain rectangular data for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }
}

/// Writes `table` with a schema comment and the configuration echoed as a
/// single-line JSON comment.
pub fn write_csv<W: Write, C: Serialize>(mut w: W, command: &str, config: &C, table: &Table) -> io::Result<()> {
    writeln!(w, "# divcurl {command} schema {SCHEMA_VERSION}")?;
    let cfg = serde_json::to_string(config).map_err(io::Error::other)?;
    writeln!(w, "# config {cfg}")?;
    writeln!(w, "{}", table.columns.join(","))?;
    for row in &table.rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
