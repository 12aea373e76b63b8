//! File formats written by runs: the diagnostics CSV, parameter-sweep
//! tables and legacy ASCII VTK field snapshots.
//!
//! Numbers are written in Rust's shortest round-trip notation, so files are
//! bit-exact functions of the computed values and parse back to the same
//! `f64`s.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{DiagnosticsRecord, CSV_COLUMNS};
use crate::fem::State;
use crate::mesh::CrackedMesh;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: expected columns {expected:?}, found {found:?}")]
    Columns { path: String, expected: Vec<String>, found: Vec<String> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.display().to_string(), source }
}

/// Row-by-row writer of `diagnostics.csv`. The header is written on
/// creation and every row is flushed, so the file holds all completed steps
/// if the run stops early.
pub struct DiagnosticsWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<DiagnosticsWriter, OutputError> {
        let path = path.as_ref().to_path_buf();
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(csv_err(&path))?;
        inner.write_record(CSV_COLUMNS).map_err(csv_err(&path))?;
        inner.flush().map_err(io_err(&path))?;
        Ok(DiagnosticsWriter { path, inner })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<(), OutputError> {
        self.inner.serialize(record).map_err(csv_err(&self.path))?;
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// Reads a diagnostics CSV, checking the column names and order.
pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>, OutputError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = reader.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    if found != CSV_COLUMNS {
        return Err(OutputError::Columns {
            path: path.display().to_string(),
            expected: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    reader.deserialize().collect::<Result<Vec<_>, _>>().map_err(csv_err(path))
}

/// Writes any serializable rows (for example sweep tables) as CSV.
pub fn write_table<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<(), OutputError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Legacy VTK cell type of a simplex with `n` vertices.
fn vtk_cell_type(n: usize) -> u8 {
    match n {
        3 => 5,
        4 => 10,
        _ => unreachable!("cells are triangles or tetrahedra"),
    }
}

/// Writes the mesh with point vectors `u` and `v` of `state` as a legacy
/// ASCII VTK unstructured grid. Two dimensional vectors are padded with a
/// zero third component.
pub fn write_vtk(path: impl AsRef<Path>, mesh: &CrackedMesh, state: &State) -> Result<(), OutputError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_vtk_to(&mut w, mesh, state).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_vtk_to(w: &mut impl Write, mesh: &CrackedMesh, state: &State) -> std::io::Result<()> {
    let d = mesh.dim;
    let n = mesh.n_vertices();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "crackdyn t = {}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in &mesh.vertices {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    let size: usize = mesh.cells.iter().map(|c| c.vertices.len() + 1).sum();
    writeln!(w, "CELLS {} {size}", mesh.cells.len())?;
    for c in &mesh.cells {
        write!(w, "{}", c.vertices.len())?;
        for v in &c.vertices {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.cells.len())?;
    for c in &mesh.cells {
        writeln!(w, "{}", vtk_cell_type(c.vertices.len()))?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    for (name, field) in [("u", &state.u), ("v", &state.v)] {
        writeln!(w, "VECTORS {name} double")?;
        for i in 0..n {
            let c = |k: usize| if k < d { field[d * i + k] } else { 0.0 };
            writeln!(w, "{} {} {}", c(0), c(1), c(2))?;
        }
    }
    Ok(())
}
