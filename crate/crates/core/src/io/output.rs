use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::solver::StepRecord;

/// One row of the force-displacement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub time: f64,
    pub u_prescribed_mm: f64,
    #[serde(rename = "reaction_N")]
    pub reaction_n: f64,
    pub newton_iters: usize,
    #[serde(rename = "D_max")]
    pub d_max: f64,
    pub assembly_ms: f64,
    pub solve_ms: f64,
}

impl From<&StepRecord> for CurveRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            time: r.time,
            u_prescribed_mm: r.u_prescribed,
            reaction_n: r.reaction,
            newton_iters: r.newton_iterations,
            d_max: r.d_max,
            assembly_ms: r.assembly_ms,
            solve_ms: r.solve_ms,
        }
    }
}

/// Streams force-displacement rows to a CSV file whose `#` header lines carry
/// the units and the config hash.
pub struct CurveWriter {
    inner: csv::Writer<std::fs::File>,
}

impl CurveWriter {
    pub fn create(path: &Path, header: &[String]) -> Result<Self, IoError> {
        let mut file = std::fs::File::create(path).map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })?;
        for line in header {
            writeln!(file, "# {line}").map_err(|source| IoError::File {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(Self {
            inner: csv::Writer::from_writer(file),
        })
    }

    pub fn write(&mut self, row: &CurveRow) -> Result<(), IoError> {
        self.inner.serialize(row)?;
        // keep partial results on disk if the run dies
        self.inner.flush().map_err(|e| IoError::Csv(e.to_string()))
    }
}

/// Reads a force-displacement CSV, skipping the `#` header lines.
pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(IoError::from))
        .collect()
}

/// The `key: value` header lines of a CSV written by [`CurveWriter`].
pub fn read_header(path: &Path) -> Result<Vec<String>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect())
}
