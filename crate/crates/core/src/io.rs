//! Matrix and solution file formats.
//!
//! Matrices are JSON objects `{"rows": r, "cols": c, "data": [...]}` with
//! row-major data, or CSV with one matrix row per line. JSON numbers are
//! written in shortest round-trip form, so reading back yields the same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::PrecoderSolution;
use crate::error::{Error, Result};
use crate::matlin::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::argument(format!(
                "matrix declares {}x{} but carries {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, detail: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        detail: detail.to_string(),
    }
}

pub fn matrix_to_json(m: &Matrix) -> String {
    serde_json::to_string(&MatrixFile::from_matrix(m)).expect("finite matrix serializes")
}

pub fn matrix_from_json(text: &str) -> Result<Matrix> {
    let file: MatrixFile =
        serde_json::from_str(text).map_err(|e| Error::argument(format!("matrix JSON: {e}")))?;
    file.to_matrix()
}

/// Parse CSV text: one row per line, comma separated, no header.
pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::argument(format!("matrix CSV: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::argument(format!("matrix CSV value {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::argument("matrix CSV is empty"));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::argument("matrix CSV rows have unequal lengths"));
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::from_row_slice(data.len() / cols, cols, &data))
}

/// Read a matrix, choosing JSON when the content starts with `{` and CSV otherwise.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parsed = if text.trim_start().starts_with('{') {
        matrix_from_json(&text)
    } else {
        matrix_from_csv(&text)
    };
    parsed.map_err(|e| match e {
        Error::Argument(detail) => parse_err(path, detail),
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, matrix_to_json(m)).map_err(|e| io_err(path, e))
}

/// JSON shape of a solved precoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(rename = "Q")]
    pub q: MatrixFile,
    #[serde(rename = "V")]
    pub v: MatrixFile,
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&PrecoderSolution> for SolutionRecord {
    fn from(s: &PrecoderSolution) -> Self {
        Self {
            q: MatrixFile::from_matrix(&s.q),
            v: MatrixFile::from_matrix(&s.v),
            lambda: s.lambda.clone(),
            theta: s.theta.as_slice().to_vec(),
            rate: s.rate,
            iterations: s.iterations,
            converged: s.converged,
        }
    }
}

/// Write `text` to `path`, or to stdout when `path` is `-`.
pub fn write_output(path: &str, text: &str) -> Result<()> {
    if path == "-" {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| io_err(Path::new("<stdout>"), e))
    } else {
        let p = Path::new(path);
        fs::write(p, text).map_err(|e| io_err(p, e))
    }
}
