//! Datasets: an n×d input matrix, a length-n target vector, and optional
//! column names.
//!
//! Loading is strict — non-finite entries, ragged rows, and empty tables are
//! rejected up front so that every downstream validity question is about the
//! *model*, never the data.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

/// Failure while constructing or loading a dataset.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset has no rows")]
    Empty,
    #[error("data row {row} has {got} inputs, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{rows} input rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite input at data row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },
    #[error("non-finite target at data row {row}")]
    NonFiniteTarget { row: usize },
    #[error("{got} column names for {expected} columns")]
    NameCountMismatch { expected: usize, got: usize },
    #[error("duplicate column name {name:?}")]
    DuplicateColumn { name: String },
    #[error("target column {name:?} not found in header")]
    MissingTargetColumn { name: String },
    #[error("cell at data row {row}, column {column:?} is not a number: {text:?}")]
    NumberParse {
        row: usize,
        column: String,
        text: String,
    },
}

/// Failure while binding a candidate's variables to dataset columns.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindingError {
    #[error("variable {name:?} not found among dataset columns")]
    UnknownVariable { name: String },
    #[error("expression declares {expected} variables but the unnamed dataset has {got} columns")]
    ColumnCountMismatch { expected: usize, got: usize },
}

/// An immutable regression dataset: inputs (row-major n×d), targets
/// (length n), and optional column names (length d, unique).
#[derive(Debug, Clone)]
pub struct Dataset {
    column_names: Option<Vec<String>>,
    inputs: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    targets: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from input rows and targets, validating shape and
    /// finiteness.
    pub fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Empty);
        }
        if rows.len() != targets.len() {
            return Err(DatasetError::LengthMismatch {
                rows: rows.len(),
                targets: targets.len(),
            });
        }
        let n_cols = rows[0].len();
        if let Some(names) = &column_names {
            if names.len() != n_cols {
                return Err(DatasetError::NameCountMismatch {
                    expected: n_cols,
                    got: names.len(),
                });
            }
            for (i, name) in names.iter().enumerate() {
                if names[..i].contains(name) {
                    return Err(DatasetError::DuplicateColumn { name: name.clone() });
                }
            }
        }
        let mut inputs = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(DatasetError::RaggedRow {
                    row: i,
                    expected: n_cols,
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DatasetError::NonFiniteInput { row: i, column: j });
                }
                inputs.push(*v);
            }
        }
        for (i, y) in targets.iter().enumerate() {
            if !y.is_finite() {
                return Err(DatasetError::NonFiniteTarget { row: i });
            }
        }
        Ok(Dataset {
            column_names,
            inputs,
            n_rows: rows.len(),
            n_cols,
            targets,
        })
    }

    /// Loads a CSV file with a header row. The column named `target_column`
    /// (default `"y"`) becomes the target; all other columns become named
    /// inputs in header order.
    pub fn from_csv_path(
        path: impl AsRef<Path>,
        target_column: Option<&str>,
    ) -> Result<Self, DatasetError> {
        Self::from_csv_reader(File::open(path)?, target_column)
    }

    /// CSV loading from any reader; see [`Dataset::from_csv_path`].
    pub fn from_csv_reader<R: Read>(
        reader: R,
        target_column: Option<&str>,
    ) -> Result<Self, DatasetError> {
        let target_name = target_column.unwrap_or("y");
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = csv.headers()?.clone();
        let target_idx = headers
            .iter()
            .position(|h| h == target_name)
            .ok_or_else(|| DatasetError::MissingTargetColumn {
                name: target_name.to_string(),
            })?;
        let input_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.to_string())
            .collect();

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut targets: Vec<f64> = Vec::new();
        for (row, record) in csv.records().enumerate() {
            let record = record?;
            let mut inputs = Vec::with_capacity(input_names.len());
            for (i, cell) in record.iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| DatasetError::NumberParse {
                    row,
                    column: headers
                        .get(i)
                        .map(str::to_string)
                        .unwrap_or_else(|| i.to_string()),
                    text: cell.to_string(),
                })?;
                if i == target_idx {
                    targets.push(value);
                } else {
                    inputs.push(value);
                }
            }
            if inputs.len() != input_names.len() {
                return Err(DatasetError::RaggedRow {
                    row,
                    expected: input_names.len(),
                    got: inputs.len(),
                });
            }
            rows.push(inputs);
        }
        Dataset::new(rows, targets, Some(input_names))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// One input row as a slice of length `n_cols`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Maps each variable name to the dataset column it reads. With column
    /// names, lookup is by name (any subset, any order); without, binding is
    /// positional and the counts must match exactly.
    pub fn binding_for(&self, variables: &[String]) -> Result<Vec<usize>, BindingError> {
        match &self.column_names {
            Some(names) => variables
                .iter()
                .map(|v| {
                    names
                        .iter()
                        .position(|n| n == v)
                        .ok_or_else(|| BindingError::UnknownVariable { name: v.clone() })
                })
                .collect(),
            None => {
                if variables.len() != self.n_cols {
                    return Err(BindingError::ColumnCountMismatch {
                        expected: variables.len(),
                        got: self.n_cols,
                    });
                }
                Ok((0..self.n_cols).collect())
            }
        }
    }
}
