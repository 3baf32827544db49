//! Compressed sparse column matrices and the plain-text triplet format.
//!
//! Entries are kept in canonical column-major order: sorted by column, then
//! by row. Explicit zeros are allowed and preserved; duplicates are not.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed triplet file at line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(SparseError::OutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            if !value.is_finite() {
                return Err(SparseError::NonFinite { row, col });
            }
            entries.push((col, row, value));
        }
        entries.sort_by_key(|e| (e.0, e.1));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(SparseError::Duplicate {
                    row: pair[0].1,
                    col: pair[0].0,
                });
            }
        }
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &(col, _, _) in &entries {
            col_ptr[col + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// Like [`from_triplets`](Self::from_triplets) but sums duplicates.
    pub fn from_triplets_summed<I>(
        n_rows: usize,
        n_cols: usize,
        triplets: I,
    ) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        entries.sort_by_key(|e| (e.1, e.0));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        Self::from_triplets(n_rows, n_cols, merged)
    }

    pub fn from_dense(rows: &[Vec<f64>], n_cols: usize) -> Result<Self, SparseError> {
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(SparseError::Shape(format!(
                    "dense row {i} has {} columns, expected {n_cols}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows.len(), n_cols, triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` in canonical column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_cols).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        range.map(move |p| (self.row_idx[p], self.values[p]))
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.n_rows || col >= self.n_cols {
            return None;
        }
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        self.row_idx[range.clone()]
            .binary_search(&row)
            .ok()
            .map(|offset| self.values[range.start + offset])
    }

    /// Row-major view: entry `i` holds the `(col, value)` pairs of row `i`.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.n_rows];
        for (r, c, v) in self.iter() {
            rows[r].push((c, v));
        }
        rows
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::Shape(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.n_cols
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
        Ok(y)
    }

    /// Computes `selfᵀ · y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>, SparseError> {
        if y.len() != self.n_rows {
            return Err(SparseError::Shape(format!(
                "vector of length {} for {} rows",
                y.len(),
                self.n_rows
            )));
        }
        Ok((0..self.n_cols)
            .map(|j| {
                (self.col_ptr[j]..self.col_ptr[j + 1])
                    .map(|p| self.values[p] * y[self.row_idx[p]])
                    .sum()
            })
            .collect())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v));
        Self::from_triplets(self.n_cols, self.n_rows, triplets)
            .expect("transpose preserves validity")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.iter() {
            dense[r][c] = v;
        }
        dense
    }

    pub fn scale(&self, factor: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self − other` over the union of both patterns.
    pub fn sub(&self, other: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        if self.shape() != other.shape() {
            return Err(SparseError::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        let triplets = self.iter().chain(other.iter().map(|(r, c, v)| (r, c, -v)));
        Self::from_triplets_summed(self.n_rows, self.n_cols, triplets)
    }

    /// Kronecker product `a ⊗ b`.
    pub fn kron(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
        let (br, bc) = b.shape();
        let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
        for (ra, ca, va) in a.iter() {
            for (rb, cb, vb) in b.iter() {
                triplets.push((ra * br + rb, ca * bc + cb, va * vb));
            }
        }
        Self::from_triplets(a.n_rows * br, a.n_cols * bc, triplets)
            .expect("kronecker indices are unique")
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&SparseMatrix]) -> Result<SparseMatrix, SparseError> {
        let n_cols = blocks.first().map_or(0, |b| b.n_cols);
        let mut offset = 0;
        let mut triplets = Vec::new();
        for block in blocks {
            if block.n_cols != n_cols {
                return Err(SparseError::Shape(format!(
                    "vstack of {} and {} columns",
                    n_cols, block.n_cols
                )));
            }
            triplets.extend(block.iter().map(|(r, c, v)| (r + offset, c, v)));
            offset += block.n_rows;
        }
        Self::from_triplets(offset, n_cols, triplets)
    }

    /// Largest absolute value, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Writes a matrix as `rows cols nnz` followed by one `row col value` line
/// per entry (zero-based indices, 17 significant digits).
pub fn write_triplets<W: Write>(out: &mut W, matrix: &SparseMatrix) -> io::Result<()> {
    writeln!(out, "{} {} {}", matrix.n_rows, matrix.n_cols, matrix.nnz())?;
    for (r, c, v) in matrix.iter() {
        writeln!(out, "{} {} {:.16e}", r, c, v)?;
    }
    Ok(())
}

/// Reads one matrix block written by [`write_triplets`]. Lines starting with
/// `#` and blank lines are skipped.
pub fn read_triplets<R: BufRead>(input: &mut R) -> Result<SparseMatrix, SparseError> {
    let mut line_no = 0;
    let mut next_line = |input: &mut R| -> Result<Option<(usize, String)>, SparseError> {
        loop {
            let mut buf = String::new();
            let read = input.read_line(&mut buf).map_err(|e| SparseError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
            line_no += 1;
            if read == 0 {
                return Ok(None);
            }
            let trimmed = buf.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(Some((line_no, trimmed.to_string())));
        }
    };
    let (line, header) = next_line(input)?.ok_or(SparseError::Format {
        line: 0,
        message: "missing header".into(),
    })?;
    let dims = parse_fields::<usize>(&header, 3, line)?;
    let mut triplets = Vec::with_capacity(dims[2]);
    for _ in 0..dims[2] {
        let (line, text) = next_line(input)?.ok_or(SparseError::Format {
            line: 0,
            message: "unexpected end of input".into(),
        })?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(SparseError::Format {
                line,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str| SparseError::Format {
            line,
            message: format!("invalid {what}"),
        };
        let r = fields[0].parse::<usize>().map_err(|_| parse_err("row"))?;
        let c = fields[1]
            .parse::<usize>()
            .map_err(|_| parse_err("column"))?;
        let v = fields[2].parse::<f64>().map_err(|_| parse_err("value"))?;
        triplets.push((r, c, v));
    }
    SparseMatrix::from_triplets(dims[0], dims[1], triplets)
}

fn parse_fields<T: std::str::FromStr>(
    text: &str,
    count: usize,
    line: usize,
) -> Result<Vec<T>, SparseError> {
    let fields: Vec<T> = text
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| SparseError::Format {
            line,
            message: format!("cannot parse `{text}`"),
        })?;
    if fields.len() != count {
        return Err(SparseError::Format {
            line,
            message: format!("expected {count} fields"),
        });
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_column_major() {
        let m =
            SparseMatrix::from_triplets(3, 2, vec![(2, 0, 1.0), (0, 1, 2.0), (0, 0, 3.0)]).unwrap();
        let entries: Vec<_> = m.iter().collect();
        assert_eq!(entries, vec![(0, 0, 3.0), (2, 0, 1.0), (0, 1, 2.0)]);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]);
        assert_eq!(dup, Err(SparseError::Duplicate { row: 0, col: 0 }));
        let oob = SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]);
        assert!(matches!(oob, Err(SparseError::OutOfRange { .. })));
        let nan = SparseMatrix::from_triplets(2, 2, vec![(0, 0, f64::NAN)]);
        assert!(matches!(nan, Err(SparseError::NonFinite { .. })));
    }

    #[test]
    fn products_match_dense() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (1, 2, -2.0), (0, 1, 4.0)])
            .unwrap();
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]).unwrap(), vec![9.0, -6.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 1.0]).unwrap(), vec![1.0, 4.0, -2.0]);
        assert_eq!(
            m.transpose().to_dense(),
            vec![vec![1.0, 0.0], vec![4.0, 0.0], vec![0.0, -2.0]]
        );
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = SparseMatrix::kron(&SparseMatrix::identity(2), &SparseMatrix::identity(3));
        assert_eq!(k, SparseMatrix::identity(6));
    }

    #[test]
    fn triplet_text_round_trips() {
        let m = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 0.1), (2, 1, -1.0 / 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_triplets(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3 3 2\n"));
        let back = read_triplets(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
