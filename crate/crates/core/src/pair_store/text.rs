//! Plain-text matrix files: a header line `n l_p`, then `n` rows of `l_p`
//! whitespace-separated numbers. Column `j` is the `j`-th vector.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::PairBuffer;
use crate::{Error, Result};

pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = BufReader::new(reader)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));

    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing header line".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad header token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!(
            "header must be `n l_p`, got {header:?}"
        )));
    };

    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {rows} rows, found {r}")))??;
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {r}: bad number {tok:?}")))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!(
                "row {r} has {} entries, expected {cols}",
                data.len() - before
            )));
        }
    }
    if let Some(extra) = lines.next() {
        extra?;
        return Err(Error::Parse(format!("more than {rows} rows")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix<W: Write>(mut writer: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(writer, "{} {}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads `S` and `Y` from two files and pushes their columns, oldest first,
/// into a buffer of the given capacity.
pub fn load_pairs(s_path: &Path, y_path: &Path, capacity: usize) -> Result<PairBuffer> {
    let s = read_matrix(File::open(s_path)?)?;
    let y = read_matrix(File::open(y_path)?)?;
    PairBuffer::from_matrices(&s, &y, capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let text = "3 2\n1 2\n3 4\n\n5 6\n";
        let m = read_matrix(text.as_bytes()).unwrap();
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        );
    }

    #[test]
    fn write_then_read() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1e-300, 3.0, 4.0, -0.0]);
        let mut out = Vec::new();
        write_matrix(&mut out, &m).unwrap();
        assert_eq!(read_matrix(out.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(read_matrix("".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(
            read_matrix("2\n1\n".as_bytes()),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            read_matrix("2 2\n1 2\n3\n".as_bytes()),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            read_matrix("1 1\n1\n2\n".as_bytes()),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            read_matrix("1 1\nx\n".as_bytes()),
            Err(Error::Parse(_))
        ));
    }
}
