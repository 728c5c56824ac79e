//! Matrix file formats: Matrix Market (coordinate and array) with a CSV
//! fallback. Floats are written with `{:e}`, whose shortest round-trip
//! representation parses back to the identical bits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{RowMatrix, RowRef};

/// Read a matrix file, sniffing the format from the first line.
pub fn read_matrix(path: &Path) -> Result<RowMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text)
}

/// Parse Matrix Market if the banner is present, CSV otherwise.
pub fn parse_matrix(text: &str) -> Result<RowMatrix> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        parse_matrix_market(text)
    } else {
        parse_csv(text)
    }
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_matrix_market(text: &str) -> Result<RowMatrix> {
    let mut lines = text.lines().enumerate();

    let (banner_no, banner) = lines
        .next()
        .ok_or_else(|| err(1, "empty file"))?;
    let tokens: Vec<&str> = banner.split_whitespace().collect();
    if tokens.len() < 5 || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(err(banner_no + 1, "malformed MatrixMarket banner"));
    }
    if !tokens[1].eq_ignore_ascii_case("matrix") {
        return Err(err(banner_no + 1, format!("unsupported object '{}'", tokens[1])));
    }
    let coordinate = match tokens[2].to_ascii_lowercase().as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(err(banner_no + 1, format!("unsupported format '{other}'"))),
    };
    match tokens[3].to_ascii_lowercase().as_str() {
        "real" | "integer" => {}
        other => return Err(err(banner_no + 1, format!("unsupported field '{other}'"))),
    }
    if !tokens[4].eq_ignore_ascii_case("general") {
        return Err(err(
            banner_no + 1,
            format!("unsupported symmetry '{}' (row matrices are general)", tokens[4]),
        ));
    }

    // skip comments and blank lines up to the size line
    let (size_no, size_line) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'))
        .ok_or_else(|| err(banner_no + 2, "missing size line"))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();

    let parse_dim = |tok: &str, what: &str| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| err(size_no + 1, format!("bad {what} '{tok}'")))
    };

    if coordinate {
        if dims.len() != 3 {
            return Err(err(size_no + 1, "coordinate size line needs 'rows cols nnz'"));
        }
        let n = parse_dim(dims[0], "row count")?;
        let d = parse_dim(dims[1], "column count")?;
        let nnz = parse_dim(dims[2], "entry count")?;
        let mut triplets = Vec::with_capacity(nnz);
        for (no, line) in lines {
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(no + 1, "coordinate entry needs 'row col value'"));
            }
            let i = parse_dim(parts[0], "row index")?;
            let j = parse_dim(parts[1], "column index")?;
            if i == 0 || j == 0 || i > n || j > d {
                return Err(err(no + 1, format!("index ({i}, {j}) outside 1..={n} × 1..={d}")));
            }
            let v: f64 = parts[2]
                .parse()
                .map_err(|_| err(no + 1, format!("bad value '{}'", parts[2])))?;
            triplets.push((i - 1, j - 1, v));
        }
        if triplets.len() != nnz {
            return Err(err(
                size_no + 1,
                format!("expected {nnz} entries, found {}", triplets.len()),
            ));
        }
        RowMatrix::from_triplets(n, d, &triplets)
    } else {
        if dims.len() != 2 {
            return Err(err(size_no + 1, "array size line needs 'rows cols'"));
        }
        let n = parse_dim(dims[0], "row count")?;
        let d = parse_dim(dims[1], "column count")?;
        let mut values = Vec::with_capacity(n * d);
        for (no, line) in lines {
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            for tok in t.split_whitespace() {
                let v: f64 =
                    tok.parse().map_err(|_| err(no + 1, format!("bad value '{tok}'")))?;
                values.push(v);
            }
        }
        if values.len() != n * d {
            return Err(err(
                size_no + 1,
                format!("array body has {} values, expected {}", values.len(), n * d),
            ));
        }
        // array format is column-major
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..d).map(|j| values[j * n + i]).collect()).collect();
        RowMatrix::from_rows(rows)
    }
}

pub fn parse_csv(text: &str) -> Result<RowMatrix> {
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| err(no + 1, format!("bad value '{}'", tok.trim())))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(1, "no rows found"));
    }
    RowMatrix::from_rows(rows)
}

/// Matrix Market text for a RowMatrix. Dense matrices with no filtered rows
/// are written in array format; anything else goes out as coordinate entries
/// under the original row numbering, so filtered positions survive a round
/// trip.
pub fn matrix_market_string(x: &RowMatrix) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    if x.is_dense() && x.n() == x.original_n() {
        writeln!(out, "%%MatrixMarket matrix array real general").unwrap();
        writeln!(out, "{} {}", x.n(), x.d()).unwrap();
        for j in 0..x.d() {
            for i in 0..x.n() {
                let row = x.dense_row(i);
                writeln!(out, "{:e}", row[j]).unwrap();
            }
        }
    } else {
        writeln!(out, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(out, "{} {} {}", x.original_n(), x.d(), x.nnz()).unwrap();
        for i in 0..x.n() {
            let orig = x.index_map()[i] + 1;
            match x.row(i) {
                RowRef::Dense(r) => {
                    for (j, &v) in r.iter().enumerate() {
                        if v != 0.0 {
                            writeln!(out, "{} {} {:e}", orig, j + 1, v).unwrap();
                        }
                    }
                }
                RowRef::Sparse { cols, vals } => {
                    for (&j, &v) in cols.iter().zip(vals.iter()) {
                        writeln!(out, "{} {} {:e}", orig, j + 1, v).unwrap();
                    }
                }
            }
        }
    }
    out
}

pub fn write_matrix_market(x: &RowMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix_market_string(x))?;
    Ok(())
}

pub fn csv_string(x: &RowMatrix) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    for i in 0..x.n() {
        let row = x.dense_row(i);
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v:e}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(x: &RowMatrix, path: &Path) -> Result<()> {
    fs::write(path, csv_string(x))?;
    Ok(())
}
