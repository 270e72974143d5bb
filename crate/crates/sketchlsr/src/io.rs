//! Matrix Market and plain-CSV readers/writers. The parsers are the
//! untrusted-input boundary: they must return errors (never panic) on
//! arbitrary bytes, and every error carries the offending line number.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use std::fs;
use std::path::Path;

/// Refuse to allocate dense matrices beyond this many entries (2 GiB of
/// f64). Keeps hostile headers like "999999 999999 1" from forcing an
/// out-of-memory abort.
pub const MAX_DENSE_ENTRIES: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorFormat {
    Auto,
    MatrixMarket,
    Csv,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_real(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("expected a real number, got {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_index(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected {what}, got {tok:?}")))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MmFormat {
    Array,
    Coordinate,
}

/// Parses Matrix Market text in "array real general" or
/// "coordinate real general" form. Array data is column-major per the
/// format; coordinate indices are 1-based and unspecified entries are zero.
pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty input, expected a MatrixMarket header"))?;
    let mut toks = header.split_whitespace();
    let banner = toks.next().unwrap_or("");
    if !banner.eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(hline, "header must start with %%MatrixMarket"));
    }
    let object = toks.next().unwrap_or("");
    if !object.eq_ignore_ascii_case("matrix") {
        return Err(parse_err(hline, format!("unsupported object {object:?}, expected matrix")));
    }
    let format = match toks.next().unwrap_or("") {
        f if f.eq_ignore_ascii_case("array") => MmFormat::Array,
        f if f.eq_ignore_ascii_case("coordinate") => MmFormat::Coordinate,
        f => {
            return Err(parse_err(
                hline,
                format!("unsupported format {f:?}, expected array or coordinate"),
            ))
        }
    };
    let field = toks.next().unwrap_or("");
    if !field.eq_ignore_ascii_case("real") {
        return Err(parse_err(hline, format!("unsupported field {field:?}, expected real")));
    }
    let symmetry = toks.next().unwrap_or("");
    if !symmetry.eq_ignore_ascii_case("general") {
        return Err(parse_err(
            hline,
            format!("unsupported symmetry {symmetry:?}, expected general"),
        ));
    }

    // Size line: first non-comment, non-blank line.
    let mut size_line = None;
    for (ln, l) in lines.by_ref() {
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some((ln, t.to_string()));
        break;
    }
    let (sline, size) = size_line.ok_or_else(|| parse_err(hline, "missing size line"))?;
    let mut size_toks = size.split_whitespace();
    let rows = parse_index(size_toks.next().unwrap_or(""), sline, "a row count")?;
    let cols = parse_index(size_toks.next().unwrap_or(""), sline, "a column count")?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(sline, "matrix dimensions must be positive"));
    }
    let total = rows
        .checked_mul(cols)
        .filter(|&t| t <= MAX_DENSE_ENTRIES)
        .ok_or_else(|| {
            parse_err(sline, format!("{rows}x{cols} exceeds the dense storage limit"))
        })?;

    match format {
        MmFormat::Array => {
            if let Some(extra) = size_toks.next() {
                return Err(parse_err(
                    sline,
                    format!("unexpected token {extra:?} on an array size line"),
                ));
            }
            // Values arrive in column-major order, one or more per line.
            let mut values = Vec::with_capacity(total.min(1 << 20));
            let mut last_line = sline;
            for (ln, l) in lines {
                let t = l.trim();
                last_line = ln;
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                for tok in t.split_whitespace() {
                    if values.len() == total {
                        return Err(parse_err(ln, "more entries than rows*cols"));
                    }
                    values.push(parse_real(tok, ln)?);
                }
            }
            if values.len() != total {
                return Err(parse_err(
                    last_line,
                    format!("expected {total} entries, found {}", values.len()),
                ));
            }
            let mut data = vec![0.0; total];
            for (flat, v) in values.into_iter().enumerate() {
                let (j, i) = (flat / rows, flat % rows);
                data[i * cols + j] = v;
            }
            DenseMatrix::new(rows, cols, data)
        }
        MmFormat::Coordinate => {
            let nnz = parse_index(size_toks.next().unwrap_or(""), sline, "a nonzero count")?;
            if let Some(extra) = size_toks.next() {
                return Err(parse_err(
                    sline,
                    format!("unexpected token {extra:?} on a coordinate size line"),
                ));
            }
            let mut data = vec![0.0; total];
            let mut seen = 0usize;
            let mut last_line = sline;
            for (ln, l) in lines {
                let t = l.trim();
                last_line = ln;
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                let mut toks = t.split_whitespace();
                let i = parse_index(toks.next().unwrap_or(""), ln, "a row index")?;
                let j = parse_index(toks.next().unwrap_or(""), ln, "a column index")?;
                let v = parse_real(toks.next().unwrap_or(""), ln)?;
                if toks.next().is_some() {
                    return Err(parse_err(ln, "trailing tokens after i j value"));
                }
                if i < 1 || i > rows || j < 1 || j > cols {
                    return Err(parse_err(
                        ln,
                        format!("index ({i}, {j}) out of bounds for {rows}x{cols}"),
                    ));
                }
                seen += 1;
                if seen > nnz {
                    return Err(parse_err(ln, format!("more than {nnz} coordinate entries")));
                }
                data[(i - 1) * cols + (j - 1)] = v;
            }
            if seen != nnz {
                return Err(parse_err(
                    last_line,
                    format!("expected {nnz} coordinate entries, found {seen}"),
                ));
            }
            DenseMatrix::new(rows, cols, data)
        }
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

/// Serializes a matrix in array form with round-trip-exact doubles.
pub fn matrix_market_array_string(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push_str(&format!("{}\n", m.get(i, j)));
        }
    }
    out
}

pub fn write_matrix_market_array(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    fs::write(path, matrix_market_array_string(m))?;
    Ok(())
}

/// Headerless CSV vector: one real value per line. Blank lines are skipped.
pub fn parse_vector_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (ln, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        out.push(parse_real(t, ln + 1)?);
    }
    if out.is_empty() {
        return Err(parse_err(1, "no values found"));
    }
    Ok(out)
}

pub fn vector_csv_string(v: &[f64]) -> String {
    let mut out = String::new();
    for x in v {
        out.push_str(&format!("{x}\n"));
    }
    out
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    fs::write(path, vector_csv_string(v))?;
    Ok(())
}

/// Reads a vector as a single-column Matrix Market file or headerless CSV.
/// `Auto` picks by extension: .mtx/.mm mean Matrix Market, anything else CSV.
pub fn read_vector(path: impl AsRef<Path>, format: VectorFormat) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let format = match format {
        VectorFormat::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") || e.eq_ignore_ascii_case("mm") => {
                VectorFormat::MatrixMarket
            }
            _ => VectorFormat::Csv,
        },
        other => other,
    };
    let text = fs::read_to_string(path)?;
    match format {
        VectorFormat::MatrixMarket => {
            let m = parse_matrix_market(&text)?;
            if m.ncols() != 1 {
                return Err(Error::Dimension(format!(
                    "expected a single-column vector, got {} columns",
                    m.ncols()
                )));
            }
            Ok(m.column(0))
        }
        VectorFormat::Csv => parse_vector_csv(&text),
        VectorFormat::Auto => unreachable!(),
    }
}
