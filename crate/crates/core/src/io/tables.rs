use std::path::Path;

use crate::error::{invalid, Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Write equal-length numeric columns. Values use the shortest
/// round-trip decimal form.
pub fn write_columns(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != n) {
        return Err(invalid("CSV columns differ in length"));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(columns.iter().map(|c| c.0)).map_err(csv_err)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c.1[i].to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a header and rows of already formatted fields.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(invalid("CSV row length does not match the header"));
        }
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix `values[row][col]` with a leading label column and a header of
/// column coordinates.
pub fn write_matrix(path: &Path, corner: &str, rows: &[f64], cols: &[f64], values: &[Vec<f64>]) -> Result<()> {
    if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
        return Err(invalid("matrix shape does not match its axes"));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = std::iter::once(corner.to_string()).chain(cols.iter().map(|c| c.to_string())).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (r, vals) in rows.iter().zip(values) {
        let rec: Vec<String> = std::iter::once(r.to_string()).chain(vals.iter().map(|v| v.to_string())).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read numeric columns written by [`write_columns`].
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.parse().map_err(|_| Error::Data(format!("not a number: {field:?}")))?);
        }
    }
    Ok((header, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let a = [0.1, 1e-300, -2.5];
        let b = [1.0 / 3.0, 0.0, f64::MAX];
        write_columns(&p, &[("a", &a), ("b", &b)]).unwrap();
        let (h, cols) = read_columns(&p).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert_eq!(cols[0], a);
        assert_eq!(cols[1], b);
        assert!(write_columns(&p, &[("a", &a), ("b", &b[..2])]).is_err());
    }
}
