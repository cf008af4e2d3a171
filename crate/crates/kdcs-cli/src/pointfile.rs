//! CSV point files: one point per line, comma-separated decimal floats.

use std::path::Path;

use crate::CliError;

/// Reads a rectangular CSV of floats. Blank lines are skipped; any parse or
/// shape problem is reported with its 1-based line number.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "{}:{}: not a number: {:?}",
                    path.display(),
                    i + 1,
                    field.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{}:{}: non-finite value {v}",
                    path.display(),
                    i + 1
                )));
            }
            row.push(v);
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected {c} columns, got {}",
                    path.display(),
                    i + 1,
                    row.len()
                )));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no points", path.display())));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_rectangular_files() {
        let f = write_temp("1.0, 2.0\n-3.5,4\n\n0,0\n");
        let pts = read_points(f.path()).unwrap();
        assert_eq!(pts, vec![vec![1.0, 2.0], vec![-3.5, 4.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn ragged_rows_are_rejected_with_line_number() {
        let f = write_temp("1,2\n3,4,5\n");
        let err = read_points(f.path()).unwrap_err();
        assert!(format!("{err:?}").contains(":2:"));
    }

    #[test]
    fn bad_floats_are_rejected_with_line_number() {
        let f = write_temp("1,2\nx,4\n");
        let err = read_points(f.path()).unwrap_err();
        assert!(format!("{err:?}").contains(":2:"));
    }
}
