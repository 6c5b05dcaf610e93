//! CSV helpers shared by every exporter.
//!
//! Every file starts with one `# solitonlab <kind> v<N>` schema comment,
//! followed by a mandatory header row. Numbers use '.' as decimal separator
//! and every line is newline-terminated.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_schema_header<W: Write>(w: &mut W, kind: &str) -> Result<()> {
    writeln!(w, "# solitonlab {kind} v{SCHEMA_VERSION}")?;
    Ok(())
}

/// Reads a two-column numeric CSV. Lines starting with `#` and blank lines
/// are skipped; the first remaining line is the header.
pub fn read_two_column_csv<R: BufRead>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = trimmed.split(',').collect();
            if cols.len() != 2 || cols.iter().any(|c| c.trim().parse::<f64>().is_ok()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected a two-column header row".into(),
                });
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("'{}': {e}", s.trim()),
            })
        };
        let x = parse(cols[0])?;
        let y = parse(cols[1])?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        rows.push((x, y));
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 0,
            message: "missing header row".into(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_with_comments_and_header() {
        let text = "# solitonlab x v1\nx,y\n1.0,2.0\n\n3,4e-3\n";
        let rows = read_two_column_csv(text.as_bytes()).unwrap();
        assert_eq!(rows, vec![(1.0, 2.0), (3.0, 4e-3)]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "x,y\n1,2\n3,abc\n";
        match read_two_column_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "x,y\n1,2,3\n";
        assert!(matches!(
            read_two_column_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn header_is_mandatory() {
        assert!(matches!(
            read_two_column_csv("1,2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(read_two_column_csv("".as_bytes()).is_err());
    }
}
