//! CSV ingestion for `x1,..,xn,y` tables.

use std::io::Read;
use std::path::Path;

use mkbo_core::LabeledDataset;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("header must be x1,..,xn,y with at least one input column")]
    BadHeader,
    #[error("no data rows")]
    Empty,
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<LabeledDataset, CsvError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset_csv(file)
}

/// Parse a table whose last column is the target. Line numbers in errors
/// count the header as line 1.
pub fn read_dataset_csv(input: impl Read) -> Result<LabeledDataset, CsvError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| malformed(&e, 1))?.clone();
    if header.len() < 2 || !header[header.len() - 1].eq_ignore_ascii_case("y") {
        return Err(CsvError::BadHeader);
    }
    let n = header.len() - 1;
    let mut data = LabeledDataset::default();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(&e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(CsvError::Malformed {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(header.len());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CsvError::Malformed {
                line,
                message: format!("column {} is not a number: {cell:?}", &header[col]),
            })?;
            if !v.is_finite() {
                return Err(CsvError::Malformed {
                    line,
                    message: format!("column {} is not finite", &header[col]),
                });
            }
            values.push(v);
        }
        let y = values.pop().expect("at least two columns");
        debug_assert_eq!(values.len(), n);
        data.push(values, y).map_err(|e| CsvError::Malformed {
            line,
            message: e.to_string(),
        })?;
    }
    if data.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(data)
}

fn malformed(e: &csv::Error, fallback: u64) -> CsvError {
    let line = e.position().map_or(fallback, |p| p.line());
    CsvError::Malformed {
        line,
        message: e.to_string(),
    }
}

/// Write `x1,..,xn,y`.
pub fn write_dataset_csv(data: &LabeledDataset, out: impl std::io::Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = data.dimension().unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in data.rows() {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.push(y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let d = read_dataset_csv("x1,x2,y\n0,1,2\n3,4,5\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.xs()[1], vec![3.0, 4.0]);
        assert_eq!(d.ys(), &[2.0, 5.0]);
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_dataset_csv("x1,y\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        match err {
            CsvError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
        let err = read_dataset_csv("x1,y\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CsvError::Malformed { line: 3, .. }), "{err}");
        let err = read_dataset_csv("x1,y\n1,NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CsvError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn header_checked() {
        assert!(matches!(
            read_dataset_csv("a,b\n1,2\n".as_bytes()),
            Err(CsvError::BadHeader)
        ));
        assert!(matches!(
            read_dataset_csv("y\n1\n".as_bytes()),
            Err(CsvError::BadHeader)
        ));
        assert!(matches!(read_dataset_csv("x1,y\n".as_bytes()), Err(CsvError::Empty)));
    }

    #[test]
    fn round_trip() {
        let d = LabeledDataset::new(vec![vec![0.1, 0.25], vec![1e-17, -3.0]], vec![0.3, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), d);
    }
}
