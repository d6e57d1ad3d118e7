use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{sha256_hex, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelimitedOptions {
    pub delimiter: u8,
    /// Zero-based column holding integer labels.
    pub label_column: Option<usize>,
    pub header: bool,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            label_column: None,
            header: false,
        }
    }
}

fn parse_label(field: &str) -> Option<i64> {
    field.parse::<i64>().ok().or_else(|| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && v.fract() == 0.0 && v.abs() < 2f64.powi(53))
            .map(|v| v as i64)
    })
}

/// Loads a delimited text file of numbers. The fingerprint is the SHA-256 of
/// the raw file bytes.
pub fn load_delimited(path: impl AsRef<Path>, options: &DelimitedOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(&bytes, path, options)
}

pub(crate) fn parse_delimited(bytes: &[u8], path: &Path, options: &DelimitedOptions) -> Result<Dataset> {
    let parse_err = |line: usize, column: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut names: Option<Vec<String>> = None;
    if options.header {
        let header = reader.headers().map_err(|e| parse_err(1, 0, e.to_string()))?;
        names = Some(header.iter().map(str::to_string).collect());
    }

    let mut width: Option<usize> = names.as_ref().map(Vec::len);
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    0,
                    format!("expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (column, field) in record.iter().enumerate() {
            if Some(column) == options.label_column {
                let label = parse_label(field)
                    .ok_or_else(|| parse_err(line, column + 1, format!("label '{field}' is not an integer")))?;
                labels.push(label);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, column + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, column + 1, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        rows += 1;
    }

    let width = width.filter(|_| rows > 0).ok_or_else(|| {
        Error::InvalidData(format!("{} contains no data rows", path.display()))
    })?;
    let feature_cols = match options.label_column {
        Some(c) if c >= width => {
            return Err(Error::InvalidConfig(format!(
                "label column {c} does not exist ({width} columns)"
            )))
        }
        Some(_) => width - 1,
        None => width,
    };
    let features = Array2::from_shape_vec((rows, feature_cols), values)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let names = names.map(|mut n| {
        if let Some(c) = options.label_column {
            n.remove(c);
        }
        n
    });
    let labels = options.label_column.map(|_| labels);
    Dataset::new(features, labels, names, Some(sha256_hex(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str, options: &DelimitedOptions) -> Result<Dataset> {
        parse_delimited(text.as_bytes(), Path::new("mem.csv"), options)
    }

    #[test]
    fn plain_matrix() {
        let d = parse("1,2\n3,4\n5,6", &DelimitedOptions::default()).unwrap();
        assert_eq!(d.features(), array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert!(d.labels().is_none());
    }

    #[test]
    fn label_column_is_split_off() {
        let opts = DelimitedOptions {
            label_column: Some(0),
            header: true,
            ..Default::default()
        };
        let d = parse("y,a,b\n1,0.5,2\n0,1.5,3\n", &opts).unwrap();
        assert_eq!(d.labels(), Some(&[1, 0][..]));
        assert_eq!(d.features(), array![[0.5, 2.0], [1.5, 3.0]]);
        assert_eq!(d.feature_names(), ["a", "b"]);
    }

    #[test]
    fn nan_cell_cites_row_and_column() {
        let err = parse("1,2\n3,NaN\n", &DelimitedOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse("1,2\n3\n", &DelimitedOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn empty_input_rejected() {
        assert!(parse("", &DelimitedOptions::default()).is_err());
    }

    #[test]
    fn tab_delimiter() {
        let opts = DelimitedOptions {
            delimiter: b'\t',
            ..Default::default()
        };
        let d = parse("1\t2\n3\t4\n", &opts).unwrap();
        assert_eq!(d.dims(), 2);
    }

    #[test]
    fn fingerprint_is_raw_byte_hash() {
        let d = parse("1,2\n3,4\n", &DelimitedOptions::default()).unwrap();
        assert_eq!(d.fingerprint(), sha256_hex(b"1,2\n3,4\n"));
    }
}
