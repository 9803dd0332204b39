//! Return panels on disk.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Header names recognised as a leading date/period index column.
const INDEX_NAMES: [&str; 5] = ["date", "time", "t", "index", "period"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missing {
    /// Drop rows missing in every series, then zero-fill the remaining gaps.
    #[default]
    DropCommonAndZeroFill,
    Error,
}

impl std::str::FromStr for Missing {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "drop_common_and_zero_fill" | "zero_fill" => Ok(Self::DropCommonAndZeroFill),
            "error" => Ok(Self::Error),
            _ => Err(CliError::Config(format!("unknown missing-value policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Demean every column (over its observed cells).
    pub center: bool,
    pub missing: Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub names: Vec<String>,
    /// Values of the index column, when the file has one.
    pub index: Option<Vec<String>>,
    /// `n × m`, one row per period.
    pub data: DMatrix<f64>,
    pub dropped_rows: usize,
    pub zero_filled: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

pub fn load_panel(path: &Path, opts: &LoadOptions) -> Result<ReturnsPanel, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_index = header
        .first()
        .is_some_and(|h| INDEX_NAMES.contains(&h.to_ascii_lowercase().as_str()));
    let skip = usize::from(has_index);
    let names: Vec<String> = header[skip..].to_vec();
    let m = names.len();
    if m == 0 {
        return Err(CliError::EmptyPanel);
    }

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut index = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        // line 1 is the header
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::Parse {
            line,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != m + skip {
            return Err(CliError::Parse {
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", m + skip, rec.len()),
            });
        }
        if has_index {
            index.push(rec[0].to_string());
        }
        let mut row = Vec::with_capacity(m);
        for (j, cell) in rec.iter().skip(skip).enumerate() {
            if is_missing(cell) {
                if opts.missing == Missing::Error {
                    return Err(CliError::MissingValue {
                        line,
                        column: names[j].clone(),
                    });
                }
                row.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| CliError::Parse {
                line,
                column: names[j].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    line,
                    column: names[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            row.push(Some(v));
        }
        rows.push(row);
    }

    let before = rows.len();
    let keep: Vec<usize> = (0..rows.len())
        .filter(|&t| rows[t].iter().any(Option::is_some))
        .collect();
    let dropped_rows = before - keep.len();
    if keep.is_empty() {
        return Err(CliError::EmptyPanel);
    }

    let mut means = vec![0.0; m];
    if opts.center {
        for (j, mean) in means.iter_mut().enumerate() {
            let obs: Vec<f64> = keep.iter().filter_map(|&t| rows[t][j]).collect();
            if !obs.is_empty() {
                *mean = obs.iter().sum::<f64>() / obs.len() as f64;
            }
        }
    }
    let mut zero_filled = 0;
    let data = DMatrix::from_fn(keep.len(), m, |t, j| match rows[keep[t]][j] {
        Some(v) => v - means[j],
        None => {
            zero_filled += 1;
            0.0
        }
    });
    let index = has_index.then(|| keep.iter().map(|&t| index[t].clone()).collect());
    info!(
        "loaded {}: {} rows x {} columns, {} all-missing rows dropped, {} cells zero-filled",
        path.display(),
        data.nrows(),
        m,
        dropped_rows,
        zero_filled
    );
    Ok(ReturnsPanel {
        names,
        index,
        data,
        dropped_rows,
        zero_filled,
    })
}

/// CSV with a `t` index column followed by one column per series.
pub fn panel_csv(names: &[String], data: &DMatrix<f64>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(CliError::csv)?;
    for t in 0..data.nrows() {
        let mut rec = vec![t.to_string()];
        rec.extend(data.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(CliError::csv)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, opts: LoadOptions) -> Result<ReturnsPanel, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.csv");
        std::fs::write(&p, text).unwrap();
        load_panel(&p, &opts)
    }

    #[test]
    fn common_rows_dropped_and_gaps_zero_filled() {
        let p = load("a,b\n1.0,2.0\n,\n3.0,\n", LoadOptions::default()).unwrap();
        assert_eq!(p.data.nrows(), 2);
        assert_eq!(p.dropped_rows, 1);
        assert_eq!(p.zero_filled, 1);
        assert_eq!(p.data[(1, 1)], 0.0);
        assert_eq!(p.names, vec!["a", "b"]);
    }

    #[test]
    fn centering_zeroes_column_means() {
        let p = load(
            "date,a,b\n2020-01-01,1.5,-2\n2020-01-02,0.25,\n2020-01-03,-3,7.125\n",
            LoadOptions {
                center: true,
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert_eq!(p.index.as_ref().unwrap().len(), 3);
        for j in 0..2 {
            assert!(p.data.column(j).mean().abs() < 1e-12);
        }
    }

    #[test]
    fn errors_carry_locations() {
        let e = load("a,b\n1,2\n3,x\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, ref column, .. } if column == "b"), "{e}");
        let strict = LoadOptions {
            missing: Missing::Error,
            ..LoadOptions::default()
        };
        let e = load("a,b\n1,\n", strict).unwrap_err();
        assert!(matches!(e, CliError::MissingValue { line: 2, .. }));
        assert!(matches!(load("a,b\n,\n", LoadOptions::default()), Err(CliError::EmptyPanel)));
        assert!(matches!(load("a,b\n", LoadOptions::default()), Err(CliError::EmptyPanel)));
    }

    #[test]
    fn written_panel_loads_back_exactly() {
        let data = DMatrix::from_fn(4, 2, |i, j| (i as f64 - 1.3) * 0.1 + j as f64 / 3.0);
        let names = vec!["x".to_string(), "y".to_string()];
        let bytes = panel_csv(&names, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, bytes).unwrap();
        let back = load_panel(&p, &LoadOptions::default()).unwrap();
        assert_eq!(back.data, data);
        assert_eq!(back.names, names);
    }
}
