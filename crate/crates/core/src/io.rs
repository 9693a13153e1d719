//! CSV and JSON file formats.
//!
//! Survival CSV: a header row, then `time,status,x1,...,xp` per subject
//! (`status` is 0 for right-censored, 1 for an observed event).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::survival::SurvivalDataset;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_field(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::InvalidData(format!("row {row}: column `{column}` is not a number: `{raw}`"))
    })
}

/// Read a survival dataset from any reader. Row numbers in error messages
/// count data rows from 1 (the header is row 0).
pub fn read_survival_csv<R: Read>(reader: R) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 3 {
        return Err(Error::InvalidData(format!(
            "expected header `time,status,<covariates...>`, found {} column(s)",
            headers.len()
        )));
    }
    let p = headers.len() - 2;
    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut values = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidData(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let t = parse_field(&record[0], row, &headers[0])?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidData(format!("row {row}: time must be positive, found {t}")));
        }
        let s = match record[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidData(format!(
                    "row {row}: status must be 0 or 1, found `{other}`"
                )))
            }
        };
        times.push(t);
        status.push(s);
        for (c, raw) in record.iter().enumerate().skip(2) {
            values.push(parse_field(raw, row, &headers[c])?);
        }
    }
    let n = times.len();
    let design = Array2::from_shape_vec((n, p), values).expect("row width checked above");
    SurvivalDataset::new(times, status, design)?.with_feature_names(headers[2..].to_vec())
}

pub fn load_survival_csv(path: &Path) -> Result<SurvivalDataset> {
    read_survival_csv(open(path)?)
}

pub fn write_survival_csv<W: Write>(data: &SurvivalDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend((0..data.p()).map(|j| data.feature_name(j)));
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = Vec::with_capacity(data.p() + 2);
        row.push(data.times()[i].to_string());
        row.push(if data.status()[i] { "1" } else { "0" }.to_string());
        row.extend(data.design().row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn save_survival_csv(data: &SurvivalDataset, path: &Path) -> Result<()> {
    write_survival_csv(data, create(path)?)
}

/// Read a covariate-only CSV (header row of feature names).
pub fn read_design_csv<R: Read>(reader: R) -> Result<(Array2<f64>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let p = headers.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != p {
            return Err(Error::InvalidData(format!(
                "row {}: expected {p} fields, found {}",
                k + 1,
                record.len()
            )));
        }
        for (c, raw) in record.iter().enumerate() {
            values.push(parse_field(raw, k + 1, &headers[c])?);
        }
        n += 1;
    }
    let design = Array2::from_shape_vec((n, p), values).expect("row width checked above");
    Ok((design, headers))
}

pub fn load_design_csv(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    read_design_csv(open(path)?)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Pretty-printed JSON followed by a newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(to_json_string(value)?.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_writes_survival_csv() {
        let text = "time,status,a,b\n1.5,1,0.1,-2\n2,0,3,4\n";
        let data = read_survival_csv(text.as_bytes()).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.p(), 2);
        assert_eq!(data.status(), &[true, false]);
        assert_eq!(data.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
        let mut buf = Vec::new();
        write_survival_csv(&data, &mut buf).unwrap();
        let again = read_survival_csv(buf.as_slice()).unwrap();
        assert_eq!(again, data);
    }

    #[test]
    fn rejects_bad_rows_with_row_number() {
        let err = read_survival_csv("time,status,a\n1,1,0\n-1,1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = read_survival_csv("time,status,a\n1,2,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert!(read_survival_csv("time,status\n1,1\n".as_bytes()).is_err());
        assert!(read_survival_csv("time,status,a\n1,1\n".as_bytes()).is_err());
    }
}
