use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetSummary, Endpoint, SummaryStats};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["source_id", "endpoint", "n", "mean", "sd", "successes"];

/// One row of a dataset file, shared by the CSV and JSON forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub source_id: String,
    pub endpoint: Endpoint,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<f64>>,
}

impl DatasetRecord {
    /// `row` is only used for error messages.
    pub fn into_summary(self, row: usize) -> Result<DatasetSummary> {
        let parse_err = |column: &str, message: &str| Error::Parse {
            row,
            column: column.into(),
            message: message.into(),
        };
        let stats = match self.endpoint {
            Endpoint::Binary => {
                if self.raw.is_some() {
                    return Err(parse_err(
                        "raw",
                        "raw observations are only supported for continuous endpoints",
                    ));
                }
                SummaryStats::Binary {
                    successes: self
                        .successes
                        .ok_or_else(|| parse_err("successes", "required for binary endpoints"))?,
                }
            }
            Endpoint::Continuous => {
                if self.successes.is_some() {
                    return Err(parse_err(
                        "successes",
                        "must be blank for continuous endpoints",
                    ));
                }
                let mean = match (self.mean, &self.raw) {
                    (Some(m), _) => m,
                    (None, Some(raw)) if !raw.is_empty() => {
                        raw.iter().sum::<f64>() / raw.len() as f64
                    }
                    _ => return Err(parse_err("mean", "required for continuous endpoints")),
                };
                SummaryStats::Continuous { mean, sd: self.sd }
            }
        };
        let d = DatasetSummary {
            source_id: self.source_id,
            endpoint: self.endpoint,
            n_obs: self.n,
            stats,
            raw: self.raw,
        };
        d.validate()?;
        Ok(d)
    }
}

impl From<&DatasetSummary> for DatasetRecord {
    fn from(d: &DatasetSummary) -> Self {
        Self {
            source_id: d.source_id.clone(),
            endpoint: d.endpoint,
            n: d.n_obs,
            mean: d.mean(),
            sd: d.sd(),
            successes: d.successes(),
            raw: d.raw.clone(),
        }
    }
}

fn check_unique(data: &[DatasetSummary]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, d) in data.iter().enumerate() {
        if !seen.insert(d.source_id.as_str()) {
            return Err(Error::Parse {
                row: i + 1,
                column: "source_id".into(),
                message: format!("duplicate source_id `{}`", d.source_id),
            });
        }
    }
    Ok(())
}

fn field<T: std::str::FromStr>(raw: &str, row: usize, column: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<T>().map(Some).map_err(|e| Error::Parse {
        row,
        column: column.into(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

/// Parse the CSV form. Rows are numbered from 1 for the first data row.
pub fn read_datasets_csv<R: Read>(reader: R) -> Result<Vec<DatasetSummary>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 0,
                column: name.into(),
                message: "missing column in header".into(),
            })?;
    }

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let get = |j: usize| rec.get(index[j]).unwrap_or("");
        let source_id = get(0).to_string();
        if source_id.is_empty() {
            return Err(Error::Parse {
                row,
                column: "source_id".into(),
                message: "must not be blank".into(),
            });
        }
        let endpoint = match get(1).to_ascii_lowercase().as_str() {
            "continuous" => Endpoint::Continuous,
            "binary" => Endpoint::Binary,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "endpoint".into(),
                    message: format!("expected `continuous` or `binary`, got `{other}`"),
                })
            }
        };
        let n = field::<u64>(get(2), row, "n")?.ok_or_else(|| Error::Parse {
            row,
            column: "n".into(),
            message: "must not be blank".into(),
        })?;
        let record = DatasetRecord {
            source_id,
            endpoint,
            n,
            mean: field(get(3), row, "mean")?,
            sd: field(get(4), row, "sd")?,
            successes: field(get(5), row, "successes")?,
            raw: None,
        };
        out.push(record.into_summary(row)?);
    }
    check_unique(&out)?;
    Ok(out)
}

/// Parse the JSON array form; syntax errors report line and column.
pub fn read_datasets_json<R: Read>(reader: R) -> Result<Vec<DatasetSummary>> {
    let records: Vec<DatasetRecord> =
        serde_json::from_reader(reader).map_err(|e| Error::Parse {
            row: e.line(),
            column: e.column().to_string(),
            message: e.to_string(),
        })?;
    let out = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_summary(i + 1))
        .collect::<Result<Vec<_>>>()?;
    check_unique(&out)?;
    Ok(out)
}

/// Dispatch on the file extension: `.json` is JSON, anything else CSV.
pub fn read_datasets(path: &Path) -> Result<Vec<DatasetSummary>> {
    let file = std::fs::File::open(path)?;
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        read_datasets_json(std::io::BufReader::new(file))
    } else {
        read_datasets_csv(std::io::BufReader::new(file))
    }
}

/// Write the CSV form (raw observations are not representable and are dropped).
pub fn write_datasets_csv<W: std::io::Write>(data: &[DatasetSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for d in data {
        w.write_record([
            d.source_id.clone(),
            d.endpoint.to_string(),
            d.n_obs.to_string(),
            opt(d.mean().map(|v| v.to_string())),
            opt(d.sd().map(|v| v.to_string())),
            opt(d.successes().map(|v| v.to_string())),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
