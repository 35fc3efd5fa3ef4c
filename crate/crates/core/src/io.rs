//! File formats: sample CSV, ground-truth sidecar, event records.
//!
//! Sample files hold one row per time step and one column per channel, with
//! an optional header row. The sidecar of `name.csv` is `name.truth.toml`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::DetectionEvent;
use crate::error::{Error, Result};
use crate::synth::Scenario;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parses CSV samples. A first row that does not parse as numbers is taken as
/// a header. Rows are 1-based in errors, counting the header.
pub fn parse_samples<R: std::io::Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let row_no = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("not a number: {e}"),
                })
            }
        };
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: row_no,
                message: format!("non-finite value {bad}"),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty("no sample rows"));
    }
    Ok(rows)
}

pub fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    parse_samples(std::io::BufReader::new(file))
}

pub fn format_samples(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let n_channels = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..n_channels).map(|c| format!("ch{c}")).collect();
    let flush_err = |e: csv::Error| Error::Io {
        path: "<buffer>".into(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(flush_err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(flush_err)?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: "<buffer>".into(),
        message: e.to_string(),
    })
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Ground truth stored beside a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_samples: usize,
    pub n_channels: usize,
    pub change_times: Vec<usize>,
    pub segment_sigmas: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            seed: s.seed,
            n_samples: s.len(),
            n_channels: s.n_channels(),
            change_times: s.change_times.clone(),
            segment_sigmas: s.segment_sigmas.clone(),
            correlation: s.correlation.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io {
            path: "<truth>".into(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&text).map_err(|e| io_err(path, e))
    }
}

/// `dir/name.csv` -> `dir/name.truth.toml`.
pub fn sidecar_path(samples: &Path) -> PathBuf {
    let stem = samples.file_stem().unwrap_or_default().to_string_lossy();
    samples.with_file_name(format!("{stem}.truth.toml"))
}

/// Writes `prefix.csv` and its sidecar into `dir`; returns the CSV path.
pub fn write_scenario(dir: &Path, prefix: &str, scenario: &Scenario) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{prefix}.csv"));
    write_atomic(&csv_path, &format_samples(&scenario.samples)?)?;
    let truth = GroundTruth::from_scenario(scenario).to_toml()?;
    write_atomic(&sidecar_path(&csv_path), truth.as_bytes())?;
    Ok(csv_path)
}

/// One JSON object per line.
pub fn event_line(ev: &DetectionEvent) -> String {
    serde_json::to_string(ev).expect("events serialize")
}

/// Sample files (`*.csv`) of a directory, sorted by name.
pub fn list_sample_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let a = parse_samples("x,y\n1,2\n3,4\n".as_bytes()).unwrap();
        let b = parse_samples("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn malformed_row_names_row_number() {
        let err = parse_samples("a\n1\n2\nx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 4, .. }));
        let err = parse_samples("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
        assert!(matches!(parse_samples("1\nNaN\n".as_bytes()), Err(Error::Parse { row: 2, .. })));
        assert!(parse_samples("".as_bytes()).is_err());
    }

    #[test]
    fn samples_round_trip_exactly() {
        let rows = vec![vec![0.1, -2.5e-7], vec![1.0 / 3.0, 12345.678]];
        let bytes = format_samples(&rows).unwrap();
        assert_eq!(parse_samples(bytes.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("/a/s01.csv")), PathBuf::from("/a/s01.truth.toml"));
    }
}
