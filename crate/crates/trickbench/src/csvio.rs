//! CSV files written by the runner and read back by tests and plotting.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! reading a file back reproduces every value bit for bit. Missing values are
//! empty fields.

use std::path::Path;

use trickbench_core::agents::UpdateDiagnostics;
use trickbench_core::harness::CurveRecord;
use trickbench_core::policy::Histogram;

use crate::error::{Error, Result};

pub const CURVES_HEADER: [&str; 6] = ["seed", "episode", "steps", "return", "mean_kl", "lr"];
pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "seed",
    "step",
    "epoch",
    "kl",
    "kl_analytic",
    "grad_norm_pre_clip",
    "lr",
    "surrogate",
    "accepted",
];
pub const PROBE_HEADER: [&str; 2] = ["bin_center", "density"];

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    csv::Writer::from_path(path).map_err(Error::csv(path))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(Error::csv(path))?;
    for row in rows {
        w.write_record(&row).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Writes curve records sorted by `(seed, episode)`.
pub fn write_curves(path: &Path, records: &[CurveRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(trickbench_core::Error::Contract("no curve records to write").into());
    }
    let mut sorted: Vec<&CurveRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.seed, r.episode));
    write_rows(
        path,
        &CURVES_HEADER,
        sorted.into_iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.episode.to_string(),
                r.steps.to_string(),
                format_float(r.mean_return),
                format_opt(r.mean_kl),
                format_float(r.learning_rate),
            ]
        }),
    )
}

/// Diagnostics of several seeds, each row prefixed by its seed.
pub fn write_diagnostics<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (u64, &'a UpdateDiagnostics)>,
) -> Result<()> {
    write_rows(
        path,
        &DIAGNOSTICS_HEADER,
        rows.into_iter().map(|(seed, d)| {
            vec![
                seed.to_string(),
                d.step.to_string(),
                d.epoch.to_string(),
                format_float(d.kl_estimate),
                format_float(d.kl_analytic),
                format_float(d.grad_norm_pre_clip),
                format_float(d.learning_rate),
                format_float(d.surrogate),
                d.accepted.map(|a| a.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_probe(path: &Path, histogram: &Histogram) -> Result<()> {
    write_rows(
        path,
        &PROBE_HEADER,
        histogram
            .centers()
            .into_iter()
            .zip(&histogram.density)
            .map(|(c, d)| vec![format_float(c), format_float(*d)]),
    )
}

/// Reads a CSV, checking the header and handing each data row to `parse_row`
/// together with its 1-based line number.
fn read_rows<T>(
    path: &Path,
    header: &[&str],
    mut parse_row: impl FnMut(&csv::StringRecord, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let found = r.headers().map_err(Error::csv(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            path: path.into(),
            row: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(Error::csv(path))?;
        out.push(parse_row(&record, i + 2)?);
    }
    Ok(out)
}

struct Fields<'a> {
    path: &'a Path,
    row: usize,
    record: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.into(),
            row: self.row,
            message,
        }
    }

    fn get<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T> {
        let raw = self.record.get(i).unwrap_or("");
        raw.parse().map_err(|_| self.err(format!("bad {name} `{raw}`")))
    }

    fn opt<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<Option<T>> {
        match self.record.get(i) {
            None | Some("") => Ok(None),
            Some(_) => self.get(i, name).map(Some),
        }
    }
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRecord>> {
    read_rows(path, &CURVES_HEADER, |record, row| {
        let f = Fields { path, row, record };
        Ok(CurveRecord {
            seed: f.get(0, "seed")?,
            episode: f.get(1, "episode")?,
            steps: f.get(2, "steps")?,
            mean_return: f.get(3, "return")?,
            mean_kl: f.opt(4, "mean_kl")?,
            learning_rate: f.get(5, "lr")?,
        })
    })
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<(u64, UpdateDiagnostics)>> {
    read_rows(path, &DIAGNOSTICS_HEADER, |record, row| {
        let f = Fields { path, row, record };
        Ok((
            f.get(0, "seed")?,
            UpdateDiagnostics {
                step: f.get(1, "step")?,
                epoch: f.get(2, "epoch")?,
                kl_estimate: f.get(3, "kl")?,
                kl_analytic: f.get(4, "kl_analytic")?,
                grad_norm_pre_clip: f.get(5, "grad_norm_pre_clip")?,
                learning_rate: f.get(6, "lr")?,
                surrogate: f.get(7, "surrogate")?,
                accepted: f.opt(8, "accepted")?,
            },
        ))
    })
}

pub fn read_probe(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_rows(path, &PROBE_HEADER, |record, row| {
        let f = Fields { path, row, record };
        Ok((f.get(0, "bin_center")?, f.get(1, "density")?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(format_float(-2.5e-300).parse::<f64>().unwrap(), -2.5e-300);
    }
}
