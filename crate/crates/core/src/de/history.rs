//! CSV export of DE history, plus a per-trial sidecar holding every trial
//! divergence so cycle statistics can be recomputed offline.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::de::engine::CycleRecord;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub cycle: usize,
    /// Flat parameter-tensor index.
    pub layer: usize,
    pub sparsity_before: f64,
    pub sparsity_after: f64,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub best: f64,
    pub committed_size: usize,
    pub retrain_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cycle: usize,
    pub layer: usize,
    pub trial: usize,
    pub divergence: f64,
}

impl From<&CycleRecord> for HistoryRow {
    fn from(r: &CycleRecord) -> Self {
        HistoryRow {
            cycle: r.cycle,
            layer: r.tensor,
            sparsity_before: r.sparsity_before,
            sparsity_after: r.sparsity_after,
            trials: r.trial_divergences.len(),
            mean: r.mean,
            std: r.std,
            best: r.best_divergence,
            committed_size: r.committed.len(),
            retrain_divergence: r.retrain_divergence,
        }
    }
}

pub fn trial_rows(records: &[CycleRecord]) -> Vec<TrialRow> {
    records
        .iter()
        .flat_map(|r| {
            r.trial_divergences.iter().enumerate().map(|(trial, &divergence)| TrialRow {
                cycle: r.cycle,
                layer: r.tensor,
                trial,
                divergence,
            })
        })
        .collect()
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Sidecar path for the per-trial CSV: `<history>.trials.csv`.
pub fn trials_path(history: &Path) -> PathBuf {
    let mut s = history.as_os_str().to_owned();
    s.push(".trials.csv");
    PathBuf::from(s)
}

/// Writes the history CSV and its trial sidecar.
pub fn write_history(records: &[CycleRecord], path: &Path) -> Result<()> {
    let rows: Vec<HistoryRow> = records.iter().map(HistoryRow::from).collect();
    write_rows(&rows, std::fs::File::create(path)?)?;
    write_rows(&trial_rows(records), std::fs::File::create(trials_path(path))?)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    read_rows(std::fs::File::open(path)?)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRow>> {
    read_rows(std::fs::File::open(trials_path(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_float_round_trip() {
        let rows = vec![HistoryRow {
            cycle: 3,
            layer: 0,
            sparsity_before: 0.1,
            sparsity_after: 0.145,
            trials: 120,
            mean: 1.0 / 3.0,
            std: 2f64.sqrt(),
            best: 1e-300,
            committed_size: 5,
            retrain_divergence: 0.0,
        }];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "cycle,layer,sparsity_before,sparsity_after,trials,mean,std,best,committed_size,retrain_divergence\n"
        ));
        let back: Vec<HistoryRow> = read_rows(&buf[..]).unwrap();
        assert_eq!(back, rows);
    }
}
