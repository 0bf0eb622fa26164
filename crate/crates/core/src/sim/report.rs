//! Per-run results, per-cell summaries and their CSV forms.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierKind;
use crate::error::{Error, Result};
use crate::overlay::trace::{read_trace, verify_trace, write_trace, PrivacyReport};
use crate::sim::experiment::{CellStatus, ExperimentOutput, WeightingMode};

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// One row of `results.csv`: accuracies over the test places of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub cell_id: String,
    pub n: usize,
    pub k: usize,
    pub p1: usize,
    pub p2: f64,
    pub weighting: WeightingMode,
    pub classifier: ClassifierKind,
    pub run: usize,
    /// Fraction of test places answered with the exact room.
    pub room_hit: f64,
    /// Fraction answered with the right building.
    pub building_hit: f64,
    /// Mean collection iterations per answered request.
    pub r_iters: f64,
}

/// Header of `results.csv`.
pub const RESULTS_HEADER: &str = "cell_id,n,k,p1,p2,weighting,classifier,run,room_hit,building_hit,r_iters";

/// Mean and normal-approximation 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                half_width: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z_95 * (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, half_width }
    }
}

/// One row of `report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_id: String,
    pub n: usize,
    pub k: usize,
    pub p1: usize,
    pub p2: f64,
    pub weighting: WeightingMode,
    pub classifier: ClassifierKind,
    pub runs: usize,
    pub room_acc: f64,
    pub room_hw: f64,
    pub building_acc: f64,
    pub building_hw: f64,
    pub r_mean: f64,
}

impl CellSummary {
    pub fn room(&self) -> Estimate {
        Estimate {
            mean: self.room_acc,
            half_width: self.room_hw,
        }
    }

    pub fn building(&self) -> Estimate {
        Estimate {
            mean: self.building_acc,
            half_width: self.building_hw,
        }
    }
}

/// Per-cell accuracy summary, in first-appearance order of the cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyReport {
    pub cells: Vec<CellSummary>,
}

impl AccuracyReport {
    pub fn from_results(results: &[RunResult]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
        for r in results {
            let g = groups.entry(&r.cell_id).or_default();
            if g.is_empty() {
                order.push(&r.cell_id);
            }
            g.push(r);
        }
        let cells = order
            .into_iter()
            .map(|id| {
                let rows = &groups[id];
                let first = rows[0];
                let room = Estimate::of(&rows.iter().map(|r| r.room_hit).collect::<Vec<_>>());
                let building = Estimate::of(&rows.iter().map(|r| r.building_hit).collect::<Vec<_>>());
                CellSummary {
                    cell_id: id.to_owned(),
                    n: first.n,
                    k: first.k,
                    p1: first.p1,
                    p2: first.p2,
                    weighting: first.weighting,
                    classifier: first.classifier,
                    runs: rows.len(),
                    room_acc: room.mean,
                    room_hw: room.half_width,
                    building_acc: building.mean,
                    building_hw: building.half_width,
                    r_mean: rows.iter().map(|r| r.r_iters).sum::<f64>() / rows.len() as f64,
                }
            })
            .collect();
        Self { cells }
    }

    pub fn cell(&self, id: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell_id == id)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.cells, out)
    }
}

pub fn write_results<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    write_rows(results, out)
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<RunResult>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

/// One row of `cells.csv`, the grid description written next to the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub cell_id: String,
    pub n: usize,
    pub k: usize,
    pub p1: usize,
    pub p2: f64,
    pub weighting: WeightingMode,
    pub classifier: ClassifierKind,
    pub n_noisy: usize,
    /// Empty when the cell ran.
    pub skipped: String,
}

pub fn write_cells<W: Write>(cells: &[CellStatus], out: W) -> Result<()> {
    let rows: Vec<CellRow> = cells
        .iter()
        .map(|c| {
            let p = c.cell.params;
            CellRow {
                cell_id: c.cell.id.clone(),
                n: p.n,
                k: p.k,
                p1: p.p1,
                p2: p.p2,
                weighting: p.weighting,
                classifier: p.classifier,
                n_noisy: p.n_noisy,
                skipped: c.skipped.clone().unwrap_or_default(),
            }
        })
        .collect();
    write_rows(&rows, out)
}

pub fn read_cells<R: Read>(input: R) -> Result<Vec<CellRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

pub const RESULTS_FILE: &str = "results.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const TRACE_DIR: &str = "traces";

/// Writes `results.csv`, `cells.csv`, `report.csv` and one
/// `traces/<cell_id>.jsonl` per cell into `dir`.
pub fn write_output_dir(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(TRACE_DIR))?;
    write_results(&output.results, BufWriter::new(File::create(dir.join(RESULTS_FILE))?))?;
    write_cells(&output.cells, BufWriter::new(File::create(dir.join(CELLS_FILE))?))?;
    output
        .report
        .write_csv(BufWriter::new(File::create(dir.join(REPORT_FILE))?))?;
    for (cell, records) in &output.traces {
        let path = dir.join(TRACE_DIR).join(format!("{cell}.jsonl"));
        write_trace(records, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

/// Rebuilds `report.csv` from `results.csv` in `dir`.
pub fn report_dir(dir: &Path) -> Result<AccuracyReport> {
    let results = read_results(BufReader::new(File::open(dir.join(RESULTS_FILE))?))?;
    let report = AccuracyReport::from_results(&results);
    report.write_csv(BufWriter::new(File::create(dir.join(REPORT_FILE))?))?;
    Ok(report)
}

/// Checks every trace under `dir/traces`, in file-name order.
pub fn verify_dir(dir: &Path) -> Result<Vec<(String, PrivacyReport)>> {
    let mut files: Vec<_> = fs::read_dir(dir.join(TRACE_DIR))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let records = read_trace(BufReader::new(File::open(&p)?))?;
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, verify_trace(&records)))
        })
        .collect()
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cell: &str, run: usize, room: f64, building: f64) -> RunResult {
        RunResult {
            cell_id: cell.into(),
            n: 3,
            k: 25,
            p1: 0,
            p2: 0.4,
            weighting: WeightingMode::Uniform,
            classifier: ClassifierKind::Nfm,
            run,
            room_hit: room,
            building_hit: building,
            r_iters: 1.0,
        }
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = Estimate::of(&[0.2, 0.4, 0.6, 0.8]);
        assert!((e.mean - 0.5).abs() < 1e-12);
        let sd = (0.2f64 / 3.0).sqrt();
        assert!((e.half_width - Z_95 * sd / 2.0).abs() < 1e-12);
        assert!(Estimate::of(&[1.0]).half_width.is_nan());
    }

    #[test]
    fn results_csv_round_trip_and_header() {
        let rows = vec![row("a-000", 0, 0.5, 0.75), row("a-000", 1, 0.25, 0.5), row("b-000", 0, 1.0, 1.0)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn report_groups_in_order() {
        let rows = vec![row("z", 0, 0.5, 0.75), row("a", 0, 0.0, 0.5), row("z", 1, 0.25, 0.25)];
        let rep = AccuracyReport::from_results(&rows);
        assert_eq!(rep.cells[0].cell_id, "z");
        assert_eq!(rep.cells[0].runs, 2);
        assert!((rep.cells[0].room_acc - 0.375).abs() < 1e-12);
        assert!((rep.cells[0].building_acc - 0.5).abs() < 1e-12);
    }
}
