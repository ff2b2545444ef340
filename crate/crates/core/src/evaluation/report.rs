//! Segmented-versus-unsegmented comparison table.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SegmentationMode;
use crate::error::{Error, Result};
use crate::evaluation::roc::{format_table_row, OperatingPoint};
use crate::matching::MatchStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: SegmentationMode,
    pub strategy: MatchStrategy,
    pub accuracy: f64,
    pub false_positive: f64,
    /// False-negative rate in percent, under its table heading.
    pub true_negative: f64,
    pub threshold: f64,
    pub mean_impostor_matches: f64,
    /// After minus prior accuracy for this strategy; set on "after" rows.
    pub accuracy_delta: Option<f64>,
}

impl ReportRow {
    pub fn new(mode: SegmentationMode, strategy: MatchStrategy, op: &OperatingPoint, mean_impostor_matches: f64) -> Self {
        Self {
            mode,
            strategy,
            accuracy: op.accuracy,
            false_positive: op.false_positive,
            true_negative: op.true_negative,
            threshold: op.threshold,
            mean_impostor_matches,
            accuracy_delta: None,
        }
    }

    fn operating_point(&self) -> OperatingPoint {
        OperatingPoint {
            threshold: self.threshold,
            tp_rate: 1.0 - self.true_negative / 100.0,
            fp_rate: self.false_positive / 100.0,
            accuracy: self.accuracy,
            false_positive: self.false_positive,
            true_negative: self.true_negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

const ORDER: [(SegmentationMode, MatchStrategy); 4] = [
    (SegmentationMode::Prior, MatchStrategy::Ed),
    (SegmentationMode::Prior, MatchStrategy::Nn),
    (SegmentationMode::After, MatchStrategy::Ed),
    (SegmentationMode::After, MatchStrategy::Nn),
];

/// Orders rows prior/after by ED/NN and fills the per-strategy accuracy delta.
pub fn compare_sessions(rows: Vec<ReportRow>) -> Result<EvalReport> {
    let mut ordered = Vec::with_capacity(4);
    for (mode, strategy) in ORDER {
        let row = rows
            .iter()
            .find(|r| r.mode == mode && r.strategy == strategy)
            .ok_or_else(|| Error::InvalidParameter(format!("missing configuration {mode}/{strategy}")))?;
        ordered.push(row.clone());
    }
    for i in 2..4 {
        ordered[i].accuracy_delta = Some(ordered[i].accuracy - ordered[i - 2].accuracy);
    }
    Ok(EvalReport { rows: ordered })
}

impl EvalReport {
    pub fn row(&self, mode: SegmentationMode, strategy: MatchStrategy) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.mode == mode && r.strategy == strategy)
    }

    pub fn deltas(&self) -> Vec<(MatchStrategy, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.accuracy_delta.map(|d| (r.strategy, d)))
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ReportRow>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { rows })
    }

    /// Plain-text table with two decimals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<28} {:<22} {:>10} {:>12}", "configuration", "accuracy, FP, TN*", "threshold", "imp. matches").unwrap();
        for r in &self.rows {
            let stage = match r.mode {
                SegmentationMode::Prior => "prior to",
                SegmentationMode::After => "after",
            };
            let label = format!("{}, {stage} segmentation", r.strategy.as_str().to_uppercase());
            let cells = format_table_row(&r.operating_point());
            writeln!(s, "{label:<28} {cells:<22} {:>10.4} {:>12.2}", r.threshold, r.mean_impostor_matches).unwrap();
        }
        for (strategy, d) in self.deltas() {
            let sign = if d >= 0.0 { "+" } else { "" };
            writeln!(s, "accuracy change after segmentation ({}): {sign}{d:.2} points", strategy.as_str().to_uppercase()).unwrap();
        }
        writeln!(s, "* TN reports the false-negative rate 1 - TP at the operating point, in percent.").unwrap();
        s
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Parse(format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: SegmentationMode, strategy: MatchStrategy, accuracy: f64) -> ReportRow {
        ReportRow {
            mode,
            strategy,
            accuracy,
            false_positive: 100.0 - accuracy,
            true_negative: 100.0 - accuracy,
            threshold: 0.125,
            mean_impostor_matches: 1.5,
            accuracy_delta: None,
        }
    }

    fn four(acc: [f64; 4]) -> Vec<ReportRow> {
        ORDER.iter().zip(acc).map(|(&(m, s), a)| row(m, s, a)).collect()
    }

    #[test]
    fn identical_configs_have_zero_delta() {
        let r = compare_sessions(four([90.0; 4])).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.deltas(), vec![(MatchStrategy::Ed, 0.0), (MatchStrategy::Nn, 0.0)]);
    }

    #[test]
    fn deltas_are_after_minus_prior() {
        let mut rows = four([90.0, 92.0, 91.5, 95.0]);
        rows.reverse();
        let r = compare_sessions(rows).unwrap();
        assert_eq!(r.rows[0].mode, SegmentationMode::Prior);
        assert_eq!(r.deltas(), vec![(MatchStrategy::Ed, 1.5), (MatchStrategy::Nn, 3.0)]);
        assert!(r.summary().contains("NN, after segmentation"));
    }

    #[test]
    fn missing_configuration_is_an_error() {
        assert!(compare_sessions(four([90.0; 4])[..3].to_vec()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let mut rows = four([91.09, 93.01, 94.31, 96.93]);
        rows[0].threshold = 1.0 / 3.0;
        let r = compare_sessions(rows).unwrap();
        r.write_csv(&path).unwrap();
        assert_eq!(EvalReport::read_csv(&path).unwrap(), r);
    }
}
