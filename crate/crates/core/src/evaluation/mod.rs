//! Verification experiments over a dataset manifest.
//!
//! [`evaluate`] prepares every image once, then scores the four
//! (mode, strategy) configurations and reduces each to an operating point.

pub mod calibrate;
pub mod protocol;
pub mod report;
pub mod roc;
pub mod synth;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{Config, GateMode, SegmentationMode};
use crate::error::{Error, Result};
use crate::matching::MatchStrategy;
use crate::mixture::MixtureModel;

use protocol::{fit_global_model, prepare_dataset, score_configuration, ConfigScores, PreparedDataset};
use report::{compare_sessions, EvalReport, ReportRow};
use roc::{compute_roc, operating_point, RocCurve};

/// Configurations in report order.
pub const CONFIGURATIONS: [(SegmentationMode, MatchStrategy); 4] = [
    (SegmentationMode::Prior, MatchStrategy::Ed),
    (SegmentationMode::Prior, MatchStrategy::Nn),
    (SegmentationMode::After, MatchStrategy::Ed),
    (SegmentationMode::After, MatchStrategy::Nn),
];

pub const SCORES_FILE: &str = "scores.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone)]
pub struct ConfigOutcome {
    pub scores: ConfigScores,
    pub curve: RocCurve,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub outcomes: Vec<ConfigOutcome>,
    pub report: EvalReport,
}

/// Uses `global` when given, otherwise fits one if the gate mode needs it.
pub fn resolve_global(
    prepared: &PreparedDataset,
    cfg: &Config,
    global: Option<&MixtureModel>,
) -> Result<Option<MixtureModel>> {
    match (cfg.gate_mode, global) {
        (GateMode::Global, None) => fit_global_model(prepared, cfg).map(Some),
        (GateMode::Global, Some(g)) => Ok(Some(g.clone())),
        (GateMode::Reference, _) => Ok(None),
    }
}

/// Scores all four configurations on an already prepared dataset.
pub fn evaluate_prepared(prepared: &PreparedDataset, cfg: &Config, global: Option<&MixtureModel>) -> Result<Evaluation> {
    let global = resolve_global(prepared, cfg, global)?;
    let mut outcomes = Vec::with_capacity(CONFIGURATIONS.len());
    let mut rows = Vec::with_capacity(CONFIGURATIONS.len());
    for (mode, strategy) in CONFIGURATIONS {
        let scores = score_configuration(prepared, cfg, mode, strategy, global.as_ref())?;
        let curve = compute_roc(&scores.score_set())?;
        let op = operating_point(&curve);
        log::info!(
            "{mode}/{strategy}: {} genuine, {} impostor, accuracy {:.2}",
            scores.genuine_count(),
            scores.impostor_count(),
            op.accuracy
        );
        rows.push(ReportRow::new(mode, strategy, &op, scores.mean_impostor_matches()));
        outcomes.push(ConfigOutcome { scores, curve });
    }
    Ok(Evaluation {
        outcomes,
        report: compare_sessions(rows)?,
    })
}

pub fn evaluate(ds: &synth::Dataset, cfg: &Config, global: Option<&MixtureModel>) -> Result<Evaluation> {
    evaluate_prepared(&prepare_dataset(ds, cfg)?, cfg, global)
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    probe_id: &'a str,
    ref_id: &'a str,
    genuine: bool,
    strategy: MatchStrategy,
    mode: SegmentationMode,
    score: f64,
}

#[derive(Serialize)]
struct RocLine {
    mode: SegmentationMode,
    strategy: MatchStrategy,
    threshold: f64,
    tp: f64,
    fp: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl Evaluation {
    pub fn outcome(&self, mode: SegmentationMode, strategy: MatchStrategy) -> Option<&ConfigOutcome> {
        self.outcomes
            .iter()
            .find(|o| o.scores.mode == mode && o.scores.strategy == strategy)
    }

    /// Writes scores, ROC points, the report table and the summary into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rows(
            &dir.join(SCORES_FILE),
            self.outcomes.iter().flat_map(|o| {
                o.scores.records.iter().map(|r| ScoreLine {
                    probe_id: &r.probe_id,
                    ref_id: &r.ref_subject,
                    genuine: r.genuine,
                    strategy: o.scores.strategy,
                    mode: o.scores.mode,
                    score: r.score,
                })
            }),
        )?;
        write_rows(
            &dir.join(ROC_FILE),
            self.outcomes.iter().flat_map(|o| {
                o.curve.points.iter().map(|p| RocLine {
                    mode: o.scores.mode,
                    strategy: o.scores.strategy,
                    threshold: p.threshold,
                    tp: p.tp,
                    fp: p.fp,
                })
            }),
        )?;
        self.report.write_csv(dir.join(REPORT_FILE))?;
        let summary = dir.join(SUMMARY_FILE);
        fs::write(&summary, self.report.summary()).map_err(|e| Error::io(&summary, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synth::generate_synthetic_dataset;

    #[test]
    fn five_subjects_give_n_and_n_times_n_minus_one_scores() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(5, 1, dir.path(), 9).unwrap();
        let eval = evaluate(&ds, &Config::default(), None).unwrap();
        assert_eq!(eval.outcomes.len(), 4);
        for o in &eval.outcomes {
            assert_eq!(o.scores.genuine_count(), 5, "{}/{}", o.scores.mode, o.scores.strategy);
            assert_eq!(o.scores.impostor_count(), 20);
            assert!(o.scores.records.iter().all(|r| (0.0..=1.0).contains(&r.score)));
        }
        assert_eq!(eval.report.deltas().len(), 2);
    }

    #[test]
    fn outputs_are_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(4, 1, dir.path().join("data"), 5).unwrap();
        let cfg = Config::default();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        evaluate(&ds, &cfg, None).unwrap().write_outputs(&a).unwrap();
        evaluate(&ds, &cfg, None).unwrap().write_outputs(&b).unwrap();
        for f in [SCORES_FILE, ROC_FILE, REPORT_FILE, SUMMARY_FILE] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        let scores = fs::read_to_string(a.join(SCORES_FILE)).unwrap();
        assert!(scores.starts_with("probe_id,ref_id,genuine,strategy,mode,score\n"));
        assert_eq!(scores.lines().count(), 1 + 4 * 16);
    }

    #[test]
    fn global_gate_mode_runs() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(3, 1, dir.path(), 2).unwrap();
        let cfg = Config { gate_mode: GateMode::Global, ..Config::default() };
        let eval = evaluate(&ds, &cfg, None).unwrap();
        let after = eval.outcome(SegmentationMode::After, MatchStrategy::Nn).unwrap();
        assert_eq!(after.scores.records.len(), 9);
    }
}
