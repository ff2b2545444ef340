//! Threshold calibration on a subject set held out from evaluation.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{Config, SegmentationMode};
use crate::error::{Error, Result};
use crate::evaluation::protocol::{score_configuration, PreparedDataset};
use crate::evaluation::resolve_global;
use crate::evaluation::roc::{compute_roc, operating_point, OperatingPoint, ScoreSet};
use crate::evaluation::synth::Dataset;
use crate::mixture::MixtureModel;

/// Candidate `tau_kl` values tried for the gate suggestion.
pub const TAU_GRID: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

fn image_paths(ds: &Dataset) -> BTreeSet<PathBuf> {
    ds.subjects
        .iter()
        .flat_map(|s| std::iter::once(&s.reference).chain(&s.probes))
        .map(|p| p.canonicalize().unwrap_or_else(|_| p.clone()))
        .collect()
}

/// Errors when the two manifests share a subject id or an image file.
pub fn check_disjoint(calibration: &Dataset, evaluation: &Dataset) -> Result<()> {
    let ids: BTreeSet<&str> = evaluation.subjects.iter().map(|s| s.subject_id.as_str()).collect();
    let shared: Vec<&str> = calibration
        .subjects
        .iter()
        .map(|s| s.subject_id.as_str())
        .filter(|id| ids.contains(id))
        .collect();
    if !shared.is_empty() {
        return Err(Error::OverlapDetected(format!("shared subject ids: {}", shared.join(", "))));
    }
    let eval_paths = image_paths(evaluation);
    if let Some(p) = image_paths(calibration).iter().find(|p| eval_paths.contains(*p)) {
        return Err(Error::OverlapDetected(format!("shared image {}", p.display())));
    }
    Ok(())
}

/// Operating point of a score set; its threshold is the calibrated ψ.
pub fn calibrate_psi(scores: &ScoreSet) -> Result<OperatingPoint> {
    Ok(operating_point(&compute_roc(scores)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauTrial {
    pub tau_kl: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub mode: SegmentationMode,
    pub strategy: crate::matching::MatchStrategy,
    pub psi: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub accuracy: f64,
    /// Grid value with the highest after-segmentation accuracy, the smallest
    /// on ties.
    pub tau_kl: f64,
    pub tau_trials: Vec<TauTrial>,
}

/// Calibrates ψ for the configured mode and strategy, and sweeps
/// [`TAU_GRID`] in after-segmentation mode for a `tau_kl` suggestion.
pub fn calibrate(prepared: &PreparedDataset, cfg: &Config, global: Option<&MixtureModel>) -> Result<Calibration> {
    let global = resolve_global(prepared, cfg, global)?;
    let strategy = cfg.matching.strategy;
    let scores = score_configuration(prepared, cfg, cfg.mode, strategy, global.as_ref())?;
    let op = calibrate_psi(&scores.score_set())?;

    let mut tau_trials = Vec::with_capacity(TAU_GRID.len());
    for tau_kl in TAU_GRID {
        let trial_cfg = Config { tau_kl, ..cfg.clone() };
        let s = score_configuration(prepared, &trial_cfg, SegmentationMode::After, strategy, global.as_ref())?;
        tau_trials.push(TauTrial {
            tau_kl,
            accuracy: calibrate_psi(&s.score_set())?.accuracy,
        });
    }
    let best = tau_trials
        .iter()
        .fold(tau_trials[0], |b, t| if t.accuracy > b.accuracy { *t } else { b });

    Ok(Calibration {
        mode: cfg.mode,
        strategy,
        psi: op.threshold,
        tp_rate: op.tp_rate,
        fp_rate: op.fp_rate,
        accuracy: op.accuracy,
        tau_kl: best.tau_kl,
        tau_trials,
    })
}
