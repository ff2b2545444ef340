//! One-reference/one-probe verification protocol.
//!
//! Every probe is scored against every enrolled reference. A pair of the same
//! subject is genuine, any other pair an impostor. Per-image work (mixture
//! fit, segmentation, SIFT) is done once in [`prepare_dataset`]; scoring a
//! configuration only gates, fuses and matches.

use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;

use crate::config::{Config, GateMode, SegmentationMode};
use crate::enroll::{build_template, prepare, PreparedImage};
use crate::error::{Error, Result};
use crate::evaluation::roc::{GenuineScore, ImpostorScore, ScoreSet};
use crate::evaluation::synth::Dataset;
use crate::imaging::{load_image, load_mask, PixelSet};
use crate::matching::{match_templates, MatchParams, MatchStrategy, Template};
use crate::mixture::{fit_gmm, MixtureModel};
use crate::segmentation::validate_cluster_counts;

/// Upper bound on pooled pixels used to fit a global model.
const GLOBAL_MODEL_SAMPLES: usize = 60_000;

#[derive(Debug, Clone)]
pub struct PreparedProbe {
    pub probe_id: String,
    pub image: PreparedImage,
}

#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject_id: String,
    pub reference: PreparedImage,
    pub probes: Vec<PreparedProbe>,
}

/// A dataset with all per-image work done.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub subjects: Vec<PreparedSubject>,
    /// Subjects dropped because their reference could not be prepared.
    pub excluded: Vec<(String, String)>,
}

fn prepare_file(path: &Path, mask: Option<&Path>, cfg: &Config) -> Result<PreparedImage> {
    let img = load_image(path)?;
    let mask = mask.map(load_mask).transpose()?;
    prepare(&img, mask.as_ref(), cfg)
}

fn probe_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads and prepares every image in parallel. Failures are logged and the
/// affected subject or probe is left out.
pub fn prepare_dataset(ds: &Dataset, cfg: &Config) -> Result<PreparedDataset> {
    cfg.validate()?;
    ds.validate()?;
    let results: Vec<_> = ds
        .subjects
        .par_iter()
        .map(|s| {
            let mask = s.mask.as_deref();
            let reference = prepare_file(&s.reference, mask, cfg);
            let probes: Vec<_> = s
                .probes
                .par_iter()
                .map(|p| (probe_id(p), prepare_file(p, mask, cfg)))
                .collect();
            (s, reference, probes)
        })
        .collect();

    let mut subjects = Vec::new();
    let mut excluded = Vec::new();
    for (s, reference, probes) in results {
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                warn!("subject {} excluded: reference failed: {e}", s.subject_id);
                excluded.push((s.subject_id.clone(), e.to_string()));
                continue;
            }
        };
        let probes: Vec<PreparedProbe> = probes
            .into_iter()
            .filter_map(|(id, r)| match r {
                Ok(image) => Some(PreparedProbe { probe_id: id, image }),
                Err(e) => {
                    warn!("probe {id} of subject {} excluded: {e}", s.subject_id);
                    None
                }
            })
            .collect();
        if probes.len() >= 2 {
            let (k1, k2, k_intra) = (reference.model.len(), probes[0].image.model.len(), probes[1].image.model.len());
            let n = reference.pixels.len();
            debug!(
                "subject {}: cluster counts k1={k1} k2={k2} k_intra={k_intra}, relation holds: {}",
                s.subject_id,
                validate_cluster_counts(n, k1, k2, k_intra)
            );
        }
        subjects.push(PreparedSubject {
            subject_id: s.subject_id.clone(),
            reference,
            probes,
        });
    }
    Ok(PreparedDataset { subjects, excluded })
}

/// Fits one mixture to pixels pooled evenly from all references.
pub fn fit_global_model(prepared: &PreparedDataset, cfg: &Config) -> Result<MixtureModel> {
    let total: usize = prepared.subjects.iter().map(|s| s.reference.pixels.len()).sum();
    let step = total.div_ceil(GLOBAL_MODEL_SAMPLES).max(1);
    let colors: Vec<[f64; 3]> = prepared
        .subjects
        .iter()
        .flat_map(|s| s.reference.pixels.samples().iter().step_by(step).map(|p| p.color))
        .collect();
    fit_gmm(&PixelSet::from_colors(&colors), cfg.k, cfg.seed)
}

/// One probe-versus-reference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub probe_subject: String,
    pub ref_subject: String,
    pub genuine: bool,
    pub score: f64,
    pub match_count: usize,
}

/// Scores of one (mode, strategy) configuration in canonical
/// (probe, reference) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigScores {
    pub mode: SegmentationMode,
    pub strategy: MatchStrategy,
    pub records: Vec<ScoreRecord>,
}

impl ConfigScores {
    pub fn score_set(&self) -> ScoreSet {
        let mut set = ScoreSet::default();
        for r in &self.records {
            if r.genuine {
                set.genuine.push(GenuineScore {
                    subject_id: r.probe_subject.clone(),
                    score: r.score,
                });
            } else {
                set.impostor.push(ImpostorScore {
                    probe_subject: r.probe_subject.clone(),
                    ref_subject: r.ref_subject.clone(),
                    score: r.score,
                });
            }
        }
        set
    }

    pub fn genuine_count(&self) -> usize {
        self.records.iter().filter(|r| r.genuine).count()
    }

    pub fn impostor_count(&self) -> usize {
        self.records.len() - self.genuine_count()
    }

    pub fn mean_impostor_matches(&self) -> f64 {
        let imp: Vec<_> = self.records.iter().filter(|r| !r.genuine).collect();
        if imp.is_empty() {
            return 0.0;
        }
        imp.iter().map(|r| r.match_count as f64).sum::<f64>() / imp.len() as f64
    }
}

/// Scores every probe against every reference for one configuration.
///
/// References are gated against their own model (or `global` in global gate
/// mode); probes against the reference's model (or `global`). A probe whose
/// gated regions hold no keypoint scores 0 against that reference. References
/// whose template is empty are dropped with a warning.
pub fn score_configuration(
    prepared: &PreparedDataset,
    cfg: &Config,
    mode: SegmentationMode,
    strategy: MatchStrategy,
    global: Option<&MixtureModel>,
) -> Result<ConfigScores> {
    let cfg = Config {
        mode,
        matching: MatchParams { strategy, ..cfg.matching.clone() },
        ..cfg.clone()
    };
    cfg.validate()?;
    let global = match cfg.gate_mode {
        GateMode::Global => Some(global.ok_or_else(|| {
            Error::InvalidParameter("global gate mode needs a global model".into())
        })?),
        GateMode::Reference => None,
    };

    let references: Vec<(&PreparedSubject, Template)> = prepared
        .subjects
        .iter()
        .filter_map(|s| match build_template(&s.reference, &s.subject_id, global, &cfg) {
            Ok(e) => Some((s, e.template)),
            Err(e) => {
                warn!("subject {} has no usable reference template ({mode}): {e}", s.subject_id);
                None
            }
        })
        .collect();
    let enrolled: Vec<&str> = references.iter().map(|(s, _)| s.subject_id.as_str()).collect();

    let probes: Vec<(&PreparedSubject, &PreparedProbe)> = prepared
        .subjects
        .iter()
        .filter(|s| enrolled.contains(&s.subject_id.as_str()))
        .flat_map(|s| s.probes.iter().map(move |p| (s, p)))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..probes.len())
        .flat_map(|p| (0..references.len()).map(move |r| (p, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(pi, ri)| {
            let (psub, probe) = probes[pi];
            let (rsub, rtemplate) = &references[ri];
            let gate = global.unwrap_or(&rtemplate.source_model);
            let (score, match_count) = match build_template(&probe.image, &psub.subject_id, Some(gate), &cfg) {
                Ok(e) => {
                    let m = match_templates(&e.template, rtemplate, &cfg.matching)?;
                    (m.normalized_score, m.match_count)
                }
                Err(Error::EmptyTemplate) => (0.0, 0),
                Err(e) => return Err(e),
            };
            Ok(ScoreRecord {
                probe_id: probe.probe_id.clone(),
                probe_subject: psub.subject_id.clone(),
                ref_subject: rsub.subject_id.clone(),
                genuine: psub.subject_id == rsub.subject_id,
                score,
                match_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfigScores { mode, strategy, records })
}

/// [`prepare_dataset`] then [`score_configuration`] for one configuration.
pub fn run_protocol(ds: &Dataset, cfg: &Config, global: Option<&MixtureModel>) -> Result<ConfigScores> {
    let prepared = prepare_dataset(ds, cfg)?;
    let fitted;
    let global = match (cfg.gate_mode, global) {
        (GateMode::Global, None) => {
            fitted = fit_global_model(&prepared, cfg)?;
            Some(&fitted)
        }
        (_, g) => g,
    };
    score_configuration(&prepared, cfg, cfg.mode, cfg.matching.strategy, global)
}
