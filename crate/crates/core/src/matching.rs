//! Feature-level fusion of per-region keypoints and template matching.
//!
//! A template is the plain concatenation of the keypoints of every kept slice
//! region. Two strategies pair probe and reference descriptors one-to-one:
//!
//! * **NN**: the nearest reference descriptor is accepted when it beats the
//!   second nearest by the ratio test; conflicts are resolved greedily in
//!   ascending distance.
//! * **ED**: mutual nearest neighbours whose distance is within an absolute
//!   bound.
//!
//! The thresholded score is the number of pairs over the smaller template size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::sift::{Keypoint, RegionKeypoints};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStrategy {
    Nn,
    Ed,
}

impl MatchStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchStrategy::Nn => "nn",
            MatchStrategy::Ed => "ed",
        }
    }
}

impl fmt::Display for MatchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(MatchStrategy::Nn),
            "ed" => Ok(MatchStrategy::Ed),
            other => Err(Error::InvalidParameter(format!("unknown match strategy '{other}'"))),
        }
    }
}

/// Matching and decision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub strategy: MatchStrategy,
    /// NN ratio-test bound, in `(0, 1)`.
    pub ratio: f64,
    /// ED absolute distance bound on unit-norm descriptors.
    pub d_abs: f64,
    /// Acceptance threshold on the normalized score. The default lies
    /// between the values calibrated for NN and ED on a held-out synthetic
    /// subject set (`earsift calibrate`).
    pub psi: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            strategy: MatchStrategy::Nn,
            ratio: 0.8,
            d_abs: 0.35,
            psi: 0.3,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidParameter("match.ratio must lie in (0, 1)".into()));
        }
        if !(self.d_abs > 0.0) || !self.d_abs.is_finite() {
            return Err(Error::InvalidParameter("match.d_abs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.psi) {
            return Err(Error::InvalidParameter("match.psi must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Fused keypoint set of one enrolled image.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    pub keypoints: Vec<Keypoint>,
    /// Slice-region index of each keypoint.
    pub region_provenance: Vec<usize>,
    pub source_model: MixtureModel,
    /// Number of kept regions that were fused.
    pub k_count: usize,
}

impl Template {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Concatenates the keypoints of the kept regions in region order.
pub fn fuse_template(regions: &[RegionKeypoints], subject_id: &str, model: &MixtureModel) -> Result<Template> {
    let mut ordered: Vec<&RegionKeypoints> = regions.iter().collect();
    ordered.sort_by_key(|r| r.region_index);
    let mut keypoints = Vec::new();
    let mut region_provenance = Vec::new();
    for r in &ordered {
        keypoints.extend(r.keypoints.iter().cloned());
        region_provenance.extend(std::iter::repeat_n(r.region_index, r.keypoints.len()));
    }
    if keypoints.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    Ok(Template {
        subject_id: subject_id.to_string(),
        keypoints,
        region_provenance,
        source_model: model.clone(),
        k_count: ordered.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub probe: usize,
    pub reference: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub strategy: MatchStrategy,
    /// Ordered by probe index.
    pub pairs: Vec<MatchPair>,
    pub match_count: usize,
    /// Square root of the summed squared pair distances.
    pub d_final: f64,
    pub normalized_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub accept: bool,
    pub psi: f64,
    /// Name of the thresholded quantity.
    pub score_used: &'static str,
}

/// Row-major `probe x reference` squared descriptor distances.
struct DistanceTable {
    rows: usize,
    cols: usize,
    d2: Vec<f64>,
}

impl DistanceTable {
    fn new(probe: &Template, reference: &Template) -> Self {
        let (rows, cols) = (probe.len(), reference.len());
        let mut d2 = Vec::with_capacity(rows * cols);
        for p in &probe.keypoints {
            for r in &reference.keypoints {
                d2.push(p.descriptor.distance_sq(&r.descriptor));
            }
        }
        Self { rows, cols, d2 }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d2[i * self.cols + j]
    }

    /// Nearest column of row `i`, lowest index on ties.
    fn row_min(&self, i: usize) -> usize {
        (0..self.cols).fold(0, |best, j| if self.get(i, j) < self.get(i, best) { j } else { best })
    }

    fn col_min(&self, j: usize) -> usize {
        (0..self.rows).fold(0, |best, i| if self.get(i, j) < self.get(best, j) { i } else { best })
    }
}

fn check_non_empty(probe: &Template, reference: &Template) -> Result<()> {
    if probe.is_empty() || reference.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    Ok(())
}

fn finish(strategy: MatchStrategy, mut pairs: Vec<MatchPair>, probe: &Template, reference: &Template) -> MatchResult {
    pairs.sort_by_key(|p| p.probe);
    let match_count = pairs.len();
    let d_final = pairs.iter().map(|p| p.distance * p.distance).sum::<f64>().sqrt();
    let normalized_score = match_count as f64 / probe.len().min(reference.len()) as f64;
    MatchResult {
        strategy,
        pairs,
        match_count,
        d_final,
        normalized_score,
    }
}

/// Ratio-test matching with greedy one-to-one resolution.
pub fn match_nn(probe: &Template, reference: &Template, ratio: f64) -> Result<MatchResult> {
    check_non_empty(probe, reference)?;
    let table = DistanceTable::new(probe, reference);
    let ratio_sq = ratio * ratio;

    let mut candidates = Vec::new();
    for i in 0..table.rows {
        let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
        let mut best_j = 0;
        for j in 0..table.cols {
            let d = table.get(i, j);
            if d < best {
                second = best;
                best = d;
                best_j = j;
            } else if d < second {
                second = d;
            }
        }
        if table.cols == 1 || best <= ratio_sq * second {
            candidates.push((best, i, best_j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used_probe = vec![false; table.rows];
    let mut used_ref = vec![false; table.cols];
    let mut pairs = Vec::new();
    for (d2, i, j) in candidates {
        if used_probe[i] || used_ref[j] {
            continue;
        }
        used_probe[i] = true;
        used_ref[j] = true;
        pairs.push(MatchPair {
            probe: i,
            reference: j,
            distance: d2.sqrt(),
        });
    }
    Ok(finish(MatchStrategy::Nn, pairs, probe, reference))
}

/// Mutual nearest neighbours within `d_abs`.
pub fn match_ed(probe: &Template, reference: &Template, d_abs: f64) -> Result<MatchResult> {
    check_non_empty(probe, reference)?;
    let table = DistanceTable::new(probe, reference);
    let col_best: Vec<usize> = (0..table.cols).map(|j| table.col_min(j)).collect();
    let limit = d_abs * d_abs;
    let pairs = (0..table.rows)
        .filter_map(|i| {
            let j = table.row_min(i);
            let d2 = table.get(i, j);
            (col_best[j] == i && d2 <= limit).then(|| MatchPair {
                probe: i,
                reference: j,
                distance: d2.sqrt(),
            })
        })
        .collect();
    Ok(finish(MatchStrategy::Ed, pairs, probe, reference))
}

pub fn match_templates(probe: &Template, reference: &Template, params: &MatchParams) -> Result<MatchResult> {
    match params.strategy {
        MatchStrategy::Nn => match_nn(probe, reference, params.ratio),
        MatchStrategy::Ed => match_ed(probe, reference, params.d_abs),
    }
}

/// Accepts iff `normalized_score >= psi`.
pub fn decide(result: &MatchResult, psi: f64) -> Decision {
    Decision {
        accept: result.normalized_score >= psi,
        psi,
        score_used: "normalized_score",
    }
}
