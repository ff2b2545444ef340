//! ROC curves and the balanced operating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenuineScore {
    pub subject_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpostorScore {
    pub probe_subject: String,
    pub ref_subject: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<GenuineScore>,
    pub impostor: Vec<ImpostorScore>,
}

impl ScoreSet {
    /// Builds a set from bare score lists with placeholder ids.
    pub fn from_scores(genuine: &[f64], impostor: &[f64]) -> Self {
        Self {
            genuine: genuine
                .iter()
                .map(|&score| GenuineScore { subject_id: String::new(), score })
                .collect(),
            impostor: impostor
                .iter()
                .map(|&score| ImpostorScore {
                    probe_subject: String::new(),
                    ref_subject: String::new(),
                    score,
                })
                .collect(),
        }
    }

    pub fn genuine_scores(&self) -> Vec<f64> {
        self.genuine.iter().map(|g| g.score).collect()
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.impostor.iter().map(|i| i.score).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Fraction of genuine scores `>= threshold`.
    pub tp: f64,
    /// Fraction of impostor scores `>= threshold`.
    pub fp: f64,
}

/// Points in descending threshold order, from `+inf` to `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Number of entries of a descending-sorted slice that are `>= t`.
fn count_at_least(sorted_desc: &[f64], t: f64) -> usize {
    sorted_desc.partition_point(|&s| s >= t)
}

pub fn compute_roc(scores: &ScoreSet) -> Result<RocCurve> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut g = scores.genuine_scores();
    let mut i = scores.impostor_scores();
    if g.iter().chain(&i).any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("score is NaN".into()));
    }
    g.sort_by(|a, b| b.total_cmp(a));
    i.sort_by(|a, b| b.total_cmp(a));

    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let point = |t: f64| RocPoint {
        threshold: t,
        tp: count_at_least(&g, t) as f64 / ng,
        fp: count_at_least(&i, t) as f64 / ni,
    };
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(point(f64::INFINITY));
    points.extend(thresholds.into_iter().map(point));
    points.push(point(f64::NEG_INFINITY));
    Ok(RocCurve { points })
}

/// Rates and percentages at the chosen threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    /// `100 (1 - (FNR + FPR) / 2)`.
    pub accuracy: f64,
    /// False-positive rate in percent.
    pub false_positive: f64,
    /// Reported under the "true negative" heading; holds the false-negative
    /// rate `1 - TP` in percent.
    pub true_negative: f64,
}

/// Balanced accuracy in percent from FP and FN rates in percent.
pub fn accuracy_from_rates(false_positive_pct: f64, false_negative_pct: f64) -> f64 {
    100.0 - (false_positive_pct + false_negative_pct) / 2.0
}

/// The threshold minimizing `max(1 - TP, FP)`, the larger threshold on ties.
pub fn operating_point(curve: &RocCurve) -> OperatingPoint {
    let best = curve
        .points
        .iter()
        .fold(None::<&RocPoint>, |best, p| {
            let cost = (1.0 - p.tp).max(p.fp);
            match best {
                Some(b) if (1.0 - b.tp).max(b.fp) <= cost => Some(b),
                _ => Some(p),
            }
        })
        .expect("a curve always has its two sentinel points");
    let false_positive = 100.0 * best.fp;
    let true_negative = 100.0 * (1.0 - best.tp);
    OperatingPoint {
        threshold: best.threshold,
        tp_rate: best.tp,
        fp_rate: best.fp,
        accuracy: accuracy_from_rates(false_positive, true_negative),
        false_positive,
        true_negative,
    }
}

/// `accuracy, FP, TN` with two decimals, as in a verification results table.
pub fn format_table_row(op: &OperatingPoint) -> String {
    format!("{:.2}, {:.2}, {:.2}", op.accuracy, op.false_positive, op.true_negative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn at(curve: &RocCurve, t: f64) -> RocPoint {
        *curve.points.iter().find(|p| p.threshold == t).unwrap()
    }

    #[test]
    fn separated_sets() {
        let s = ScoreSet::from_scores(&[0.9, 0.8], &[0.2, 0.1]);
        let c = compute_roc(&s).unwrap();
        // 0.5 lies between 0.8 and 0.2; the step value at 0.8 holds on that interval
        let p = at(&c, 0.8);
        assert_eq!((p.tp, p.fp), (1.0, 0.0));
        let op = operating_point(&c);
        assert_eq!((op.accuracy, op.false_positive, op.true_negative), (100.0, 0.0, 0.0));
        assert_eq!(op.threshold, 0.8);
    }

    #[test]
    fn coincident_scores() {
        let c = compute_roc(&ScoreSet::from_scores(&[0.5], &[0.5])).unwrap();
        let p = at(&c, 0.5);
        assert_eq!((p.tp, p.fp), (1.0, 1.0));
    }

    #[test]
    fn sentinels_bound_the_curve() {
        let c = compute_roc(&ScoreSet::from_scores(&[0.3, 0.7], &[0.1])).unwrap();
        let (first, last) = (c.points[0], *c.points.last().unwrap());
        assert_eq!((first.threshold, first.tp, first.fp), (f64::INFINITY, 0.0, 0.0));
        assert_eq!((last.threshold, last.tp, last.fp), (f64::NEG_INFINITY, 1.0, 1.0));
    }

    #[test]
    fn empty_sets_are_errors() {
        assert!(matches!(compute_roc(&ScoreSet::from_scores(&[], &[0.1])), Err(Error::EmptyScores)));
        assert!(matches!(compute_roc(&ScoreSet::from_scores(&[0.1], &[])), Err(Error::EmptyScores)));
    }

    #[test]
    fn identical_distributions_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let op = operating_point(&compute_roc(&ScoreSet::from_scores(&scores, &scores)).unwrap());
        assert!((op.accuracy - 50.0).abs() <= 100.0 / 40.0, "{}", op.accuracy);
    }

    #[test]
    fn table_rows_reproduce_their_accuracy() {
        for (acc, fp, fnr) in [(91.09, 9.56, 8.26), (93.01, 4.38, 9.60), (94.31, 4.22, 7.16), (96.93, 2.14, 4.00)] {
            assert!((accuracy_from_rates(fp, fnr) - acc).abs() <= 0.01, "{acc}");
        }
        let op = OperatingPoint {
            threshold: 0.0,
            tp_rate: 0.96,
            fp_rate: 0.0214,
            accuracy: accuracy_from_rates(2.14, 4.00),
            false_positive: 2.14,
            true_negative: 4.00,
        };
        assert_eq!(format_table_row(&op), "96.93, 2.14, 4.00");
    }

    #[test]
    fn ties_prefer_the_larger_threshold() {
        // thresholds 0.6 and 0.4 both give max(1 - TP, FP) = 0.5
        let c = compute_roc(&ScoreSet::from_scores(&[0.6, 0.2], &[0.4, 0.1])).unwrap();
        assert_eq!(operating_point(&c).threshold, 0.6);
    }

    fn brute_force(g: &[f64], i: &[f64], t: f64) -> (f64, f64) {
        let tp = g.iter().filter(|&&s| s >= t).count() as f64 / g.len() as f64;
        let fp = i.iter().filter(|&&s| s >= t).count() as f64 / i.len() as f64;
        (tp, fp)
    }

    #[test]
    fn matches_counting_oracle_on_seeded_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // coarse grid so that ties occur
            let g: Vec<f64> = (0..50).map(|_| (rng.random_range(0.3f64..1.0) * 20.0).round() / 20.0).collect();
            let i: Vec<f64> = (0..50).map(|_| (rng.random_range(0.0f64..0.7) * 20.0).round() / 20.0).collect();
            let c = compute_roc(&ScoreSet::from_scores(&g, &i)).unwrap();
            let mut distinct: Vec<f64> = g.iter().chain(&i).copied().collect();
            distinct.sort_by(|a, b| b.total_cmp(a));
            distinct.dedup();
            assert_eq!(c.points.len(), distinct.len() + 2);
            for p in &c.points {
                assert_eq!((p.tp, p.fp), brute_force(&g, &i, p.threshold));
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_as_threshold_decreases(
            g in prop::collection::vec(0.0f64..1.0, 1..40),
            i in prop::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let c = compute_roc(&ScoreSet::from_scores(&g, &i)).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[1].tp >= w[0].tp && w[1].fp >= w[0].fp);
            }
            let op = operating_point(&c);
            prop_assert!((0.0..=100.0).contains(&op.accuracy));
        }
    }
}
