//! Verdicts from the gap between predicted and displayed follower counts,
//! plus the evaluation metrics built on them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Label;
use crate::neighborhood::{Prediction, PredictionRecord};

pub const DEFAULT_THRESHOLD: f64 = 0.10;
/// Floor for the tolerance-score denominator.
pub const TOLERANCE_EPSILON: f64 = 1e-9;
/// Default band sweep for accuracy evaluation.
pub const DEFAULT_SWEEP: [f64; 7] = [10.0, 50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Customer,
    Organic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionReport {
    pub user_id: String,
    pub displayed: u64,
    pub predicted: f64,
    pub relative_deviation: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub neighbor_count: usize,
}

/// `|displayed - predicted| / max(displayed, 1)`.
pub fn relative_deviation(displayed: u64, predicted: f64) -> f64 {
    (displayed as f64 - predicted).abs() / (displayed.max(1) as f64)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "threshold must be positive and finite, got {threshold}"
        )))
    }
}

fn report(user_id: &str, displayed: u64, predicted: f64, neighbor_count: usize, threshold: f64) -> DetectionReport {
    let relative_deviation = relative_deviation(displayed, predicted);
    DetectionReport {
        user_id: user_id.to_owned(),
        displayed,
        predicted,
        relative_deviation,
        threshold,
        verdict: if relative_deviation > threshold {
            Verdict::Customer
        } else {
            Verdict::Organic
        },
        neighbor_count,
    }
}

pub fn detect(prediction: &Prediction, displayed: u64, threshold: f64) -> Result<DetectionReport> {
    check_threshold(threshold)?;
    Ok(report(
        &prediction.user_id,
        displayed,
        prediction.predicted_followers,
        prediction.neighbor_count,
        threshold,
    ))
}

/// Same as [`detect`] for a stored prediction line.
pub fn detect_record(record: &PredictionRecord, threshold: f64) -> Result<DetectionReport> {
    check_threshold(threshold)?;
    Ok(report(
        &record.user_id,
        record.displayed,
        record.predicted,
        record.neighbor_count,
        threshold,
    ))
}

/// Follower-count scale buckets used when reporting tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    G1,
    G2,
    G3,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::G1, Group::G2, Group::G3];

    /// G1 ≤ 1000 < G2 < 10000 ≤ G3.
    pub fn of(followers: u64) -> Group {
        match followers {
            0..=1000 => Group::G1,
            1001..=9999 => Group::G2,
            _ => Group::G3,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::G1 => "G1",
            Group::G2 => "G2",
            Group::G3 => "G3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceScore {
    pub group: Group,
    pub score: f64,
}

/// How far an estimate was pushed by a manipulation, on [0, 1].
///
/// `|(|after - before|) - expected_change| / max(injected, ε)`, clamped.
/// 0 means the estimate moved exactly as expected (for an estimator that
/// should ignore purchased followers, not at all); 1 means it moved by at
/// least the full injected amount beyond that.
///
/// The movement is measured against the injected amount rather than
/// against itself: dividing by the observed change would make every
/// nonzero movement, however small, score 1.
pub fn tolerance_score(before: f64, after: f64, expected_change: f64, injected: f64) -> f64 {
    let moved = (after - before).abs();
    let score = (moved - expected_change).abs() / injected.abs().max(TOLERANCE_EPSILON);
    if score.is_nan() {
        return 1.0;
    }
    score.clamp(0.0, 1.0)
}

/// Mean score per group; groups without samples are absent.
pub fn mean_tolerance_by_group(scores: &[ToleranceScore]) -> BTreeMap<Group, f64> {
    let mut sums: BTreeMap<Group, (f64, usize)> = BTreeMap::new();
    for s in scores {
        let e = sums.entry(s.group).or_default();
        e.0 += s.score;
        e.1 += 1;
    }
    sums.into_iter().map(|(g, (sum, n))| (g, sum / n as f64)).collect()
}

/// Fraction of `(predicted, displayed)` pairs further apart than `band`.
pub fn evaluate_accuracy(pairs: &[(f64, f64)], band: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no predictions to evaluate".into()));
    }
    if band.is_nan() || band <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance band must be positive, got {band}")));
    }
    let misses = pairs.iter().filter(|(p, d)| (p - d).abs() > band).count();
    Ok(misses as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandError {
    pub band: f64,
    pub error_rate: f64,
}

pub fn accuracy_sweep(pairs: &[(f64, f64)], bands: &[f64]) -> Result<Vec<BandError>> {
    bands
        .iter()
        .map(|&band| Ok(BandError { band, error_rate: evaluate_accuracy(pairs, band)? }))
        .collect()
}

/// Confusion counts with customer as the positive class. A metric whose
/// denominator is zero is `None` rather than a made-up number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

pub fn precision_recall(reports: &[DetectionReport], labels: &BTreeMap<String, Label>) -> Result<PrecisionRecall> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for r in reports {
        let actual = match labels.get(&r.user_id) {
            Some(Label::Customer) => true,
            Some(Label::Random) => false,
            Some(Label::Unlabeled) | None => return Err(Error::MissingLabel(r.user_id.clone())),
        };
        match (r.verdict == Verdict::Customer, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(PrecisionRecall {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSummary {
    pub threshold: f64,
    pub total: usize,
    pub flagged: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<PrecisionRecall>,
}

impl DetectionSummary {
    pub fn new(reports: &[DetectionReport], threshold: f64, evaluation: Option<PrecisionRecall>) -> Self {
        DetectionSummary {
            threshold,
            total: reports.len(),
            flagged: reports.iter().filter(|r| r.verdict == Verdict::Customer).count(),
            evaluation,
        }
    }
}

/// A line of a detection output file: per-user reports followed by one
/// summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DetectionLine {
    Report(DetectionReport),
    Summary(DetectionSummary),
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rec(displayed: u64, predicted: f64) -> PredictionRecord {
        PredictionRecord {
            user_id: "u".into(),
            predicted,
            displayed,
            neighbor_count: 3,
        }
    }

    #[test]
    fn verdict_examples() {
        let r = detect_record(&rec(1000, 1000.0), DEFAULT_THRESHOLD).unwrap();
        assert_eq!((r.relative_deviation, r.verdict), (0.0, Verdict::Organic));

        let r = detect_record(&rec(1000, 880.0), DEFAULT_THRESHOLD).unwrap();
        assert_relative_eq!(r.relative_deviation, 0.12, epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::Customer);

        let r = detect_record(&rec(0, 5.0), DEFAULT_THRESHOLD).unwrap();
        assert_eq!((r.relative_deviation, r.verdict), (5.0, Verdict::Customer));

        // Exactly at the threshold stays organic.
        let r = detect_record(&rec(100, 75.0), 0.25).unwrap();
        assert_eq!(r.verdict, Verdict::Organic);

        assert!(detect_record(&rec(1, 1.0), 0.0).is_err());
        assert!(detect_record(&rec(1, 1.0), f64::NAN).is_err());
    }

    #[test]
    fn group_boundaries() {
        assert_eq!(Group::of(0), Group::G1);
        assert_eq!(Group::of(1000), Group::G1);
        assert_eq!(Group::of(1001), Group::G2);
        assert_eq!(Group::of(9999), Group::G2);
        assert_eq!(Group::of(10000), Group::G3);
    }

    #[test]
    fn tolerance_endpoints() {
        assert_eq!(tolerance_score(500.0, 500.0, 0.0, 100.0), 0.0);
        assert_eq!(tolerance_score(500.0, 600.0, 0.0, 100.0), 1.0);
        assert_eq!(tolerance_score(500.0, 900.0, 0.0, 100.0), 1.0);
        assert_relative_eq!(tolerance_score(500.0, 480.0, 0.0, 100.0), 0.2);
        // Moving exactly as expected is perfect tolerance.
        assert_eq!(tolerance_score(500.0, 600.0, 100.0, 100.0), 0.0);
        assert_eq!(tolerance_score(1.0, 1.0, 0.0, 0.0), 0.0);
        assert_eq!(tolerance_score(1.0, 2.0, 0.0, 0.0), 1.0);

        let m = mean_tolerance_by_group(&[
            ToleranceScore { group: Group::G1, score: 0.2 },
            ToleranceScore { group: Group::G1, score: 0.4 },
            ToleranceScore { group: Group::G3, score: 1.0 },
        ]);
        assert_relative_eq!(m[&Group::G1], 0.3);
        assert!(!m.contains_key(&Group::G2));
    }

    #[test]
    fn accuracy_examples() {
        let exact = [(10.0, 10.0), (5.0, 5.0)];
        assert_eq!(evaluate_accuracy(&exact, 1.0).unwrap(), 0.0);
        let pairs = [(0.0, 0.0), (0.0, 5.0), (0.0, 10.0), (0.0, 200.0), (0.0, 100.0)];
        assert_eq!(evaluate_accuracy(&pairs, 100.0).unwrap(), 0.2);
        assert!(matches!(evaluate_accuracy(&[], 1.0), Err(Error::InsufficientData(_))));
        assert!(evaluate_accuracy(&exact, 0.0).is_err());
        assert_eq!(evaluate_accuracy(&pairs, f64::INFINITY).unwrap(), 0.0);
    }

    fn labeled(verdicts: &[(Verdict, Label)]) -> (Vec<DetectionReport>, BTreeMap<String, Label>) {
        let mut reports = Vec::new();
        let mut labels = BTreeMap::new();
        for (i, (v, l)) in verdicts.iter().enumerate() {
            let mut r = detect_record(&rec(100, 100.0), DEFAULT_THRESHOLD).unwrap();
            r.user_id = format!("u{i}");
            r.verdict = *v;
            labels.insert(r.user_id.clone(), *l);
            reports.push(r);
        }
        (reports, labels)
    }

    #[test]
    fn precision_recall_cases() {
        use Label::*;
        use Verdict::Organic as O;
        let c = Verdict::Customer;
        let (r, l) = labeled(&[(c, Customer), (O, Random), (c, Customer)]);
        let pr = precision_recall(&r, &l).unwrap();
        assert_eq!((pr.precision, pr.recall), (Some(1.0), Some(1.0)));

        let (r, l) = labeled(&[(O, Customer), (O, Random)]);
        let pr = precision_recall(&r, &l).unwrap();
        assert_eq!((pr.precision, pr.recall), (None, Some(0.0)));

        let (r, l) = labeled(&[(c, Random), (O, Random)]);
        let pr = precision_recall(&r, &l).unwrap();
        assert_eq!((pr.precision, pr.recall), (Some(0.0), None));

        let (r, mut l) = labeled(&[(c, Customer), (O, Random)]);
        l.insert("u1".into(), Unlabeled);
        assert!(matches!(precision_recall(&r, &l), Err(Error::MissingLabel(id)) if id == "u1"));
        l.remove("u1");
        assert!(matches!(precision_recall(&r, &l), Err(Error::MissingLabel(_))));
    }

    #[test]
    fn summary_omits_missing_evaluation() {
        let reports = vec![detect_record(&rec(10, 50.0), 0.1).unwrap()];
        let line = DetectionLine::Summary(DetectionSummary::new(&reports, 0.1, None));
        let json = serde_json::to_string(&line).unwrap();
        assert!(!json.contains("evaluation"), "{json}");
        assert_eq!(serde_json::from_str::<DetectionLine>(&json).unwrap(), line);
        let line = DetectionLine::Report(reports[0].clone());
        let json = serde_json::to_string(&line).unwrap();
        assert!(json.starts_with(r#"{"record":"report""#), "{json}");
        assert_eq!(serde_json::from_str::<DetectionLine>(&json).unwrap(), line);
    }

    proptest! {
        #[test]
        fn widening_the_gap_never_clears_a_customer(
            displayed in 0u64..100_000,
            gap in 0.0f64..50_000.0,
            extra in 0.0f64..50_000.0,
            threshold in 0.001f64..2.0,
            above in any::<bool>(),
        ) {
            let sign = if above { 1.0 } else { -1.0 };
            let d = displayed as f64;
            let near = detect_record(&rec(displayed, d + sign * gap), threshold).unwrap();
            let far = detect_record(&rec(displayed, d + sign * (gap + extra)), threshold).unwrap();
            prop_assert!(far.relative_deviation >= near.relative_deviation);
            if near.verdict == Verdict::Customer {
                prop_assert_eq!(far.verdict, Verdict::Customer);
            }
            prop_assert_eq!(near.verdict == Verdict::Customer, near.relative_deviation > threshold);
        }

        #[test]
        fn tolerance_is_clamped(
            before in -1e6f64..1e6, after in -1e6f64..1e6,
            expected in 0.0f64..1e6, injected in 0.0f64..1e6,
        ) {
            let s = tolerance_score(before, after, expected, injected);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(tolerance_score(before, before, 0.0, injected), 0.0);
        }

        #[test]
        fn sweep_is_monotone(
            pairs in prop::collection::vec((0.0f64..20_000.0, 0.0f64..20_000.0), 1..200),
        ) {
            let sweep = accuracy_sweep(&pairs, &DEFAULT_SWEEP).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[1].error_rate <= w[0].error_rate);
            }
            prop_assert!(sweep.iter().all(|b| (0.0..=1.0).contains(&b.error_rate)));
            prop_assert_eq!(evaluate_accuracy(&pairs, f64::INFINITY).unwrap(), 0.0);
        }
    }
}
