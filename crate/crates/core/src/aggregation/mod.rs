//! Segment predictions to one decision per subject.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::ModelPrediction;
use crate::corpus::{Label, RecordingRef};
use crate::features::SegmentRef;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("no predictions to aggregate")]
    EmptyPredictionList,
    #[error("{subject}: all {n_segments} segment predictions are invalid")]
    AllSegmentsInvalid { subject: RecordingRef, n_segments: usize },
    #[error("{0}: no ground-truth label")]
    MissingTruth(RecordingRef),
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub segment_ref: SegmentRef,
    pub prediction: Option<ModelPrediction>,
    /// Why `prediction` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of `decisions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDecision {
    pub dataset_id: String,
    pub subject_id: String,
    pub truth: Label,
    pub label: Label,
    /// Mean probability of the segments carrying `label`.
    pub probability: f64,
    pub p_pos: f64,
    pub n_segments: usize,
    pub n_invalid: usize,
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    // summing in sorted order keeps the result independent of input order
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Majority vote, ties to the label with the higher mean probability, then
/// to label 1. The probability is the mean over segments carrying the
/// final label.
pub fn aggregate_subject(preds: &[ModelPrediction]) -> Result<(Label, f64), AggregationError> {
    if preds.is_empty() {
        return Err(AggregationError::EmptyPredictionList);
    }
    let (pos, neg): (Vec<&ModelPrediction>, Vec<&ModelPrediction>) =
        preds.iter().partition(|p| p.label.is_positive());
    let mean_of = |v: &[&ModelPrediction]| sorted_mean(v.iter().map(|p| p.probability).collect());
    let label = match pos.len().cmp(&neg.len()) {
        std::cmp::Ordering::Greater => Label::Parkinson,
        std::cmp::Ordering::Less => Label::Control,
        std::cmp::Ordering::Equal => {
            if mean_of(&neg) > mean_of(&pos) {
                Label::Control
            } else {
                Label::Parkinson
            }
        }
    };
    let chosen = if label.is_positive() { &pos } else { &neg };
    Ok((label, mean_of(chosen)))
}

pub fn positive_class_probability(label: Label, probability: f64) -> f64 {
    if label.is_positive() {
        probability
    } else {
        1.0 - probability
    }
}

/// Aggregate one subject's segment outcomes, skipping invalid ones.
pub fn decide_subject(
    subject: &RecordingRef,
    truth: Label,
    outcomes: &[Option<ModelPrediction>],
) -> Result<SubjectDecision, AggregationError> {
    let valid: Vec<ModelPrediction> = outcomes.iter().flatten().cloned().collect();
    let n_invalid = outcomes.len() - valid.len();
    if valid.is_empty() {
        return Err(if outcomes.is_empty() {
            AggregationError::EmptyPredictionList
        } else {
            AggregationError::AllSegmentsInvalid {
                subject: subject.clone(),
                n_segments: outcomes.len(),
            }
        });
    }
    if n_invalid > 0 {
        log::warn!("{subject}: {n_invalid} of {} segment predictions invalid and excluded", outcomes.len());
    }
    let (label, probability) = aggregate_subject(&valid)?;
    Ok(SubjectDecision {
        dataset_id: subject.dataset_id.clone(),
        subject_id: subject.subject_id.clone(),
        truth,
        label,
        probability,
        p_pos: positive_class_probability(label, probability),
        n_segments: outcomes.len(),
        n_invalid,
    })
}

/// Group segment predictions by subject and aggregate each group.
///
/// Decisions come back sorted by (dataset, subject); subjects that cannot be
/// decided are returned as errors alongside.
pub fn aggregate_all(
    records: &[SegmentPrediction],
    truths: &HashMap<RecordingRef, Label>,
) -> (Vec<SubjectDecision>, Vec<AggregationError>) {
    let mut groups: BTreeMap<RecordingRef, Vec<Option<ModelPrediction>>> = BTreeMap::new();
    for r in records {
        let key = RecordingRef {
            dataset_id: r.segment_ref.dataset_id.clone(),
            subject_id: r.segment_ref.subject_id.clone(),
        };
        groups.entry(key).or_default().push(r.prediction.clone());
    }
    let results: Vec<Result<SubjectDecision, AggregationError>> = groups
        .into_par_iter()
        .map(|(subject, outcomes)| {
            let truth = *truths
                .get(&subject)
                .ok_or_else(|| AggregationError::MissingTruth(subject.clone()))?;
            decide_subject(&subject, truth, &outcomes)
        })
        .collect();
    let mut decisions = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(d) => decisions.push(d),
            Err(e) => errors.push(e),
        }
    }
    (decisions, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::PredictionSource;
    use proptest::prelude::*;

    fn pred(label: u8, probability: f64) -> ModelPrediction {
        ModelPrediction {
            label: Label::from_digit(label).unwrap(),
            probability,
            raw_output: label.to_string(),
            logprob_0: None,
            logprob_1: None,
            source: PredictionSource::Oracle,
            placeholder_probability: false,
        }
    }

    fn preds(pairs: &[(u8, f64)]) -> Vec<ModelPrediction> {
        pairs.iter().map(|&(l, p)| pred(l, p)).collect()
    }

    #[test]
    fn worked_examples() {
        let (l, p) = aggregate_subject(&preds(&[(1, 0.9), (1, 0.8), (0, 0.99)])).unwrap();
        assert_eq!(l, Label::Parkinson);
        assert!((p - 0.85).abs() < 1e-12);
        assert_eq!(aggregate_subject(&preds(&[(0, 0.6), (1, 0.9)])).unwrap(), (Label::Parkinson, 0.9));
        assert_eq!(aggregate_subject(&preds(&[(0, 0.7)])).unwrap(), (Label::Control, 0.7));
        assert_eq!(aggregate_subject(&[]), Err(AggregationError::EmptyPredictionList));
    }

    #[test]
    fn vote_tie_to_higher_mean_then_to_one() {
        assert_eq!(aggregate_subject(&preds(&[(0, 0.95), (1, 0.6)])).unwrap(), (Label::Control, 0.95));
        assert_eq!(aggregate_subject(&preds(&[(0, 0.8), (1, 0.8)])).unwrap(), (Label::Parkinson, 0.8));
    }

    #[test]
    fn p_pos() {
        assert_eq!(positive_class_probability(Label::Parkinson, 0.85), 0.85);
        assert!((positive_class_probability(Label::Control, 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(positive_class_probability(Label::Control, 0.5), 0.5);
    }

    #[test]
    fn invalid_segments_excluded() {
        let s = RecordingRef {
            dataset_id: "D".into(),
            subject_id: "S".into(),
        };
        let d = decide_subject(&s, Label::Control, &[None, Some(pred(0, 0.7)), None]).unwrap();
        assert_eq!((d.label, d.n_segments, d.n_invalid), (Label::Control, 3, 2));
        assert!((d.p_pos - 0.3).abs() < 1e-15);
        assert!(matches!(
            decide_subject(&s, Label::Control, &[None, None]),
            Err(AggregationError::AllSegmentsInvalid { n_segments: 2, .. })
        ));
    }

    #[test]
    fn grouping_and_missing_truth() {
        let rec = |subject: &str, i: usize, p: Option<ModelPrediction>| SegmentPrediction {
            segment_ref: SegmentRef {
                dataset_id: "D".into(),
                subject_id: subject.into(),
                segment_index: i,
            },
            prediction: p,
            error: None,
        };
        let records = vec![
            rec("b", 0, Some(pred(1, 0.9))),
            rec("a", 0, Some(pred(0, 0.8))),
            rec("b", 1, Some(pred(1, 0.7))),
            rec("c", 0, Some(pred(1, 0.7))),
        ];
        let key = |s: &str| RecordingRef {
            dataset_id: "D".into(),
            subject_id: s.into(),
        };
        let truths = HashMap::from([(key("a"), Label::Control), (key("b"), Label::Parkinson)]);
        let (decisions, errors) = aggregate_all(&records, &truths);
        assert_eq!(decisions.len(), 2);
        assert_eq!(decisions[0].subject_id, "a");
        assert_eq!(decisions[1].n_segments, 2);
        assert!((decisions[1].probability - 0.8).abs() < 1e-12);
        assert_eq!(errors, vec![AggregationError::MissingTruth(key("c"))]);
    }

    fn arb_preds() -> impl Strategy<Value = Vec<(u8, f64)>> {
        prop::collection::vec((0u8..2, 0.0f64..=1.0), 1..12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn permutation_invariant(
            (pairs, shuffled) in arb_preds().prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
        ) {
            prop_assert_eq!(aggregate_subject(&preds(&shuffled)).unwrap(), aggregate_subject(&preds(&pairs)).unwrap());
        }

        #[test]
        fn probability_is_mean_over_final_label(pairs in arb_preds()) {
            let (label, p) = aggregate_subject(&preds(&pairs)).unwrap();
            let chosen: Vec<f64> = pairs.iter().filter(|(l, _)| *l == label.digit()).map(|&(_, p)| p).collect();
            prop_assert!(!chosen.is_empty());
            let mean = chosen.iter().sum::<f64>() / chosen.len() as f64;
            prop_assert!((p - mean).abs() < 1e-12);
        }

        #[test]
        fn unanimous_gives_plain_mean(label in 0u8..2, probs in prop::collection::vec(0.0f64..=1.0, 1..10)) {
            let pairs: Vec<(u8, f64)> = probs.iter().map(|&p| (label, p)).collect();
            let (l, p) = aggregate_subject(&preds(&pairs)).unwrap();
            prop_assert_eq!(l.digit(), label);
            prop_assert!((p - probs.iter().sum::<f64>() / probs.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn vote_tie_follows_mean(zeros in prop::collection::vec(0.0f64..=1.0, 1..6), ones_seed in prop::collection::vec(0.0f64..=1.0, 6)) {
            let ones = &ones_seed[..zeros.len()];
            let mut pairs: Vec<(u8, f64)> = zeros.iter().map(|&p| (0, p)).collect();
            pairs.extend(ones.iter().map(|&p| (1, p)));
            let (l, _) = aggregate_subject(&preds(&pairs)).unwrap();
            let m0 = zeros.iter().sum::<f64>() / zeros.len() as f64;
            let m1 = ones.iter().sum::<f64>() / ones.len() as f64;
            if (m0 - m1).abs() > 1e-9 {
                prop_assert_eq!(l == Label::Control, m0 > m1);
            }
        }
    }
}
