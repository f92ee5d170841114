//! Subject-level binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

use super::EvalError;

/// One subject's truth, predicted label and positive-class probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub truth: Label,
    pub pred: Label,
    pub p_pos: f64,
}

fn class_sizes(outcomes: &[Outcome]) -> (usize, usize) {
    let pos = outcomes.iter().filter(|o| o.truth.is_positive()).count();
    (pos, outcomes.len() - pos)
}

/// Sensitivity and specificity, in percent.
pub fn sensitivity_specificity(outcomes: &[Outcome]) -> Result<(f64, f64), EvalError> {
    let (n_pos, n_neg) = class_sizes(outcomes);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassInput { n_pos, n_neg });
    }
    let tp = outcomes
        .iter()
        .filter(|o| o.truth.is_positive() && o.pred.is_positive())
        .count();
    let tn = outcomes
        .iter()
        .filter(|o| !o.truth.is_positive() && !o.pred.is_positive())
        .count();
    Ok((100.0 * tp as f64 / n_pos as f64, 100.0 * tn as f64 / n_neg as f64))
}

pub fn balanced_accuracy(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity + specificity) / 2.0
}

/// Mann-Whitney AUROC of `p_pos` from the midrank sum of the positives.
pub fn auroc(outcomes: &[Outcome]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = class_sizes(outcomes);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassInput { n_pos, n_neg });
    }
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].p_pos.total_cmp(&outcomes[b].p_pos));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && outcomes[order[j + 1]].p_pos == outcomes[order[i]].p_pos {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| outcomes[k].truth.is_positive()).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean squared difference between `p_pos` and the 0/1 truth.
pub fn brier(outcomes: &[Outcome]) -> f64 {
    outcomes
        .iter()
        .map(|o| (o.p_pos - o.truth.digit() as f64).powi(2))
        .sum::<f64>()
        / outcomes.len() as f64
}
