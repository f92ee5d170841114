//! Subject-level metrics with stratified BCa bootstrap intervals.

mod bootstrap;
mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::SubjectDecision;

pub use bootstrap::{
    acceleration, bca_from_parts, bca_interval, jackknife, nearest_rank, ConfidenceInterval, StratifiedResampler,
    DEFAULT_LEVEL, DEFAULT_REPLICATES,
};
pub use metrics::{auroc, balanced_accuracy, brier, sensitivity_specificity, Outcome};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("both classes are needed, got {n_pos} positive and {n_neg} negative subjects")]
    SingleClassInput { n_pos: usize, n_neg: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("invalid evaluation settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BalancedAccuracy,
    Auroc,
    Sensitivity,
    Specificity,
    Brier,
}

impl Metric {
    /// Report column order.
    pub const ALL: [Metric; 5] = [
        Metric::BalancedAccuracy,
        Metric::Auroc,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Brier,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::Auroc => "auroc",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Brier => "brier",
        }
    }

    pub fn heading(self) -> &'static str {
        match self {
            Metric::BalancedAccuracy => "B. Accuracy (%)",
            Metric::Auroc => "AUROC",
            Metric::Sensitivity => "Sensitivity (%)",
            Metric::Specificity => "Specificity (%)",
            Metric::Brier => "Brier Score",
        }
    }

    /// Decimal places when rendered.
    pub fn decimals(self) -> usize {
        match self {
            Metric::Auroc | Metric::Brier => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            replicates: DEFAULT_REPLICATES,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.replicates == 0 {
            return Err(EvalError::InvalidSettings("replicates must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(EvalError::InvalidSettings("level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset_id: String,
    pub model: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub quantile_method: String,
    pub balanced_accuracy: ConfidenceInterval,
    pub auroc: ConfidenceInterval,
    pub sensitivity: ConfidenceInterval,
    pub specificity: ConfidenceInterval,
    pub brier: ConfidenceInterval,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> &ConfidenceInterval {
        match m {
            Metric::BalancedAccuracy => &self.balanced_accuracy,
            Metric::Auroc => &self.auroc,
            Metric::Sensitivity => &self.sensitivity,
            Metric::Specificity => &self.specificity,
            Metric::Brier => &self.brier,
        }
    }
}

pub fn outcomes_from_decisions(decisions: &[SubjectDecision]) -> Result<Vec<Outcome>, EvalError> {
    decisions
        .iter()
        .map(|d| {
            if !(0.0..=1.0).contains(&d.p_pos) {
                return Err(EvalError::ProbabilityOutOfRange(d.p_pos));
            }
            Ok(Outcome {
                truth: d.truth,
                pred: d.label,
                p_pos: d.p_pos,
            })
        })
        .collect()
}

/// All five metrics in [`Metric::ALL`] order.
pub fn metric_values(outcomes: &[Outcome]) -> Result<[f64; 5], EvalError> {
    let (sens, spec) = sensitivity_specificity(outcomes)?;
    Ok([
        balanced_accuracy(sens, spec),
        auroc(outcomes)?,
        sens,
        spec,
        brier(outcomes),
    ])
}

/// Point estimates and BCa intervals for every metric, all computed from
/// one shared set of replicate index draws.
pub fn evaluate_all(decisions: &[SubjectDecision], settings: &EvalSettings) -> Result<MetricReport, EvalError> {
    settings.validate()?;
    let outcomes = outcomes_from_decisions(decisions)?;
    let truths: Vec<_> = outcomes.iter().map(|o| o.truth).collect();
    let resampler = StratifiedResampler::new(&truths, settings.seed)?;
    let n_pos = truths.iter().filter(|t| t.is_positive()).count();
    let n_neg = truths.len() - n_pos;

    let mut warnings = Vec::new();
    if n_pos < 2 || n_neg < 2 {
        warnings.push(format!(
            "only {n_pos} positive and {n_neg} negative subjects; jackknife acceleration is unstable"
        ));
    }

    let point = metric_values(&outcomes)?;
    let replicate_values: Vec<[f64; 5]> = (0..settings.replicates)
        .into_par_iter()
        .map(|b| {
            let sample: Vec<Outcome> = resampler.draw(b).into_iter().map(|i| outcomes[i]).collect();
            metric_values(&sample)
        })
        .collect::<Result<_, _>>()?;
    let (jack_values, skipped) = {
        let per_subject: Vec<Option<[f64; 5]>> = (0..outcomes.len())
            .into_par_iter()
            .map(|i| {
                let mut rest = outcomes.clone();
                rest.remove(i);
                metric_values(&rest).ok()
            })
            .collect();
        let skipped = per_subject.iter().filter(|v| v.is_none()).count();
        (per_subject.into_iter().flatten().collect::<Vec<_>>(), skipped)
    };
    if skipped > 0 {
        warnings.push(format!(
            "jackknife skipped {skipped} leave-one-out sets with an empty class"
        ));
    }

    let interval = |k: usize| {
        let reps: Vec<f64> = replicate_values.iter().map(|v| v[k]).collect();
        let jack: Vec<f64> = jack_values.iter().map(|v| v[k]).collect();
        bca_from_parts(point[k], &reps, &jack, settings.level, settings.seed)
    };
    let report = MetricReport {
        dataset_id: decisions.first().map(|d| d.dataset_id.clone()).unwrap_or_default(),
        model: String::new(),
        n_pos,
        n_neg,
        replicates: settings.replicates,
        level: settings.level,
        seed: settings.seed,
        quantile_method: "nearest-rank".into(),
        balanced_accuracy: interval(0),
        auroc: interval(1),
        sensitivity: interval(2),
        specificity: interval(3),
        brier: interval(4),
        warnings,
    };
    for m in Metric::ALL {
        if report.get(m).excludes_point {
            log::warn!("{} interval excludes its point estimate", m.id());
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
