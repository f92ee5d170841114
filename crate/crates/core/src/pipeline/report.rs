//! Table rendering of metric reports.

use serde::{Deserialize, Serialize};

use crate::evaluation::{ConfidenceInterval, Metric, MetricReport};

use super::config::ReportFormat;

/// Everything `report.json` holds: one metric report per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub backend_kind: String,
    pub modality: String,
    pub reports: Vec<MetricReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// `point_{lower–upper}` with an en dash.
pub fn format_cell(ci: &ConfidenceInterval, decimals: usize) -> String {
    format!(
        "{:.d$}_{{{:.d$}\u{2013}{:.d$}}}",
        ci.point,
        ci.lower,
        ci.upper,
        d = decimals
    )
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::from("| Dataset | Model |");
    for m in Metric::ALL {
        out.push_str(&format!(" {} |", m.heading()));
    }
    out.push_str("\n|---|---|");
    for _ in Metric::ALL {
        out.push_str("---|");
    }
    out.push('\n');
    for r in &report.reports {
        out.push_str(&format!("| {} | {} |", r.dataset_id, report.model));
        for m in Metric::ALL {
            out.push_str(&format!(" {} |", format_cell(r.get(m), m.decimals())));
        }
        out.push('\n');
    }
    let warnings: Vec<String> = report
        .warnings
        .iter()
        .cloned()
        .chain(
            report
                .reports
                .iter()
                .flat_map(|r| r.warnings.iter().map(move |w| format!("{}: {w}", r.dataset_id))),
        )
        .collect();
    if !warnings.is_empty() {
        out.push_str("\nWarnings:\n");
        for w in warnings {
            out.push_str(&format!("- {w}\n"));
        }
    }
    out
}

pub fn render_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset".to_string(), "model".into(), "n_pos".into(), "n_neg".into()];
    for m in Metric::ALL {
        header.push(m.id().into());
        header.push(format!("{}_lower", m.id()));
        header.push(format!("{}_upper", m.id()));
    }
    w.write_record(&header).expect("write to memory");
    for r in &report.reports {
        let mut row = vec![
            r.dataset_id.clone(),
            report.model.clone(),
            r.n_pos.to_string(),
            r.n_neg.to_string(),
        ];
        for m in Metric::ALL {
            let ci = r.get(m);
            let d = m.decimals();
            row.extend([fixed(ci.point, d), fixed(ci.lower, d), fixed(ci.upper, d)]);
        }
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
}

pub fn render_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => render_json(report),
    }
}
