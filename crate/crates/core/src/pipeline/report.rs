use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, PipelineError};
use crate::learn::{FusionStrategy, Metrics, Split};

/// Subject-level evaluation written next to a prediction report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub c: f64,
    pub fusion: FusionStrategy,
    /// Scored split; `None` means every subject.
    pub split: Option<Split>,
    pub n_subjects: usize,
    pub n_fused: usize,
    /// Voice families, keyed by family name.
    pub families: BTreeMap<String, Metrics>,
    pub text: Option<Metrics>,
    pub fused: Option<Metrics>,
}

impl MetricsReport {
    /// Plain-text table, one row per score source.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let split = self.split.map_or("all".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "split={split} subjects={} fused={} c={} fusion={}",
            self.n_subjects,
            self.n_fused,
            self.c,
            serde_json::to_value(self.fusion)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        );
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>9} {:>8} {:>8} {:>8} {:>4} {:>4} {:>4} {:>4}",
            "source", "accuracy", "precision", "recall", "f1", "auc", "tp", "fp", "tn", "fn"
        );
        let rows = self
            .families
            .iter()
            .map(|(k, m)| (k.as_str(), m))
            .chain(self.text.as_ref().map(|m| ("text", m)))
            .chain(self.fused.as_ref().map(|m| ("fused", m)));
        for (name, m) in rows {
            let auc = m.roc_auc.map_or("-".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{name:<10} {:>8.4} {:>9.4} {:>8.4} {:>8.4} {auc:>8} {:>4} {:>4} {:>4} {:>4}",
                m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn_
            );
        }
        out
    }
}

/// Renders a `metrics.json` file as a table.
pub fn cmd_report(metrics_path: &Path) -> Result<String, PipelineError> {
    let report: MetricsReport = serde_json::from_str(&read_file(metrics_path)?)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", metrics_path.display())))?;
    Ok(report.to_table())
}
