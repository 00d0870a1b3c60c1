//! Machine-readable run summaries and the stdout table.

use serde::{Deserialize, Serialize};
use variance_forge_core::metrics::EvaluationRecord;
use variance_forge_core::perturb::{FactorKind, PerturbationPool, PerturbationStrategy, RobustnessVerdict};
use variance_forge_core::search::EngineKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub accuracy: f64,
    pub ccdd: f64,
    pub train_accuracy: f64,
    pub train_ccdd: f64,
    pub test_samples: usize,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: PerturbationStrategy,
    pub description: String,
    pub pv: f64,
    pub accuracy: f64,
    pub ccdd: f64,
    pub failed: bool,
}

impl StrategySummary {
    pub fn new(pool: &PerturbationPool, r: &EvaluationRecord) -> Self {
        StrategySummary {
            strategy: r.strategy.clone(),
            description: pool.describe(&r.strategy),
            pv: r.pv,
            accuracy: r.perturbed_accuracy,
            ccdd: r.perturbed_ccdd.value,
            failed: r.failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// Factors switched on; empty for the all-off row.
    pub factors: Vec<FactorKind>,
    #[serde(flatten)]
    pub result: StrategySummary,
}

/// `difference = combined_pv − sum_of_singles`; non-zero means the factors'
/// effects do not add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub factors: Vec<FactorKind>,
    pub combined_pv: f64,
    pub sum_of_singles: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVerdict {
    pub delta: f64,
    pub robust: bool,
    pub violations: usize,
    pub max_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub strategy: PerturbationStrategy,
    pub description: String,
    /// Every test sample moved by at most `sigma` under the chosen norm.
    pub sigma_bound_satisfied: bool,
    /// Input and configuration conditions on the test split.
    pub test: RobustnessVerdict,
    /// Noisy-label condition on the training split, when `delta` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub fingerprint: String,
    pub master_seed: u64,
    pub baseline: BaselineSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<StrategySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
    /// File name of the trace, relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    /// Single-factor strategies, one per non-off level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marginals: Vec<StrategySummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GridRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub non_additivity: Vec<Interaction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckReport>,
    pub timing: Timing,
}

impl RunReport {
    /// Every strategy the report mentions.
    pub fn strategies(&self) -> Vec<&PerturbationStrategy> {
        let mut out: Vec<&PerturbationStrategy> = Vec::new();
        out.extend(self.best.iter().map(|b| &b.strategy));
        out.extend(self.marginals.iter().map(|m| &m.strategy));
        out.extend(self.grid.iter().map(|g| &g.result.strategy));
        out.extend(self.check.iter().map(|c| &c.strategy));
        out
    }
}

fn factor_label(factors: &[FactorKind]) -> String {
    if factors.is_empty() {
        "(none)".to_string()
    } else {
        factors.iter().map(|f| f.code()).collect::<Vec<_>>().join("+")
    }
}

/// Columns padded to their widest cell; the first column is left-aligned,
/// the rest right-aligned.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let mut out = vec![line(headers.to_vec()), line(rule.iter().map(String::as_str).collect())];
    for row in rows {
        out.push(line(row.iter().map(String::as_str).collect()));
    }
    out.join("\n") + "\n"
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

/// Human-readable rendering of a report.
pub fn render(report: &RunReport) -> String {
    let b = &report.baseline;
    let mut out = format!(
        "{} (master seed {})\nbaseline: test accuracy {}, test C-CDD {}, train accuracy {}, train C-CDD {}\n",
        report.command,
        report.master_seed,
        num(b.accuracy),
        num(b.ccdd),
        num(b.train_accuracy),
        num(b.train_ccdd)
    );
    if !report.grid.is_empty() {
        let rows: Vec<Vec<String>> = report
            .grid
            .iter()
            .map(|g| {
                vec![
                    factor_label(&g.factors),
                    g.result.strategy.encoding(),
                    num(g.result.accuracy),
                    num(g.result.ccdd),
                    num(g.result.pv),
                ]
            })
            .collect();
        out.push('\n');
        out.push_str(&table(&["factors", "strategy", "accuracy", "c-cdd", "pv"], &rows));
    }
    if !report.non_additivity.is_empty() {
        let rows: Vec<Vec<String>> = report
            .non_additivity
            .iter()
            .map(|i| {
                vec![
                    factor_label(&i.factors),
                    num(i.combined_pv),
                    num(i.sum_of_singles),
                    num(i.difference),
                ]
            })
            .collect();
        out.push('\n');
        out.push_str(&table(
            &["factors", "combined pv", "sum of singles", "difference"],
            &rows,
        ));
    }
    if let Some(best) = &report.best {
        out.push_str(&format!(
            "\nbest {} [{}]: pv {}, accuracy {} after {} evaluations ({})\n",
            best.strategy,
            best.description,
            num(best.pv),
            num(best.accuracy),
            report.evaluations.unwrap_or(0),
            report.engine.map_or(report.command.as_str(), |e| e.name()),
        ));
    }
    if !report.marginals.is_empty() {
        let rows: Vec<Vec<String>> = report
            .marginals
            .iter()
            .map(|m| vec![m.description.clone(), m.strategy.encoding(), num(m.accuracy), num(m.pv)])
            .collect();
        out.push('\n');
        out.push_str(&table(&["single factor", "strategy", "accuracy", "pv"], &rows));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let t = table(
            &["name", "value"],
            &[vec!["a".into(), "1.5".into()], vec!["longer".into(), "10.25".into()]],
        );
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "name    value");
        assert_eq!(lines[1], "------  -----");
        assert_eq!(lines[2], "a         1.5");
        assert_eq!(lines[3], "longer  10.25");
    }
}
