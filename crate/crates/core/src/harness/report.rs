use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = ["Model Name", "Val Acc", "Val C", "Val N", "Val E", "Test Acc", "Test C", "Test N", "Test E"];

/// One results row, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub val_accuracy: f64,
    /// C, N, E.
    pub val_per_class: [Option<f64>; 3],
    pub test_accuracy: f64,
    pub test_per_class: [Option<f64>; 3],
}

impl TableRow {
    pub fn from_reports(model: impl Into<String>, val: &EvalReport, test: &EvalReport) -> Self {
        let pct = |x: Option<f64>| x.map(|v| 100.0 * v);
        Self {
            model: model.into(),
            val_accuracy: 100.0 * val.accuracy,
            val_per_class: val.per_class.map(pct),
            test_accuracy: 100.0 * test.accuracy,
            test_per_class: test.per_class.map(pct),
        }
    }

    fn cells(&self) -> [String; 9] {
        let f = |v: f64| format!("{v:.2}");
        let o = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), f);
        [
            self.model.clone(),
            f(self.val_accuracy),
            o(self.val_per_class[0]),
            o(self.val_per_class[1]),
            o(self.val_per_class[2]),
            f(self.test_accuracy),
            o(self.test_per_class[0]),
            o(self.test_per_class[1]),
            o(self.test_per_class[2]),
        ]
    }
}

/// One evaluated split of one model, as written by `eve eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub report: EvalReport,
}

/// One row per model, in order of first appearance; each model needs exactly
/// one `val` and one `test` record.
pub fn rows_from_records(records: &[EvalRecord]) -> Result<Vec<TableRow>> {
    let mut models: Vec<&str> = Vec::new();
    for r in records {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    models
        .into_iter()
        .map(|model| {
            let pick = |split: &str| {
                let mut found = records.iter().filter(|r| r.model == model && r.report.split == split);
                match (found.next(), found.next()) {
                    (Some(r), None) => Ok(&r.report),
                    (None, _) => Err(Error::Contract(format!("{model}: no {split} report"))),
                    (Some(_), Some(_)) => Err(Error::Contract(format!("{model}: more than one {split} report"))),
                }
            };
            Ok(TableRow::from_reports(model, pick("val")?, pick("test")?))
        })
        .collect()
}

/// Pipe-separated table with a header and one line per row; percentages to
/// two decimals.
pub fn report_table(rows: &[TableRow]) -> String {
    let lines: Vec<[String; 9]> =
        std::iter::once(COLUMNS.map(str::to_owned)).chain(rows.iter().map(TableRow::cells)).collect();
    let widths: [usize; 9] = std::array::from_fn(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0));
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        }
    }
    out
}

pub fn report_json(rows: &[TableRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
