use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BenchMode, BenchmarkItem, DurationClass};

/// Outcome for one benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub duration_class: Option<DurationClass>,
    pub gold: String,
    pub predicted: Option<String>,
    pub correct: bool,
    pub raw_output: String,
    /// Weight actually used for co-reasoning (absent in baseline mode).
    pub alpha: Option<f64>,
    /// Number of shots grounded as relevant (absent in baseline mode).
    pub relevant_count: Option<usize>,
    pub oracle_calls: usize,
    pub oracle_failures: usize,
    pub error: Option<String>,
    pub wall_time_ms: f64,
}

impl ItemRecord {
    pub(crate) fn new(item: &BenchmarkItem) -> Self {
        Self {
            id: item.id.clone(),
            duration_class: item.duration_class,
            gold: item.answer.clone(),
            predicted: None,
            correct: false,
            raw_output: String::new(),
            alpha: None,
            relevant_count: None,
            oracle_calls: 0,
            oracle_failures: 0,
            error: None,
            wall_time_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassSummary {
    pub total: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

impl ClassSummary {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += correct as usize;
    }

    fn finish(&mut self) {
        self.accuracy = (self.total > 0).then(|| self.correct as f64 / self.total as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub overall: ClassSummary,
    /// Keyed by `short` / `medium` / `long` / `unlabeled`.
    pub by_class: BTreeMap<String, ClassSummary>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: BenchMode,
    pub summary: Summary,
    /// Sorted by item id.
    pub items: Vec<ItemRecord>,
}

impl RunReport {
    pub fn new(mode: BenchMode, mut items: Vec<ItemRecord>) -> Self {
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut overall = ClassSummary::default();
        let mut by_class: BTreeMap<String, ClassSummary> = BTreeMap::new();
        for item in &items {
            overall.add(item.correct);
            let key = item
                .duration_class
                .map_or("unlabeled", DurationClass::label);
            by_class
                .entry(key.to_string())
                .or_default()
                .add(item.correct);
        }
        overall.finish();
        by_class.values_mut().for_each(ClassSummary::finish);
        let errors = items.iter().filter(|i| i.error.is_some()).count();
        Self {
            mode,
            summary: Summary {
                overall,
                by_class,
                errors,
            },
            items,
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.summary.overall.accuracy.unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// JSON with timing fields removed, for comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("reports always serialize");
        if let Some(items) = value.get_mut("items").and_then(|v| v.as_array_mut()) {
            for item in items {
                if let Some(obj) = item.as_object_mut() {
                    obj.remove("wall_time_ms");
                }
            }
        }
        serde_json::to_string(&value).expect("values always serialize")
    }

    /// Accuracy table with short / medium / long / average columns.
    pub fn table(&self) -> String {
        let cell = |s: Option<&ClassSummary>| match s.and_then(|s| s.accuracy) {
            Some(a) => format!("{:.1}", a * 100.0),
            None => "-".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7}",
            "mode", "Short", "Medium", "Long", "Avg"
        );
        let _ = write!(out, "{:<10}", self.mode.label());
        for class in DurationClass::ALL {
            let _ = write!(
                out,
                " {:>7}",
                cell(self.summary.by_class.get(class.label()))
            );
        }
        let _ = writeln!(out, " {:>7}", cell(Some(&self.summary.overall)));
        let _ = writeln!(
            out,
            "{} items, {} correct, {} errors",
            self.summary.overall.total, self.summary.overall.correct, self.summary.errors
        );
        out
    }
}
