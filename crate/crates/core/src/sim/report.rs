//! Experiment output: a flat measurement table plus a summary, emitted as
//! CSV (`experiment,N,seed,phase,metric,value`) and a JSON document. Both
//! encodings are byte-deterministic for a fixed (config, seed): rows are
//! appended in loop order, the summary map is sorted, and floats are
//! printed with fixed six-decimal precision in CSV.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub n: u64,
    pub seed: u64,
    pub phase: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MetricsReport {
    pub experiment: String,
    pub notes: Vec<String>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn new(experiment: &str) -> MetricsReport {
        MetricsReport {
            experiment: experiment.to_string(),
            notes: Vec::new(),
            summary: BTreeMap::new(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn push(&mut self, n: u64, seed: u64, phase: &str, metric: &str, value: f64) {
        self.rows.push(MetricsRow {
            experiment: self.experiment.clone(),
            n,
            seed,
            phase: phase.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn set_summary(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn set_summary_f64(&mut self, key: &str, value: f64) {
        let number = serde_json::Number::from_f64(value)
            .unwrap_or_else(|| serde_json::Number::from(0));
        self.summary
            .insert(key.to_string(), serde_json::Value::Number(number));
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(|v| v.as_f64())
    }

    /// Rows as CSV. Notes become leading `#` comment lines so the column
    /// header stays machine-parsable.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            out.push_str("# ");
            out.push_str(note);
            out.push('\n');
        }
        out.push_str("experiment,N,seed,phase,metric,value\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                row.experiment, row.n, row.seed, row.phase, row.metric, row.value
            ));
        }
        out
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape_and_determinism() {
        let build = || {
            let mut report = MetricsReport::new("join_latency");
            report.note("scaled-down run");
            report.push(64, 1, "directory_join", "sim_seconds", 1.25);
            report.push(64, 1, "directory_join", "messages", 11.0);
            report.set_summary_f64("mean_total_secs_n64", 1.25);
            report
        };
        let a = build();
        let b = build();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json_pretty(), b.to_json_pretty());
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# scaled-down run"));
        assert_eq!(lines.next(), Some("experiment,N,seed,phase,metric,value"));
        assert_eq!(
            lines.next(),
            Some("join_latency,64,1,directory_join,sim_seconds,1.250000")
        );
    }
}
