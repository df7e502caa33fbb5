use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::svg::{line_plot, PlotSpec, Series};
use crate::error::Result;

/// One measured statistic. CSV columns are, in order: task, kind, n,
/// statistic, value, ci_low, ci_high, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: String,
    pub kind: String,
    pub n: usize,
    pub statistic: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub seed: u64,
    /// Grid coordinate of the row, for plotting. Not part of the CSV.
    #[serde(skip)]
    pub x: Option<f64>,
}

impl MetricRow {
    pub fn new(task: impl Into<String>, kind: impl Into<String>, n: usize, statistic: &str, value: f64, seed: u64) -> Self {
        Self {
            task: task.into(),
            kind: kind.into(),
            n,
            statistic: statistic.to_owned(),
            value,
            ci_low: None,
            ci_high: None,
            seed,
            x: None,
        }
    }

    pub fn with_ci(mut self, low: f64, high: f64) -> Self {
        self.ci_low = Some(low);
        self.ci_high = Some(high);
        self
    }

    pub fn at(mut self, x: f64) -> Self {
        self.x = Some(x);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub task: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<MetricRow>,
    #[serde(default)]
    pub failures: Vec<PointFailure>,
}

impl ExperimentTable {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ExperimentTable) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    /// Rows matching a statistic and, optionally, an estimator kind.
    pub fn select<'a>(&'a self, statistic: &'a str, kind: Option<&'a str>) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.statistic == statistic && kind.is_none_or(|k| r.kind == k))
    }

    /// `(x, value)` pairs for one statistic and kind, ordered by x (or n).
    pub fn series(&self, statistic: &str, kind: &str) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .select(statistic, Some(kind))
            .map(|r| (r.x.unwrap_or(r.n as f64), r.value))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Ok(Self { rows, failures: Vec::new() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Line plot of one statistic, one series per kind.
    pub fn plot(&self, statistic: &str, spec: &PlotSpec) -> String {
        let mut by_kind: BTreeMap<&str, ()> = BTreeMap::new();
        for r in self.select(statistic, None) {
            by_kind.insert(&r.kind, ());
        }
        let series: Vec<Series> = by_kind
            .keys()
            .map(|k| Series {
                name: k.to_string(),
                points: self.series(statistic, k),
            })
            .collect();
        line_plot(spec, &series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_column_order_is_fixed() {
        let mut t = ExperimentTable::default();
        t.push(MetricRow::new("probability=0.5", "mc", 1, "variance", 0.25, 9).with_ci(0.24, 0.26).at(0.5));
        t.push(MetricRow::new("probability=0.5", "reach", 1, "variance", 0.01, 9));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "task,kind,n,statistic,value,ci_low,ci_high,seed");
        assert_eq!(lines.next().unwrap(), "probability=0.5,mc,1,variance,0.25,0.24,0.26,9");
        assert_eq!(lines.next().unwrap(), "probability=0.5,reach,1,variance,0.01,,,9");
        let back = ExperimentTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[1].ci_low, None);
    }
}
