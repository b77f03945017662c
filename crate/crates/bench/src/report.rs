//! Raw samples, summary rows and their CSV/text forms.

use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSample {
    pub composition: String,
    pub concurrency: usize,
    pub metric: String,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub composition: String,
    pub concurrency: usize,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryLine<'a> {
    scenario: &'a str,
    seed: u64,
    time_scale: f64,
    composition: &'a str,
    concurrency: usize,
    metric: &'a str,
    mean: f64,
    stddev: f64,
    n: usize,
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub time_scale: f64,
    pub raw: Vec<RawSample>,
    pub notes: Vec<String>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, seed: u64, time_scale: f64) -> Self {
        ScenarioReport { scenario: scenario.into(), seed, time_scale, raw: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, composition: &str, concurrency: usize, metric: &str, value: f64) {
        let index = self
            .raw
            .iter()
            .filter(|s| s.composition == composition && s.concurrency == concurrency && s.metric == metric)
            .count();
        self.raw.push(RawSample {
            composition: composition.into(),
            concurrency,
            metric: metric.into(),
            index,
            value,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn values(&self, composition: &str, concurrency: usize, metric: &str) -> Vec<f64> {
        self.raw
            .iter()
            .filter(|s| s.composition == composition && s.concurrency == concurrency && s.metric == metric)
            .map(|s| s.value)
            .collect()
    }

    pub fn row(&self, composition: &str, concurrency: usize, metric: &str) -> Option<SummaryRow> {
        let xs = self.values(composition, concurrency, metric);
        if xs.is_empty() {
            return None;
        }
        let (mean, stddev) = mean_std(&xs);
        Some(SummaryRow {
            composition: composition.into(),
            concurrency,
            metric: metric.into(),
            mean,
            stddev,
            n: xs.len(),
        })
    }

    pub fn mean(&self, composition: &str, concurrency: usize, metric: &str) -> f64 {
        self.row(composition, concurrency, metric).map_or(f64::NAN, |r| r.mean)
    }

    /// One row per (composition, concurrency, metric), in first-seen order.
    pub fn rows(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(&str, usize, &str)> = Vec::new();
        for s in &self.raw {
            let k = (s.composition.as_str(), s.concurrency, s.metric.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter().filter_map(|(c, n, m)| self.row(c, n, m)).collect()
    }

    pub fn summary_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.serialize(SummaryLine {
                scenario: &self.scenario,
                seed: self.seed,
                time_scale: self.time_scale,
                composition: &row.composition,
                concurrency: row.concurrency,
                metric: &row.metric,
                mean: row.mean,
                stddev: row.stddev,
                n: row.n,
            })?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }

    pub fn raw_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.raw {
            w.serialize(s)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} seed={} timeScale={}", self.scenario, self.seed, self.time_scale);
        let _ = writeln!(out, "{:<12} {:>5} {:<20} {:>14} {:>12} {:>5}", "composition", "conc", "metric", "mean", "stddev", "n");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:<20} {:>14.3} {:>12.3} {:>5}",
                r.composition, r.concurrency, r.metric, r.mean, r.stddev, r.n
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    /// Writes `summary.csv`, `raw.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let io = |e: csv::Error| std::io::Error::other(e.to_string());
        std::fs::write(dir.join("summary.csv"), self.summary_csv().map_err(io)?)?;
        std::fs::write(dir.join("raw.csv"), self.raw_csv().map_err(io)?)?;
        std::fs::write(dir.join("report.txt"), self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_stddev() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - 2.138089935299395).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn rows_group_in_first_seen_order() {
        let mut r = ScenarioReport::new("s", 1, 0.5);
        r.push("b", 1, "x", 1.0);
        r.push("a", 1, "x", 3.0);
        r.push("b", 1, "x", 3.0);
        let rows = r.rows();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].composition.as_str(), rows[0].mean, rows[0].n), ("b", 2.0, 2));
        assert_eq!(r.raw[2].index, 1);
    }

    #[test]
    fn csv_outputs() {
        let mut r = ScenarioReport::new("scenario1", 7, 0.01);
        r.push("vm", 2, "deploymentTime", 10.0);
        let summary = r.summary_csv().unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next(), Some("scenario,seed,timeScale,composition,concurrency,metric,mean,stddev,n"));
        assert_eq!(lines.next(), Some("scenario1,7,0.01,vm,2,deploymentTime,10.0,0.0,1"));
        let raw = r.raw_csv().unwrap();
        assert!(raw.starts_with("composition,concurrency,metric,index,value\nvm,2,deploymentTime,0,10.0"));
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        for f in ["summary.csv", "raw.csv", "report.txt"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
