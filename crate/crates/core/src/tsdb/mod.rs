//! In-memory time-series store with line-protocol push and exposition scraping.

mod collector;
mod line;

pub use collector::Monitor;
pub use line::{format_line, parse_exposition, parse_line, LineParseError};

use crate::domain::MetricSample;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_RETENTION: usize = 100_000;

pub type Tags = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct SeriesKey {
    metric: String,
    tags: Tags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Last,
    Avg,
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown aggregator {0:?}")]
    UnknownAggregator(String),
    #[error("invalid range {from}..{to}")]
    InvalidRange { from: i64, to: i64 },
}

impl FromStr for Aggregator {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(Aggregator::Last),
            "avg" => Ok(Aggregator::Avg),
            "max" => Ok(Aggregator::Max),
            "min" => Ok(Aggregator::Min),
            other => Err(QueryError::UnknownAggregator(other.to_string())),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Last => "last",
            Aggregator::Avg => "avg",
            Aggregator::Max => "max",
            Aggregator::Min => "min",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Query {
    pub metric: String,
    #[serde(default)]
    pub tags: Tags,
    #[serde(default = "min_ts")]
    pub from_ms: i64,
    #[serde(default = "max_ts")]
    pub to_ms: i64,
    #[serde(default)]
    pub aggregator: Option<Aggregator>,
}

fn min_ts() -> i64 {
    i64::MIN
}

fn max_ts() -> i64 {
    i64::MAX
}

impl Query {
    pub fn new(metric: impl Into<String>) -> Self {
        Query { metric: metric.into(), tags: Tags::new(), from_ms: i64::MIN, to_ms: i64::MAX, aggregator: None }
    }

    pub fn tag(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.tags.insert(k.into(), v.into());
        self
    }

    pub fn range(mut self, from_ms: i64, to_ms: i64) -> Self {
        self.from_ms = from_ms;
        self.to_ms = to_ms;
        self
    }

    pub fn agg(mut self, a: Aggregator) -> Self {
        self.aggregator = Some(a);
        self
    }
}

/// One matching series. With an aggregator, `points` holds a single point
/// (the last one for `last`, the range end for the others).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesResult {
    pub metric: String,
    pub tags: Tags,
    pub points: Vec<(i64, f64)>,
}

impl SeriesResult {
    pub fn value(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PushOutcome {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

pub struct Tsdb {
    retention: usize,
    series: RwLock<BTreeMap<SeriesKey, VecDeque<(i64, f64)>>>,
}

impl Default for Tsdb {
    fn default() -> Self {
        Tsdb::new(DEFAULT_RETENTION)
    }
}

impl Tsdb {
    pub fn new(retention: usize) -> Self {
        Tsdb { retention: retention.max(1), series: RwLock::new(BTreeMap::new()) }
    }

    /// Stores one sample; a duplicate timestamp overwrites.
    pub fn insert(&self, sample: MetricSample) -> Result<(), &'static str> {
        sample.validate()?;
        let key = SeriesKey { metric: sample.metric, tags: sample.tags };
        let point = (sample.timestamp_ms, sample.value);
        let mut all = self.series.write();
        let points = all.entry(key).or_default();
        match points.back() {
            Some(&(t, _)) if t < point.0 => points.push_back(point),
            None => points.push_back(point),
            _ => match points.binary_search_by_key(&point.0, |p| p.0) {
                Ok(i) => points[i] = point,
                Err(i) => points.insert(i, point),
            },
        }
        while points.len() > self.retention {
            points.pop_front();
        }
        Ok(())
    }

    pub fn ingest_line(&self, line: &str) -> Result<MetricSample, LineParseError> {
        let sample = parse_line(line)?;
        self.insert(sample.clone()).map_err(|e| LineParseError { position: 0, reason: e.to_string() })?;
        Ok(sample)
    }

    /// Ingests a push body, one line per sample; blank lines are ignored.
    pub fn ingest_text(&self, body: &str) -> PushOutcome {
        let mut out = PushOutcome::default();
        for (index, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match self.ingest_line(line) {
                Ok(_) => out.accepted += 1,
                Err(e) => out.rejected.push(Rejection { index, reason: e.to_string() }),
            }
        }
        out
    }

    pub fn push_samples(&self, samples: impl IntoIterator<Item = MetricSample>) -> PushOutcome {
        let mut out = PushOutcome::default();
        for (index, s) in samples.into_iter().enumerate() {
            match self.insert(s) {
                Ok(()) => out.accepted += 1,
                Err(reason) => out.rejected.push(Rejection { index, reason: reason.into() }),
            }
        }
        out
    }

    pub fn query(&self, q: &Query) -> Result<Vec<SeriesResult>, QueryError> {
        if q.from_ms > q.to_ms {
            return Err(QueryError::InvalidRange { from: q.from_ms, to: q.to_ms });
        }
        let all = self.series.read();
        let mut out = Vec::new();
        let start = SeriesKey { metric: q.metric.clone(), tags: Tags::new() };
        for (key, points) in all.range(start..).take_while(|(k, _)| k.metric == q.metric) {
            if !q.tags.iter().all(|(k, v)| key.tags.get(k) == Some(v)) {
                continue;
            }
            let lo = points.partition_point(|p| p.0 < q.from_ms);
            let hi = points.partition_point(|p| p.0 <= q.to_ms);
            if lo >= hi {
                continue;
            }
            let in_range = points.range(lo..hi);
            let points = match q.aggregator {
                None => in_range.copied().collect(),
                Some(Aggregator::Last) => vec![points[hi - 1]],
                Some(agg) => {
                    let end = points[hi - 1].0;
                    let values = in_range.map(|p| p.1);
                    let v = match agg {
                        Aggregator::Avg => values.sum::<f64>() / (hi - lo) as f64,
                        Aggregator::Max => values.fold(f64::NEG_INFINITY, f64::max),
                        Aggregator::Min => values.fold(f64::INFINITY, f64::min),
                        Aggregator::Last => unreachable!(),
                    };
                    vec![(end, v)]
                }
            };
            out.push(SeriesResult { metric: key.metric.clone(), tags: key.tags.clone(), points });
        }
        Ok(out)
    }

    /// Most recent point across the series matching `metric` and `tags`.
    pub fn last(&self, metric: &str, tags: &Tags) -> Option<(i64, f64)> {
        let mut q = Query::new(metric).agg(Aggregator::Last);
        q.tags = tags.clone();
        self.query(&q).ok()?.into_iter().filter_map(|s| s.points.last().copied()).max_by_key(|p| p.0)
    }

    pub fn series_count(&self) -> usize {
        self.series.read().len()
    }

    pub fn point_count(&self) -> usize {
        self.series.read().values().map(VecDeque::len).sum()
    }
}

#[cfg(test)]
mod tests;
