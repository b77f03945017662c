use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_EVALUATION_INTERVAL_MS: u64 = 5000;
pub const MIN_EVALUATION_INTERVAL_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    /// `true` when `observed` satisfies the objective.
    pub fn holds(self, observed: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => observed < threshold,
            Comparator::Le => observed <= threshold,
            Comparator::Gt => observed > threshold,
            Comparator::Ge => observed >= threshold,
            Comparator::Eq => observed == threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Comparator::Lt => "LT",
            Comparator::Le => "LE",
            Comparator::Gt => "GT",
            Comparator::Ge => "GE",
            Comparator::Eq => "EQ",
        }
    }

    fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            "==" => Comparator::Eq,
            _ => return None,
        })
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A single-comparator objective. Thresholds are stored in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceLevelObjective {
    pub metric: String,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default = "default_interval")]
    pub evaluation_interval_ms: u64,
}

fn default_interval() -> u64 {
    DEFAULT_EVALUATION_INTERVAL_MS
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse SLO at token {token:?}: {reason}")]
pub struct SloParseError {
    pub token: String,
    pub reason: &'static str,
}

impl ServiceLevelObjective {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.metric.is_empty() || self.metric.chars().any(char::is_whitespace) {
            return Err("metric must be a non-empty name without whitespace");
        }
        if !self.threshold.is_finite() {
            return Err("threshold must be finite");
        }
        if self.evaluation_interval_ms < MIN_EVALUATION_INTERVAL_MS {
            return Err("evaluation interval must be at least 100 ms");
        }
        Ok(())
    }

    pub fn is_met_by(&self, observed: f64) -> bool {
        self.comparator.holds(observed, self.threshold)
    }
}

/// Parses `<metric> <op> <number>[ms|s]` with the default evaluation interval.
pub fn parse_slo(text: &str) -> Result<ServiceLevelObjective, SloParseError> {
    parse_slo_with_interval(text, DEFAULT_EVALUATION_INTERVAL_MS)
}

pub fn parse_slo_with_interval(
    text: &str,
    evaluation_interval_ms: u64,
) -> Result<ServiceLevelObjective, SloParseError> {
    let mut tokens = text.split_whitespace();
    let err = |token: &str, reason| SloParseError { token: token.to_string(), reason };

    let metric = tokens.next().ok_or_else(|| err("", "empty expression"))?;
    let op = tokens.next().ok_or_else(|| err(metric, "missing operator"))?;
    let comparator = Comparator::from_symbol(op).ok_or_else(|| err(op, "unknown operator"))?;
    let quantity = tokens.next().ok_or_else(|| err(op, "missing threshold"))?;
    if let Some(extra) = tokens.next() {
        return Err(err(extra, "unexpected trailing token"));
    }

    let (number, factor) = if let Some(n) = quantity.strip_suffix("ms") {
        (n, 1.0)
    } else if let Some(n) = quantity.strip_suffix('s') {
        (n, 1000.0)
    } else {
        (quantity, 1.0)
    };
    let value: f64 = number.parse().map_err(|_| err(quantity, "invalid number"))?;
    let threshold = value * factor;
    if !threshold.is_finite() {
        return Err(err(quantity, "threshold must be finite"));
    }
    if evaluation_interval_ms < MIN_EVALUATION_INTERVAL_MS {
        return Err(err(quantity, "evaluation interval must be at least 100 ms"));
    }

    Ok(ServiceLevelObjective {
        metric: metric.to_string(),
        comparator,
        threshold,
        evaluation_interval_ms,
    })
}

/// Normalized text form; `parse_slo(&format_slo(s)) == s` for default intervals.
pub fn format_slo(slo: &ServiceLevelObjective) -> String {
    format!("{} {} {}ms", slo.metric, slo.comparator.symbol(), slo.threshold)
}

impl fmt::Display for ServiceLevelObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_slo(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_seconds_normalizes_to_ms() {
        let slo = parse_slo("latency < 10s").unwrap();
        assert_eq!(slo.metric, "latency");
        assert_eq!(slo.comparator, Comparator::Lt);
        assert_eq!(slo.threshold, 10_000.0);
        assert_eq!(slo.evaluation_interval_ms, 5000);
    }

    #[test]
    fn zero_threshold() {
        let slo = parse_slo("latency < 0").unwrap();
        assert_eq!(slo.threshold, 0.0);
        assert!(!slo.is_met_by(1.0));
    }

    #[test]
    fn unknown_operator() {
        let e = parse_slo("availability >> 3").unwrap_err();
        assert_eq!(e.token, ">>");
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_slo("").is_err());
        assert!(parse_slo("latency <").is_err());
        assert!(parse_slo("latency < abc").is_err());
        assert!(parse_slo("latency < 10s extra").is_err());
        assert!(parse_slo("latency < 1e400").is_err());
        assert_eq!(parse_slo("latency <= 250ms").unwrap().threshold, 250.0);
        assert_eq!(parse_slo("latency >= 1.5s").unwrap().threshold, 1500.0);
    }

    #[test]
    fn comparators() {
        assert!(Comparator::Lt.holds(1.0, 2.0));
        assert!(!Comparator::Lt.holds(2.0, 2.0));
        assert!(Comparator::Le.holds(2.0, 2.0));
        assert!(Comparator::Gt.holds(3.0, 2.0));
        assert!(Comparator::Ge.holds(2.0, 2.0));
        assert!(Comparator::Eq.holds(2.0, 2.0));
        assert!(!Comparator::Eq.holds(2.0, 2.5));
    }

    fn arb_slo() -> impl Strategy<Value = ServiceLevelObjective> {
        (
            "[a-z][a-z0-9_.]{0,12}",
            prop::sample::select(vec![
                Comparator::Lt,
                Comparator::Le,
                Comparator::Gt,
                Comparator::Ge,
                Comparator::Eq,
            ]),
            prop::num::f64::NORMAL | prop::num::f64::ZERO,
        )
            .prop_map(|(metric, comparator, threshold)| ServiceLevelObjective {
                metric,
                comparator,
                threshold,
                evaluation_interval_ms: DEFAULT_EVALUATION_INTERVAL_MS,
            })
    }

    proptest! {
        #[test]
        fn parse_format_round_trip(slo in arb_slo()) {
            let parsed = parse_slo(&format_slo(&slo)).unwrap();
            prop_assert_eq!(parsed, slo);
        }
    }
}
