use crate::domain::MetricSample;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line parse error at byte {position}: {reason}")]
pub struct LineParseError {
    pub position: usize,
    pub reason: String,
}

fn err(position: usize, reason: impl Into<String>) -> LineParseError {
    LineParseError { position, reason: reason.into() }
}

fn clean(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == '=')
}

/// Parses `put <metric> <seconds> <value> <k=v>( <k=v>)*` with an optional
/// trailing newline.
pub fn parse_line(line: &str) -> Result<MetricSample, LineParseError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    let mut tokens = Vec::new();
    let mut offset = 0;
    for tok in body.split(' ') {
        if tok.is_empty() {
            return Err(err(offset, "empty field"));
        }
        tokens.push((offset, tok));
        offset += tok.len() + 1;
    }
    let field = |i: usize, what: &str| tokens.get(i).copied().ok_or_else(|| err(body.len(), format!("missing {what}")));

    let (pos, put) = field(0, "command")?;
    if put != "put" {
        return Err(err(pos, format!("expected 'put', found {put:?}")));
    }
    let (pos, metric) = field(1, "metric")?;
    if metric.chars().any(char::is_whitespace) {
        return Err(err(pos, "metric contains whitespace"));
    }
    let (pos, ts) = field(2, "timestamp")?;
    let secs: i64 = ts
        .bytes()
        .all(|b| b.is_ascii_digit())
        .then(|| ts.parse().ok())
        .flatten()
        .filter(|s| *s > 0)
        .ok_or_else(|| err(pos, format!("bad timestamp {ts:?}")))?;
    let ms = secs.checked_mul(1000).ok_or_else(|| err(pos, "timestamp overflows"))?;
    let (pos, value) = field(3, "value")?;
    let value: f64 = value
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| err(pos, format!("bad value {value:?}")))?;
    field(4, "tag")?;

    let mut sample = MetricSample::new(metric, ms, value);
    for &(pos, tag) in &tokens[4..] {
        let (k, v) = tag.split_once('=').ok_or_else(|| err(pos, format!("tag {tag:?} is not k=v")))?;
        if !clean(k) || !clean(v) {
            return Err(err(pos, format!("bad tag {tag:?}")));
        }
        if sample.tags.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(pos, format!("duplicate tag key {k:?}")));
        }
    }
    sample.validate().map_err(|e| err(0, e))?;
    Ok(sample)
}

/// Inverse of [`parse_line`]; tags come out sorted and sub-second precision
/// is dropped.
pub fn format_line(sample: &MetricSample) -> String {
    let mut out = format!("put {} {} {}", sample.metric, sample.timestamp_ms.div_euclid(1000), sample.value);
    for (k, v) in &sample.tags {
        let _ = write!(out, " {k}={v}");
    }
    out.push('\n');
    out
}

/// Parses `name{k="v",...} value` lines; blank and `#` lines are skipped.
pub fn parse_exposition(text: &str, timestamp_ms: i64) -> Result<Vec<MetricSample>, LineParseError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, value) = line.rsplit_once(' ').ok_or_else(|| err(start, "missing value"))?;
        let value: f64 = value.parse().map_err(|_| err(start + head.len() + 1, "bad value"))?;
        let (name, labels) = match head.split_once('{') {
            Some((name, rest)) => {
                let labels = rest.strip_suffix('}').ok_or_else(|| err(start, "unterminated labels"))?;
                (name, labels)
            }
            None => (head, ""),
        };
        let mut sample = MetricSample::new(name, timestamp_ms, value);
        for pair in labels.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| err(start, format!("bad label {pair:?}")))?;
            let v = v
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .ok_or_else(|| err(start, format!("unquoted label {pair:?}")))?;
            sample.tags.insert(k.to_string(), v.to_string());
        }
        sample.validate().map_err(|e| err(start, e))?;
        out.push(sample);
    }
    Ok(out)
}
