use proptest::prelude::*;
use rm_core::domain::MetricSample;
use rm_core::tsdb::{format_line, parse_line, Aggregator, Query, Tsdb};

fn sample() -> impl Strategy<Value = MetricSample> {
    (
        "[a-z][a-z0-9_.]{0,12}",
        1i64..4_000_000_000,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        prop::collection::btree_map("[a-z]{1,6}", "[A-Za-z0-9_-]{1,8}", 1..4),
    )
        .prop_map(|(metric, ts, value, tags)| MetricSample { metric, timestamp_ms: ts * 1000, value, tags })
}

proptest! {
    #[test]
    fn lines_round_trip(s in sample()) {
        let back = parse_line(&format_line(&s)).unwrap();
        prop_assert_eq!(back.value.to_bits(), s.value.to_bits());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn aggregates_match_points(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let db = Tsdb::new(1000);
        for (i, v) in values.iter().enumerate() {
            db.insert(MetricSample::new("m", 1_000 + i as i64, *v).tag("k", "v")).unwrap();
        }
        let get = |a| db.query(&Query::new("m").agg(a)).unwrap()[0].value().unwrap();
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert_eq!(get(Aggregator::Max), max);
        prop_assert_eq!(get(Aggregator::Min), min);
        prop_assert_eq!(get(Aggregator::Last), *values.last().unwrap());
        prop_assert!((get(Aggregator::Avg) - avg).abs() <= 1e-9 * avg.abs().max(1.0));
    }
}

#[test]
fn unknown_series_is_empty() {
    let db = Tsdb::new(10);
    db.ingest_line("put cpu 1700000000 1 host=a").unwrap();
    assert!(db.query(&Query::new("mem")).unwrap().is_empty());
    assert!(db.query(&Query::new("cpu").tag("host", "b")).unwrap().is_empty());
}
