use super::*;
use crate::sim::{Providers, Testbed};
use crate::store::Store;
use proptest::prelude::*;
use std::sync::Arc;

fn tags(pairs: &[(&str, &str)]) -> Tags {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn ingest_maps_fields() {
    let db = Tsdb::default();
    let s = db.ingest_line("put region.latency 1700000000 87.5 region=us-east-1\n").unwrap();
    assert_eq!(s.metric, "region.latency");
    assert_eq!(s.timestamp_ms, 1_700_000_000_000);
    assert_eq!(s.value, 87.5);
    assert_eq!(s.tags, tags(&[("region", "us-east-1")]));
}

#[test]
fn malformed_lines_report_position() {
    let e = parse_line("put bad_line\n").unwrap_err();
    assert_eq!(e.position, 12);
    assert_eq!(parse_line("get m 1 1 a=b").unwrap_err().position, 0);
    assert_eq!(parse_line("put m x 1 a=b").unwrap_err().position, 6);
    assert_eq!(parse_line("put m 1 nan a=b").unwrap_err().position, 8);
    assert_eq!(parse_line("put m 1 1").unwrap_err().position, 9);
    assert_eq!(parse_line("put m 1 1 ab").unwrap_err().position, 10);
    assert_eq!(parse_line("put m 1 1  a=b").unwrap_err().position, 10);
    assert!(parse_line("put m 1 1 a=b a=c").is_err());
    assert!(parse_line("put m 0 1 a=b").is_err());
    assert!(parse_line("put m 1 1 a=b=c").is_err());
}

#[test]
fn ingest_then_query_is_bit_exact() {
    let db = Tsdb::default();
    let v = 0.1f64 + 0.2;
    db.ingest_line(&format!("put x 1700000001 {v} a=b")).unwrap();
    let out = db.query(&Query::new("x").agg(Aggregator::Last)).unwrap();
    assert_eq!(out[0].value().unwrap().to_bits(), v.to_bits());
}

#[test]
fn push_counts_accepted() {
    let db = Tsdb::default();
    let ok = (1..=10).map(|i| MetricSample::new("m", i, i as f64));
    assert_eq!(db.push_samples(ok).accepted, 10);
    let mixed = vec![
        MetricSample::new("a", 1, 1.0),
        MetricSample::new("b", 1, 1.0),
        MetricSample::new("", 1, 1.0),
        MetricSample::new("c", 1, 1.0),
    ];
    let out = db.push_samples(mixed);
    assert_eq!(out.accepted, 3);
    assert_eq!(out.rejected.len(), 1);
    assert_eq!(out.rejected[0].index, 2);
}

#[test]
fn aggregators() {
    let db = Tsdb::default();
    db.push_samples([MetricSample::new("m", 1, 2.0), MetricSample::new("m", 2, 4.0)]);
    let one = |agg| db.query(&Query::new("m").range(1, 2).agg(agg)).unwrap()[0].value().unwrap();
    assert_eq!(one(Aggregator::Avg), 3.0);
    assert_eq!(one(Aggregator::Max), 4.0);
    assert_eq!(one(Aggregator::Min), 2.0);
    assert_eq!(one(Aggregator::Last), 4.0);
    assert_eq!(db.query(&Query::new("m").range(1, 1)).unwrap()[0].points, vec![(1, 2.0)]);
    assert!(db.query(&Query::new("m").tag("x", "y")).unwrap().is_empty());
    assert!(db.query(&Query::new("m").range(3, 1)).is_err());
    assert_eq!("median".parse::<Aggregator>(), Err(QueryError::UnknownAggregator("median".into())));
}

#[test]
fn tag_filter_selects_series() {
    let db = Tsdb::default();
    db.push_samples([
        MetricSample::new("latency", 5, 1.0).tag("deployment", "a"),
        MetricSample::new("latency", 5, 2.0).tag("deployment", "b"),
        MetricSample::new("latency2", 5, 3.0).tag("deployment", "a"),
    ]);
    let out = db.query(&Query::new("latency").tag("deployment", "b")).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].value(), Some(2.0));
    assert_eq!(db.query(&Query::new("latency")).unwrap().len(), 2);
    assert_eq!(db.last("latency", &tags(&[("deployment", "a")])), Some((5, 1.0)));
}

#[test]
fn retention_ring_drops_oldest() {
    let db = Tsdb::new(3);
    db.push_samples((1..=5).map(|i| MetricSample::new("m", i, i as f64)));
    let pts = &db.query(&Query::new("m")).unwrap()[0].points;
    assert_eq!(pts, &vec![(3, 3.0), (4, 4.0), (5, 5.0)]);
}

#[test]
fn exposition_parses_scrapes() {
    let text = "# HELP x\nnode.cpu.utilization{resource=\"r01\",zone=\"a\"} 0.25\nup 1\n";
    let s = parse_exposition(text, 7).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[0].tags, tags(&[("resource", "r01"), ("zone", "a")]));
    assert_eq!(s[1].metric, "up");
    assert!(parse_exposition("m{a=b} 1", 7).is_err());
}

fn monitor(slots: usize) -> (Monitor, Providers, Arc<Store>, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    store.migrate(store.latest_version()).unwrap();
    let tb = Testbed::continuum(slots, 1);
    for r in &tb.resources {
        store.put_resource(r.clone()).unwrap();
    }
    let providers = Providers::simulated(tb, 0.0);
    (Monitor::new(Arc::new(Tsdb::default()), store.clone(), providers.clone()), providers, store, dir)
}

#[test]
fn collect_tick_reports_regions_and_costs() {
    let (m, p, store, _dir) = monitor(1);
    p.world().set_region_reachable("us-west-2", false);
    let stored = m.collect_tick();
    // 3 reachability + 2 latency + 13 cost + 2 per reachable node (r13 is down)
    assert_eq!(stored, 3 + 2 + 13 + 24);
    let db = m.tsdb();
    let reach: BTreeMap<String, f64> = db
        .query(&Query::new("region.reachable").agg(Aggregator::Last))
        .unwrap()
        .into_iter()
        .map(|s| (s.tags["region"].clone(), s.value().unwrap()))
        .collect();
    assert_eq!(reach["us-east-1"], 1.0);
    assert_eq!(reach["us-west-2"], 0.0);
    for r in store.list_resources() {
        assert_eq!(db.last("resource.cost.perHour", &tags(&[("resource", r.id.as_str())])).unwrap().1, r.cost_per_hour);
    }
}

#[test]
fn scrape_all_covers_every_resource() {
    let (m, _, _, _dir) = monitor(1);
    let n = m.scrape_all();
    assert!(n >= 2 * 3);
    assert_eq!(n, 26);
}

fn sample_strategy() -> impl Strategy<Value = MetricSample> {
    let word = "[a-zA-Z0-9_.:/-]{1,12}";
    (
        word,
        1i64..4_000_000_000,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        prop::collection::btree_map(word, word, 1..5),
    )
        .prop_map(|(metric, secs, value, tags)| MetricSample { metric, timestamp_ms: secs * 1000, value, tags })
}

proptest! {
    #[test]
    fn line_round_trip(s in sample_strategy()) {
        let line = format_line(&s);
        let parsed = parse_line(&line).unwrap();
        prop_assert_eq!(parsed.value.to_bits(), s.value.to_bits());
        prop_assert_eq!(&parsed, &s);
        prop_assert_eq!(format_line(&parsed), line);
    }

    #[test]
    fn arbitrary_text_never_panics(line in ".{0,80}") {
        let db = Tsdb::default();
        let _ = db.ingest_line(&line);
        let _ = parse_exposition(&line, 1);
    }

    /// Replay oracle: the last write per timestamp wins and points stay sorted.
    #[test]
    fn overwrite_matches_replay(writes in prop::collection::vec((1i64..20, -100i32..100), 1..60)) {
        let db = Tsdb::default();
        let mut oracle = BTreeMap::new();
        for &(t, v) in &writes {
            db.insert(MetricSample::new("m", t, v as f64)).unwrap();
            oracle.insert(t, v as f64);
        }
        let pts = db.query(&Query::new("m")).unwrap().remove(0).points;
        let expect: Vec<(i64, f64)> = oracle.into_iter().collect();
        prop_assert_eq!(&pts, &expect);
        let last = db.query(&Query::new("m").agg(Aggregator::Last)).unwrap()[0].value();
        prop_assert_eq!(last, expect.last().map(|p| p.1));
    }
}
