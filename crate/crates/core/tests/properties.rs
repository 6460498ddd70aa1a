use std::collections::BTreeSet;

use chrono::NaiveDate;
use forumscope_core::cluster::extract_clusters;
use forumscope_core::ingest::{build_tensor, discretize, Granularity, PostRecord, PostTable};
use forumscope_core::profile::{detect_anomalies, jaccard};
use forumscope_core::tensor::{cp_als_nn_l1, cp_apr, SolverOptions, SparseTensor3};
use forumscope_core::topics::{dominant_topics, TopicAssignment};
use proptest::prelude::*;

fn day(offset: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Days::new(offset as u64)
}

fn records(rows: &[(u8, u8, u32)]) -> Vec<PostRecord> {
    rows.iter()
        .enumerate()
        .map(|(ix, &(u, t, d))| PostRecord {
            forum_id: "F".into(),
            thread_id: format!("t{t}"),
            post_id: format!("p{ix}"),
            username: format!("u{u}"),
            date: day(d),
            content: "some text".into(),
        })
        .collect()
}

fn tensor() -> impl Strategy<Value = SparseTensor3> {
    (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(ni, nj, nk)| {
        prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => (1u8..5).prop_map(f64::from)], ni * nj * nk)
            .prop_filter("nonempty", |v| v.iter().any(|&x| x > 0.0))
            .prop_map(move |v| SparseTensor3::from_dense((ni, nj, nk), &v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_mass_equals_record_count(rows in prop::collection::vec((0u8..6, 0u8..6, 0u32..60), 1..80)) {
        let table = PostTable::new(records(&rows), day(1000)).unwrap();
        for g in [Granularity::Day, Granularity::Week, Granularity::Month] {
            let time = discretize(&table, g).unwrap();
            let x = build_tensor(&table, &time);
            prop_assert_eq!(x.sum(), rows.len() as f64);
            prop_assert!(x.entries().iter().all(|e| e.3 > 0.0 && e.2 < time.slot_count));
        }
    }

    #[test]
    fn slots_are_monotone(a in 0u32..4000, b in 0u32..4000) {
        let (lo, hi) = (a.min(b), a.max(b));
        for g in [Granularity::Day, Granularity::Week, Granularity::Month] {
            let rows = [(0, 0, lo), (0, 0, hi)];
            let table = PostTable::new(records(&rows), day(5000)).unwrap();
            let time = discretize(&table, g).unwrap();
            prop_assert!(time.slot(day(lo)) <= time.slot(day(hi)));
            prop_assert!(time.slot(day(lo)) >= 0 && (time.slot(day(hi)) as usize) < time.slot_count);
        }
    }

    #[test]
    fn als_is_monotone_and_nonnegative(x in tensor(), rank in 1usize..4, lambda in 0.0f64..2.0, seed in 0u64..1000) {
        let opts = SolverOptions { lambda, seed, ..Default::default() };
        let m = cp_als_nn_l1(&x, rank, &opts).unwrap();
        prop_assert!(m.min_entry() >= 0.0);
        for w in m.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
        }
        for c in extract_clusters(&m, 0.0) {
            prop_assert!(c.users.iter().chain(&c.threads).chain(&c.weeks).all(|&(_, s)| s > 0.0));
        }
    }

    #[test]
    fn apr_kl_trace_is_monotone(x in tensor(), rank in 1usize..4, seed in 0u64..1000) {
        let opts = SolverOptions { seed, ..Default::default() };
        let m = cp_apr(&x, rank, &opts).unwrap();
        prop_assert!(m.min_entry() >= 0.0);
        for w in m.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in prop::collection::btree_set(0u8..20, 0..10), b in prop::collection::btree_set(0u8..20, 0..10)) {
        let s = jaccard(&a, &b);
        prop_assert_eq!(s, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&s));
        if !a.is_empty() {
            prop_assert_eq!(jaccard(&a, &a), 1.0);
        }
    }

    #[test]
    fn dominant_topics_cover_minimally(topics in prop::collection::vec(0usize..8, 1..60), th in 0.05f64..=1.0) {
        let a: Vec<TopicAssignment> = topics.iter().enumerate()
            .map(|(doc, &topic)| TopicAssignment { doc, topic, score: 1.0 }).collect();
        let t_dom = dominant_topics(&a, th).unwrap();
        let n = topics.len() as f64;
        let covered: usize = t_dom.iter().map(|d| d.threads).sum();
        prop_assert!(covered as f64 / n >= th - 1e-9);
        let without_last = covered - t_dom.last().unwrap().threads;
        prop_assert!((without_last as f64) / n < th);
        let ids: BTreeSet<usize> = t_dom.iter().map(|d| d.topic).collect();
        prop_assert_eq!(ids.len(), t_dom.len());
        prop_assert!(t_dom.windows(2).all(|w| w[0].threads >= w[1].threads));
    }

    #[test]
    fn anomalies_are_never_core(points in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 2), 3..25), min_pts in 2usize..5) {
        let report = detect_anomalies(&points, 0.5, min_pts);
        for &a in &report.anomalies {
            let near = points.iter().filter(|p| {
                let d: f64 = p.iter().zip(&points[a]).map(|(x, y)| (x - y) * (x - y)).sum();
                d.sqrt() <= 0.5
            }).count();
            prop_assert!(near < min_pts);
        }
    }
}
