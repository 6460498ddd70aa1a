use forumscope_core::topics::{
    assign_topics, default_alpha, dominant_topics, fit_lda, TopicAssignment, LDA_SWEEPS,
};

fn titles(words: &[&str], n: usize, offset: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|d| {
            (0..3)
                .map(|w| words[(d + w + offset) % words.len()].to_string())
                .collect()
        })
        .collect()
}

fn separation(alpha: f64) {
    let a = ["locker", "ransom", "bitcoin", "decrypt", "payload", "victim"];
    let b = ["tutorial", "python", "script", "lesson", "beginner", "guide"];
    for seed in 0..5 {
        let mut docs = titles(&a, 12, 0);
        docs.extend(titles(&b, 12, 1));
        let tm = fit_lda(&docs, 2, alpha, LDA_SWEEPS, seed).unwrap();
        let ta = assign_topics(&tm)[0].topic;
        for (d, dist) in tm.doc_topic.iter().enumerate() {
            let want = if d < 12 { ta } else { 1 - ta };
            assert!(dist[want] >= 0.9, "seed {seed} doc {d}: {dist:?}");
        }
    }
}

#[test]
fn disjoint_title_groups_separate_under_sparse_prior() {
    separation(0.1);
}

// Three-word titles carry too little co-occurrence to outweigh a prior of 25.
#[test]
#[ignore]
fn disjoint_title_groups_separate_under_default_prior() {
    separation(default_alpha(2));
}

#[test]
fn assignments_match_brute_force_argmax() {
    let docs = titles(&["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf"], 20, 0);
    let tm = fit_lda(&docs, 4, default_alpha(4), 100, 11).unwrap();
    let got = assign_topics(&tm);
    for (d, dist) in tm.doc_topic.iter().enumerate() {
        let mut best = 0;
        for t in 1..dist.len() {
            if dist[t] > dist[best] {
                best = t;
            }
        }
        assert_eq!(got[d].topic, best);
        assert_eq!(got[d].score, dist[best]);
    }
}

#[test]
fn eighty_one_percent_topic_dominates_alone() {
    let mut topics = vec![0; 81];
    topics.extend((0..19).map(|i| 1 + i % 4));
    let a: Vec<TopicAssignment> = topics
        .iter()
        .enumerate()
        .map(|(doc, &topic)| TopicAssignment { doc, topic, score: 1.0 })
        .collect();
    let t_dom = dominant_topics(&a, 0.70).unwrap();
    assert_eq!(t_dom.len(), 1);
    assert_eq!(t_dom[0].topic, 0);
    assert!((t_dom[0].share - 0.81).abs() < 1e-12);
}
