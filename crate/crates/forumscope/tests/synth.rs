mod common;

use std::collections::BTreeSet;

use chrono::Days;
use common::block;
use forumscope::synth::{generate_synthetic, thread_name, SyntheticSpec};
use forumscope::Error;
use forumscope_core::text::tokenize;

fn spec(blocks: Vec<forumscope::synth::PlantedBlock>, noise_rate: f64) -> SyntheticSpec {
    SyntheticSpec {
        users: 60,
        threads: 60,
        weeks: 12,
        noise_rate,
        blocks,
        seed: 99,
        ..common::small_spec(0)
    }
}

#[test]
fn zero_noise_posts_stay_inside_the_window() {
    let s = spec(vec![block(5, 6, 3, 4, 2.0)], 0.0);
    let posts = generate_synthetic(&s).unwrap();
    assert!(!posts.is_empty());
    let from = s.start_date + Days::new(7 * 3);
    let to = s.start_date + Days::new(7 * 7);
    assert!(posts.iter().all(|p| p.date >= from && p.date < to));
}

#[test]
fn block_intensity_is_the_cell_mean() {
    // 20 × 20 × 3 = 1200 cells.
    let s = spec(vec![block(20, 20, 0, 3, 3.0)], 0.0);
    let posts = generate_synthetic(&s).unwrap();
    let mean = posts.len() as f64 / 1200.0;
    assert!((mean - 3.0).abs() <= 0.3, "mean {mean}");
}

#[test]
fn disjoint_vocabularies_give_disjoint_titles() {
    let mut a = block(10, 15, 0, 3, 1.0);
    a.theme = ["exploit", "payload", "shellcode", "overflow"].map(String::from).to_vec();
    let mut b = block(10, 15, 5, 3, 1.0);
    b.theme = ["cheat", "aimbot", "wallhack", "injector"].map(String::from).to_vec();
    let s = spec(vec![a, b], 0.1);
    let posts = generate_synthetic(&s).unwrap();
    let titles = |range: std::ops::Range<usize>| -> BTreeSet<String> {
        let names: BTreeSet<String> = range.map(thread_name).collect();
        let mut seen = BTreeSet::new();
        let mut words = BTreeSet::new();
        for p in &posts {
            if names.contains(&p.thread_id) && seen.insert(p.thread_id.clone()) {
                words.extend(tokenize(p.content.lines().next().unwrap_or("")));
            }
        }
        words
    };
    let layout = s.layout().unwrap();
    let (wa, wb) = (titles(layout[0].threads.clone()), titles(layout[1].threads.clone()));
    assert!(!wa.is_empty() && !wb.is_empty());
    assert!(wa.is_disjoint(&wb));
}

#[test]
fn overlapping_thread_sets_are_rejected() {
    let mut b = block(3, 5, 0, 2, 2.0);
    b.thread_offset = Some(2);
    let err = generate_synthetic(&spec(vec![block(3, 5, 0, 2, 2.0), b], 0.0)).unwrap_err();
    assert!(matches!(err, Error::InvalidSpec(_)));
}
