#![allow(dead_code)]

use chrono::NaiveDate;
use forumscope::pipeline::{RankChoice, RunConfig};
use forumscope::synth::{generate_synthetic, PlantedBlock, SyntheticSpec};
use forumscope_core::ingest::PostRecord;

pub fn block(users: usize, threads: usize, week_start: usize, weeks: usize, intensity: f64) -> PlantedBlock {
    PlantedBlock {
        users,
        threads,
        week_start,
        weeks,
        intensity,
        user_offset: None,
        thread_offset: None,
        theme: Vec::new(),
    }
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

/// Two planted blocks whose vocabularies come from the shipped A and T bags.
pub fn small_spec(seed: u64) -> SyntheticSpec {
    let mut a = block(8, 12, 2, 3, 1.5);
    a.theme = words(&["alert", "announce", "announcement", "changelog", "deadline", "event", "breaking", "coming"]);
    let mut t = block(8, 12, 10, 3, 1.5);
    t.theme = words(&["beginners", "basics", "code", "compile", "configure", "example", "guide", "explained"]);
    SyntheticSpec {
        forum_id: "SMALL".into(),
        users: 40,
        threads: 60,
        weeks: 16,
        start_date: NaiveDate::from_ymd_opt(2016, 2, 1).unwrap(),
        blocks: vec![a, t],
        noise_rate: 0.05,
        background_vocabulary: Vec::new(),
        seed,
    }
}

pub fn small_forum(seed: u64) -> Vec<PostRecord> {
    generate_synthetic(&small_spec(seed)).unwrap()
}

pub fn fast_config() -> RunConfig {
    RunConfig {
        rank: RankChoice::Fixed(2),
        seed: 3,
        ..RunConfig::default()
    }
}
