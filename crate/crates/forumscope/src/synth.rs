//! Planted-event synthetic forums.
//!
//! Each block is a set of users posting in a set of threads over a window of
//! weeks: every `(user, thread, week)` cell of the block draws a Poisson
//! number of posts with the block intensity. Background noise gives every
//! user a Poisson number of posts per week on uniformly random threads.
//! Thread titles and post bodies use the vocabulary of the block owning the
//! thread, or the background vocabulary.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use forumscope_core::ingest::PostRecord;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TITLE_WORDS: usize = 4;
const BODY_WORDS: usize = 8;
const DEFAULT_THEME_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBlock {
    pub users: usize,
    pub threads: usize,
    /// First week of the window.
    pub week_start: usize,
    /// Window length in weeks.
    pub weeks: usize,
    /// Expected posts per `(user, thread, week)` cell.
    pub intensity: f64,
    /// First user index; defaults to right after the previous block.
    #[serde(default)]
    pub user_offset: Option<usize>,
    /// First thread index; defaults to right after the previous block.
    #[serde(default)]
    pub thread_offset: Option<usize>,
    /// Title and body vocabulary; generated when empty.
    #[serde(default)]
    pub theme: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_forum")]
    pub forum_id: String,
    pub users: usize,
    pub threads: usize,
    pub weeks: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub blocks: Vec<PlantedBlock>,
    /// Expected background posts per user per week.
    pub noise_rate: f64,
    #[serde(default)]
    pub background_vocabulary: Vec<String>,
    pub seed: u64,
}

fn default_forum() -> String {
    "SYN".into()
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 5).unwrap()
}

/// Entity ranges of one block after offsets are resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub users: std::ops::Range<usize>,
    pub threads: std::ops::Range<usize>,
    pub weeks: std::ops::Range<usize>,
}

pub fn user_name(i: usize) -> String {
    format!("user{i:06}")
}

pub fn thread_name(j: usize) -> String {
    format!("thread{j:06}")
}

impl SyntheticSpec {
    pub fn layout(&self) -> Result<Vec<BlockLayout>> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        if self.weeks == 0 {
            return invalid("weeks must be >= 1".into());
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return invalid(format!("noise rate must be finite and >= 0, got {}", self.noise_rate));
        }
        let (mut next_user, mut next_thread) = (0, 0);
        let mut out: Vec<BlockLayout> = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            if block.users == 0 || block.threads == 0 || block.weeks == 0 {
                return invalid(format!("block {b} is empty"));
            }
            if !(block.intensity > self.noise_rate && block.intensity.is_finite()) {
                return invalid(format!("block {b} intensity {} must exceed the noise rate {}", block.intensity, self.noise_rate));
            }
            let u0 = block.user_offset.unwrap_or(next_user);
            let t0 = block.thread_offset.unwrap_or(next_thread);
            let layout = BlockLayout {
                users: u0..u0 + block.users,
                threads: t0..t0 + block.threads,
                weeks: block.week_start..block.week_start + block.weeks,
            };
            if layout.users.end > self.users || layout.threads.end > self.threads || layout.weeks.end > self.weeks {
                return invalid(format!("block {b} exceeds the forum dimensions"));
            }
            if let Some(other) = out
                .iter()
                .position(|o| o.threads.start < layout.threads.end && layout.threads.start < o.threads.end)
            {
                return invalid(format!("blocks {other} and {b} overlap in threads"));
            }
            next_user = layout.users.end;
            next_thread = layout.threads.end;
            out.push(layout);
        }
        Ok(out)
    }

    fn theme(&self, b: usize) -> Vec<String> {
        let given = &self.blocks[b].theme;
        if given.is_empty() {
            (0..DEFAULT_THEME_WORDS).map(|i| format!("topic{b}term{i}")).collect()
        } else {
            given.clone()
        }
    }

    fn background(&self) -> Vec<String> {
        if self.background_vocabulary.is_empty() {
            (0..4 * DEFAULT_THEME_WORDS).map(|i| format!("chatter{i}")).collect()
        } else {
            self.background_vocabulary.clone()
        }
    }
}

fn poisson(rate: f64) -> Option<Poisson<f64>> {
    (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"))
}

fn words(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> String {
    (0..n).map(|_| vocab.choose(rng).map(String::as_str).unwrap_or("")).collect::<Vec<_>>().join(" ")
}

/// Generates the post stream, sorted by date then post id.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<PostRecord>> {
    let layout = spec.layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // (week, day in week, user, thread) per post.
    let mut draws: Vec<(usize, u64, usize, usize)> = Vec::new();
    for (b, l) in layout.iter().enumerate() {
        let dist = poisson(spec.blocks[b].intensity).expect("validated intensity");
        for u in l.users.clone() {
            for t in l.threads.clone() {
                for w in l.weeks.clone() {
                    for _ in 0..dist.sample(&mut rng) as u64 {
                        draws.push((w, rng.random_range(0..7), u, t));
                    }
                }
            }
        }
    }
    if let (Some(dist), true) = (poisson(spec.noise_rate), spec.threads > 0) {
        for u in 0..spec.users {
            for w in 0..spec.weeks {
                for _ in 0..dist.sample(&mut rng) as u64 {
                    draws.push((w, rng.random_range(0..7), u, rng.random_range(0..spec.threads)));
                }
            }
        }
    }
    draws.sort_unstable();

    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (b, l) in layout.iter().enumerate() {
        for t in l.threads.clone() {
            owner.insert(t, b);
        }
    }
    let themes: Vec<Vec<String>> = (0..spec.blocks.len()).map(|b| spec.theme(b)).collect();
    let background = spec.background();
    let vocab = |t: usize| owner.get(&t).map_or(&background, |&b| &themes[b]);

    let mut titled = vec![false; spec.threads];
    let mut out = Vec::with_capacity(draws.len());
    for (n, (w, d, u, t)) in draws.into_iter().enumerate() {
        let body = words(&mut rng, vocab(t), BODY_WORDS);
        let content = if titled[t] {
            body
        } else {
            titled[t] = true;
            format!("{}\n{body}", words(&mut rng, vocab(t), TITLE_WORDS))
        };
        out.push(PostRecord {
            forum_id: spec.forum_id.clone(),
            thread_id: thread_name(t),
            post_id: format!("p{n:08}"),
            username: user_name(u),
            date: spec.start_date + Days::new(7 * w as u64 + d),
            content,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(users: usize, threads: usize, week_start: usize) -> PlantedBlock {
        PlantedBlock {
            users,
            threads,
            week_start,
            weeks: 2,
            intensity: 2.0,
            user_offset: None,
            thread_offset: None,
            theme: Vec::new(),
        }
    }

    fn spec(blocks: Vec<PlantedBlock>, noise_rate: f64) -> SyntheticSpec {
        SyntheticSpec {
            forum_id: default_forum(),
            users: 20,
            threads: 20,
            weeks: 10,
            start_date: default_start(),
            blocks,
            noise_rate,
            background_vocabulary: Vec::new(),
            seed: 3,
        }
    }

    #[test]
    fn overlapping_threads_rejected() {
        let mut b = block(2, 5, 0);
        b.thread_offset = Some(3);
        let err = generate_synthetic(&spec(vec![block(2, 5, 0), b], 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn intensity_must_exceed_noise() {
        let mut b = block(2, 2, 0);
        b.intensity = 0.01;
        assert!(generate_synthetic(&spec(vec![b], 0.05)).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let s = spec(vec![block(3, 4, 1), block(2, 2, 5)], 0.1);
        assert_eq!(generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
    }

    #[test]
    fn first_post_carries_title_line() {
        let posts = generate_synthetic(&spec(vec![block(3, 4, 1)], 0.0)).unwrap();
        let first = posts.iter().find(|p| p.thread_id == thread_name(0)).unwrap();
        assert!(first.content.contains('\n'));
        assert!(first.content.starts_with("topic0term"));
    }
}
