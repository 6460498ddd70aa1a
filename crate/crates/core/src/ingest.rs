//! Forum post records, entity indices, time discretization and tensor
//! construction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::tensor::SparseTensor3;
use crate::{Error, Result};

/// Earliest calendar date accepted for a post.
pub const EARLIEST_DATE: NaiveDate = match NaiveDate::from_ymd_opt(1990, 1, 1) {
    Some(d) => d,
    None => panic!("invalid constant date"),
};

/// One forum post: the raw `(forum, thread, post, user, date, content)` tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub forum_id: String,
    pub thread_id: String,
    pub post_id: String,
    pub username: String,
    pub date: NaiveDate,
    pub content: String,
}

/// Dense bidirectional map between entity names and `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityIndex {
    names: Vec<String>,
    lookup: BTreeMap<String, usize>,
}

impl EntityIndex {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&ix) = self.lookup.get(name) {
            return ix;
        }
        let ix = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), ix);
        ix
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, ix: usize) -> &str {
        &self.names[ix]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Indexed collection of posts.
///
/// Users are indexed in order of first appearance, as are threads. Usernames
/// are NFC-normalized and compared case-sensitively.
#[derive(Debug, Clone, PartialEq)]
pub struct PostTable {
    records: Vec<PostRecord>,
    users: EntityIndex,
    threads: EntityIndex,
    post_user: Vec<usize>,
    post_thread: Vec<usize>,
    first_post: Vec<usize>,
    min_date: Option<NaiveDate>,
    max_date: Option<NaiveDate>,
}

/// Basic forum statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForumStats {
    pub users: usize,
    pub threads: usize,
    pub posts: usize,
    pub active_days: usize,
}

impl PostTable {
    /// Validates and indexes `records`. Dates later than `latest` (normally the
    /// ingestion date) or earlier than 1990-01-01 are rejected.
    pub fn new(mut records: Vec<PostRecord>, latest: NaiveDate) -> Result<Self> {
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        let mut duplicates: BTreeSet<String> = BTreeSet::new();
        for (ix, rec) in records.iter_mut().enumerate() {
            let row = ix + 1;
            for (field, value) in [
                ("forum_id", &rec.forum_id),
                ("thread_id", &rec.thread_id),
                ("post_id", &rec.post_id),
                ("username", &rec.username),
            ] {
                if value.trim().is_empty() {
                    return Err(Error::Field {
                        row,
                        field,
                        reason: "empty required field".to_string(),
                    });
                }
            }
            if rec.date < EARLIEST_DATE || rec.date > latest {
                return Err(Error::Field {
                    row,
                    field: "date",
                    reason: alloc::format!(
                        "{} outside accepted range {}..={}",
                        rec.date,
                        EARLIEST_DATE,
                        latest
                    ),
                });
            }
            rec.username = rec.username.nfc().collect();
            if !seen.insert((rec.forum_id.clone(), rec.post_id.clone())) {
                duplicates.insert(rec.post_id.clone());
            }
        }
        if !duplicates.is_empty() {
            return Err(Error::DuplicatePostIds(duplicates.into_iter().collect()));
        }

        let mut users = EntityIndex::default();
        let mut threads = EntityIndex::default();
        let mut post_user = Vec::with_capacity(records.len());
        let mut post_thread = Vec::with_capacity(records.len());
        let mut first_post: Vec<usize> = Vec::new();
        let mut min_date: Option<NaiveDate> = None;
        let mut max_date: Option<NaiveDate> = None;
        for (ix, rec) in records.iter().enumerate() {
            let u = users.intern(&rec.username);
            let t = threads.intern(&rec.thread_id);
            post_user.push(u);
            post_thread.push(t);
            if t == first_post.len() {
                first_post.push(ix);
            } else {
                let cur = &records[first_post[t]];
                if (rec.date, rec.post_id.as_str()) < (cur.date, cur.post_id.as_str()) {
                    first_post[t] = ix;
                }
            }
            min_date = Some(min_date.map_or(rec.date, |d| d.min(rec.date)));
            max_date = Some(max_date.map_or(rec.date, |d| d.max(rec.date)));
        }

        Ok(Self {
            records,
            users,
            threads,
            post_user,
            post_thread,
            first_post,
            min_date,
            max_date,
        })
    }

    pub fn records(&self) -> &[PostRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn users(&self) -> &EntityIndex {
        &self.users
    }

    pub fn threads(&self) -> &EntityIndex {
        &self.threads
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    /// User index of record `post`.
    pub fn user_of(&self, post: usize) -> usize {
        self.post_user[post]
    }

    /// Thread index of record `post`.
    pub fn thread_of(&self, post: usize) -> usize {
        self.post_thread[post]
    }

    /// Record index of the first post of `thread`.
    pub fn first_post_of(&self, thread: usize) -> usize {
        self.first_post[thread]
    }

    pub fn is_first_post(&self, post: usize) -> bool {
        self.first_post[self.post_thread[post]] == post
    }

    /// User index of the thread starter.
    pub fn starter_of(&self, thread: usize) -> usize {
        self.post_user[self.first_post[thread]]
    }

    /// Thread title: the first non-empty line of the thread's first post.
    pub fn title_of(&self, thread: usize) -> &str {
        let content = &self.records[self.first_post[thread]].content;
        content
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
    }

    pub fn min_date(&self) -> Option<NaiveDate> {
        self.min_date
    }

    pub fn max_date(&self) -> Option<NaiveDate> {
        self.max_date
    }

    pub fn stats(&self) -> ForumStats {
        forum_stats(self)
    }
}

/// Users, threads, posts and active days (distinct dates with at least one post).
pub fn forum_stats(table: &PostTable) -> ForumStats {
    let days: BTreeSet<NaiveDate> = table.records.iter().map(|r| r.date).collect();
    ForumStats {
        users: table.user_count(),
        threads: table.thread_count(),
        posts: table.len(),
        active_days: days.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    #[default]
    Week,
    Month,
}

impl core::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(Self::Day),
            "week" => Ok(Self::Week),
            "month" => Ok(Self::Month),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unknown granularity `{other}`"
            ))),
        }
    }
}

impl core::fmt::Display for Granularity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Day => "day",
            Self::Week => "week",
            Self::Month => "month",
        })
    }
}

/// Mapping from calendar dates to time slots. Weeks are runs of 7 days
/// starting at `origin`, not ISO weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeIndex {
    pub granularity: Granularity,
    pub origin: NaiveDate,
    pub slot_count: usize,
}

fn month_number(d: NaiveDate) -> i64 {
    i64::from(d.year()) * 12 + i64::from(d.month0())
}

impl TimeIndex {
    /// Slot of `date`. Dates before the origin map below zero and are the
    /// caller's responsibility.
    pub fn slot(&self, date: NaiveDate) -> i64 {
        match self.granularity {
            Granularity::Day => (date - self.origin).num_days(),
            Granularity::Week => (date - self.origin).num_days().div_euclid(7),
            Granularity::Month => month_number(date) - month_number(self.origin),
        }
    }

    /// First calendar day of `slot`.
    pub fn slot_start(&self, slot: usize) -> NaiveDate {
        match self.granularity {
            Granularity::Day => self.origin + chrono::Days::new(slot as u64),
            Granularity::Week => self.origin + chrono::Days::new(7 * slot as u64),
            Granularity::Month => {
                let m = month_number(self.origin) + slot as i64;
                if slot == 0 {
                    return self.origin;
                }
                NaiveDate::from_ymd_opt((m / 12) as i32, (m % 12) as u32 + 1, 1)
                    .unwrap_or(self.origin)
            }
        }
    }

    /// Whether `date` falls inside `slot`.
    pub fn contains(&self, slot: usize, date: NaiveDate) -> bool {
        date >= self.origin && self.slot(date) == slot as i64
    }
}

/// Builds the time index covering the table's date range.
pub fn discretize(table: &PostTable, granularity: Granularity) -> Result<TimeIndex> {
    let (min, max) = match (table.min_date, table.max_date) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NoTemporalExtent),
    };
    let mut time = TimeIndex {
        granularity,
        origin: min,
        slot_count: 0,
    };
    time.slot_count = time.slot(max) as usize + 1;
    Ok(time)
}

/// Counts posts per `(user, thread, slot)`.
pub fn build_tensor(table: &PostTable, time: &TimeIndex) -> SparseTensor3 {
    let mut counts: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (ix, rec) in table.records.iter().enumerate() {
        let k = time.slot(rec.date);
        debug_assert!(k >= 0 && (k as usize) < time.slot_count);
        *counts
            .entry((table.post_user[ix], table.post_thread[ix], k as usize))
            .or_insert(0.0) += 1.0;
    }
    let entries = counts
        .into_iter()
        .map(|((i, j, k), v)| (i, j, k, v))
        .collect();
    SparseTensor3::from_sorted_entries(
        (table.user_count(), table.thread_count(), time.slot_count),
        entries,
    )
}
