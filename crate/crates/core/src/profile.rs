//! Content and behavior profiles of clusters.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cluster::{activity_of, Cluster};
use crate::ingest::PostTable;
use crate::text::{tokenize, word_count};
use crate::{Error, Result};

pub const DEFAULT_KEYWORDS: usize = 50;
pub const DEFAULT_MIX_RANGE: f64 = 0.02;
pub const DEFAULT_G_FLOOR: f64 = 0.05;
pub const GENERAL_LABEL: &str = "G";
pub const MIX_LABEL: &str = "Mix";
pub const DEFAULT_DBSCAN_EPS: f64 = 0.5;
pub const DEFAULT_DBSCAN_MIN_PTS: usize = 3;

/// Slack for score comparisons that are specified at two decimals.
const SCORE_SLACK: f64 = 1e-12;

/// Document frequencies over the first posts of every thread in a forum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocumentFrequencies {
    documents: usize,
    df: BTreeMap<String, usize>,
}

impl DocumentFrequencies {
    pub fn from_table(table: &PostTable) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in 0..table.thread_count() {
            let content = &table.records()[table.first_post_of(t)].content;
            let terms: BTreeSet<String> = tokenize(content).into_iter().collect();
            for term in terms {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        Self {
            documents: table.thread_count(),
            df,
        }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// `ln(D / df)`, or 0 for a term no document contains.
    pub fn idf(&self, term: &str) -> f64 {
        match self.df(term) {
            0 => 0.0,
            n => libm::log(self.documents as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub cluster_id: usize,
    /// `(term, tf·idf)`, score descending, ties alphabetical.
    pub keywords: Vec<(String, f64)>,
}

impl KeywordSet {
    pub fn terms(&self) -> BTreeSet<&str> {
        self.keywords.iter().map(|(t, _)| t.as_str()).collect()
    }
}

/// Top-`n` TF-IDF terms of the cluster document (the first posts of its
/// threads). Terms scoring zero are not reported.
pub fn cluster_keywords(c: &Cluster, table: &PostTable, df: &DocumentFrequencies, n: usize) -> KeywordSet {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for &(t, _) in &c.threads {
        for term in tokenize(&table.records()[table.first_post_of(t)].content) {
            *tf.entry(term).or_insert(0) += 1;
        }
    }
    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .map(|(term, count)| {
            let s = count as f64 * df.idf(&term);
            (term, s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    if scored.is_empty() {
        log::warn!("cluster {} has no keywords after filtering", c.cluster_id);
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    KeywordSet {
        cluster_id: c.cluster_id,
        keywords: scored,
    }
}

/// A user-defined class: a label and its bag of words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDefinition {
    pub label: String,
    pub bag: BTreeSet<String>,
}

impl ClassDefinition {
    pub fn new<I, S>(label: &str, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            label: label.to_string(),
            bag: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }
}

/// Rejects empty bags, duplicate labels, and fewer than two classes.
pub fn validate_classes(classes: &[ClassDefinition]) -> Result<()> {
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("at least two classes are required".into()));
    }
    let mut seen = BTreeSet::new();
    for c in classes {
        if c.bag.is_empty() {
            return Err(Error::InvalidParameter(alloc::format!("class `{}` has an empty bag", c.label)));
        }
        if !seen.insert(c.label.as_str()) {
            return Err(Error::InvalidParameter(alloc::format!("duplicate class label `{}`", c.label)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub label: String,
    /// Jaccard score per class, in declared class order.
    pub scores: Vec<(String, f64)>,
    pub is_mix: bool,
    /// Classes within the mix range of the best score, when mixed.
    pub tied: Vec<String>,
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Labels a keyword set by Jaccard similarity against each class bag.
///
/// The label is the general class when the best score is below `g_floor`.
/// Otherwise, when another class is within `mix_range` of the best, the
/// cluster is mixed and every class within range is reported. Equal scores
/// resolve to the earlier declared class.
pub fn label_cluster(kw: &KeywordSet, classes: &[ClassDefinition], mix_range: f64, g_floor: f64) -> Result<ClusterLabel> {
    validate_classes(classes)?;
    let terms: BTreeSet<String> = kw.keywords.iter().map(|(t, _)| t.clone()).collect();
    let scores: Vec<(String, f64)> = classes
        .iter()
        .map(|c| (c.label.clone(), jaccard(&terms, &c.bag)))
        .collect();
    let mut best = 0;
    for (ix, (_, s)) in scores.iter().enumerate() {
        if *s > scores[best].1 {
            best = ix;
        }
    }
    let top = scores[best].1;
    if top < g_floor {
        return Ok(ClusterLabel {
            label: GENERAL_LABEL.to_string(),
            scores,
            is_mix: false,
            tied: Vec::new(),
        });
    }
    let tied: Vec<String> = scores
        .iter()
        .filter(|(_, s)| top - s <= mix_range + SCORE_SLACK)
        .map(|(l, _)| l.clone())
        .collect();
    let is_mix = tied.len() > 1;
    Ok(ClusterLabel {
        label: if is_mix { MIX_LABEL.to_string() } else { scores[best].0.clone() },
        scores,
        is_mix,
        tied: if is_mix { tied } else { Vec::new() },
    })
}

pub const METRIC_COUNT: usize = 10;

pub const METRIC_NAMES: [&str; METRIC_COUNT] = [
    "m1_post_length_per_user",
    "m2_threads_initiated_per_user",
    "m3_comment_thread_ratio_per_user",
    "m4_comments_per_user",
    "m5_comments_per_thread",
    "m6_active_days_per_thread",
    "m7_first_post_length_per_initiator",
    "m8_users_per_thread",
    "m9_duration_days",
    "m10_active_day_percentage",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub cluster_id: usize,
    pub metrics: [f64; METRIC_COUNT],
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// The ten behavior metrics over a cluster post set (record indices).
///
/// Lengths are in Unicode words. Every post counts as a comment. Per-user
/// averages run over the users who posted in the set, per-thread averages
/// over its threads; the first-post length averages over the users who
/// started at least one thread of the set and is 0 when nobody did.
pub fn behavior_profile(cluster_id: usize, posts: &[usize], table: &PostTable) -> Result<BehaviorProfile> {
    let activity = activity_of(posts.to_vec(), table).ok_or(Error::InconsistentCluster(cluster_id))?;
    let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut by_thread: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in posts {
        by_user.entry(table.user_of(p)).or_default().push(p);
        by_thread.entry(table.thread_of(p)).or_default().push(p);
    }
    let mut started: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &t in by_thread.keys() {
        started.entry(table.starter_of(t)).or_default().push(t);
    }
    let initiated = |u: usize| -> &[usize] { started.get(&u).map_or(&[], Vec::as_slice) };
    let length = |p: usize| word_count(&table.records()[p].content) as f64;

    let m1 = mean(by_user.values().map(|ps| mean(ps.iter().map(|&p| length(p)))));
    let m2 = mean(by_user.keys().map(|&u| initiated(u).len() as f64));
    let m3 = mean(by_user.values().map(|ps| {
        let threads: BTreeSet<usize> = ps.iter().map(|&p| table.thread_of(p)).collect();
        ps.len() as f64 / threads.len() as f64
    }));
    let m4 = mean(by_user.values().map(|ps| ps.len() as f64));
    let m5 = mean(by_thread.values().map(|ps| ps.len() as f64));
    let m6 = mean(by_thread.values().map(|ps| {
        let days: BTreeSet<NaiveDate> = ps.iter().map(|&p| table.records()[p].date).collect();
        days.len() as f64
    }));
    let m7 = mean(by_user.keys().filter_map(|&u| {
        let ts = initiated(u);
        (!ts.is_empty()).then(|| mean(ts.iter().map(|&t| length(table.first_post_of(t)))))
    }));
    let m8 = mean(by_thread.values().map(|ps| {
        let users: BTreeSet<usize> = ps.iter().map(|&p| table.user_of(p)).collect();
        users.len() as f64
    }));
    Ok(BehaviorProfile {
        cluster_id,
        metrics: [
            m1,
            m2,
            m3,
            m4,
            m5,
            m6,
            m7,
            m8,
            activity.duration_days as f64,
            activity.active_day_percentage,
        ],
    })
}

/// Per-metric min-max scaling across profiles; constant metrics map to 0.
pub fn normalize_profiles(profiles: &[BehaviorProfile]) -> Vec<[f64; METRIC_COUNT]> {
    let mut out = vec![[0.0; METRIC_COUNT]; profiles.len()];
    for m in 0..METRIC_COUNT {
        let lo = profiles.iter().map(|p| p.metrics[m]).fold(f64::INFINITY, f64::min);
        let hi = profiles.iter().map(|p| p.metrics[m]).fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            continue;
        }
        for (row, p) in out.iter_mut().zip(profiles) {
            row[m] = (p.metrics[m] - lo) / (hi - lo);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Row indices labeled noise, ascending.
    pub anomalies: Vec<usize>,
    /// Too few rows to run the detector; every row is listed in `anomalies`.
    pub unlabelable: bool,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// DBSCAN noise points. A point is a core point when at least `min_pts`
/// points, itself included, lie within distance `eps`; noise points are
/// neither core nor within `eps` of a core point.
pub fn detect_anomalies<R: AsRef<[f64]>>(rows: &[R], eps: f64, min_pts: usize) -> AnomalyReport {
    if rows.len() < min_pts {
        return AnomalyReport {
            anomalies: (0..rows.len()).collect(),
            unlabelable: true,
        };
    }
    let near = |a: usize, b: usize| euclidean(rows[a].as_ref(), rows[b].as_ref()) <= eps;
    let core: Vec<bool> = (0..rows.len())
        .map(|a| (0..rows.len()).filter(|&b| near(a, b)).count() >= min_pts)
        .collect();
    let anomalies = (0..rows.len())
        .filter(|&a| !core[a] && !(0..rows.len()).any(|b| core[b] && near(a, b)))
        .collect();
    AnomalyReport {
        anomalies,
        unlabelable: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreePoint {
    pub cluster_id: usize,
    pub x: f64,
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScreeData {
    /// x = users, y = threads.
    pub threads_vs_users: Vec<ScreePoint>,
    /// x = duration in days, y = percentage of active days.
    pub active_days_vs_duration: Vec<ScreePoint>,
}

/// Scree points per cluster. `profiles` and `labels` are parallel to
/// `clusters`.
pub fn scree_data(clusters: &[Cluster], profiles: &[BehaviorProfile], labels: &[ClusterLabel]) -> Result<ScreeData> {
    if profiles.len() != clusters.len() || labels.len() != clusters.len() {
        return Err(Error::ShapeMismatch("scree inputs must be parallel to the clusters".into()));
    }
    let mut out = ScreeData::default();
    for ((c, p), l) in clusters.iter().zip(profiles).zip(labels) {
        out.threads_vs_users.push(ScreePoint {
            cluster_id: c.cluster_id,
            x: c.users.len() as f64,
            y: c.threads.len() as f64,
            label: l.label.clone(),
        });
        out.active_days_vs_duration.push(ScreePoint {
            cluster_id: c.cluster_id,
            x: p.metrics[8],
            y: p.metrics[9],
            label: l.label.clone(),
        });
    }
    Ok(out)
}

/// Points for an arbitrary pair of metrics (indices into `METRIC_NAMES`).
pub fn metric_pairing(profiles: &[BehaviorProfile], labels: &[ClusterLabel], x: usize, y: usize) -> Result<Vec<ScreePoint>> {
    if x >= METRIC_COUNT || y >= METRIC_COUNT {
        return Err(Error::InvalidParameter(alloc::format!("metric index out of range: ({x}, {y})")));
    }
    if profiles.len() != labels.len() {
        return Err(Error::ShapeMismatch("labels must be parallel to the profiles".into()));
    }
    Ok(profiles
        .iter()
        .zip(labels)
        .map(|(p, l)| ScreePoint {
            cluster_id: p.cluster_id,
            x: p.metrics[x],
            y: p.metrics[y],
            label: l.label.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PostRecord;

    fn rec(thread: &str, post: &str, user: &str, day: u32, content: &str) -> PostRecord {
        PostRecord {
            forum_id: "f".to_string(),
            thread_id: thread.to_string(),
            post_id: post.to_string(),
            username: user.to_string(),
            date: NaiveDate::from_ymd_opt(2024, 3, day).unwrap(),
            content: content.to_string(),
        }
    }

    fn table(recs: Vec<PostRecord>) -> PostTable {
        PostTable::new(recs, NaiveDate::from_ymd_opt(2030, 1, 1).unwrap()).unwrap()
    }

    fn kw(terms: &[&str]) -> KeywordSet {
        KeywordSet {
            cluster_id: 0,
            keywords: terms.iter().map(|t| (t.to_string(), 1.0)).collect(),
        }
    }

    #[test]
    fn jaccard_half() {
        let classes = [ClassDefinition::new("X", ["bbb", "ccc", "ddd"]), ClassDefinition::new("Y", ["zzz"])];
        let l = label_cluster(&kw(&["aaa", "bbb", "ccc"]), &classes, 0.02, 0.05).unwrap();
        assert_eq!(l.scores[0].1, 0.5);
        assert_eq!(l.label, "X");
        assert!(!l.is_mix);
    }

    #[test]
    fn identical_bag_scores_one() {
        let classes = [ClassDefinition::new("X", ["aaa", "bbb"]), ClassDefinition::new("Y", ["zzz"])];
        let l = label_cluster(&kw(&["aaa", "bbb"]), &classes, 0.02, 0.05).unwrap();
        assert_eq!((l.label.as_str(), l.scores[0].1), ("X", 1.0));
    }

    #[test]
    fn class_validation() {
        let one = [ClassDefinition::new("X", ["aaa"])];
        assert!(label_cluster(&kw(&["aaa"]), &one, 0.02, 0.05).is_err());
        let dup = [ClassDefinition::new("X", ["aaa"]), ClassDefinition::new("X", ["bbb"])];
        assert!(validate_classes(&dup).is_err());
        let empty = [ClassDefinition::new("X", ["aaa"]), ClassDefinition::new("Y", Vec::<&str>::new())];
        assert!(validate_classes(&empty).is_err());
    }

    #[test]
    fn dbscan_isolated_row() {
        let mut rows = vec![[0.1, 0.2]; 5];
        rows.push([5.0, 5.0]);
        let r = detect_anomalies(&rows, 0.5, 3);
        assert_eq!(r.anomalies, vec![5]);
        assert!(!r.unlabelable);
        assert!(detect_anomalies(&vec![[1.0, 1.0]; 4], 0.5, 3).anomalies.is_empty());
        let few = detect_anomalies(&[[0.0], [9.0]], 0.5, 3);
        assert!(few.unlabelable);
        assert_eq!(few.anomalies, vec![0, 1]);
    }

    #[test]
    fn border_points_are_not_noise() {
        // 0.9 has only one neighbor but sits within reach of the core at 0.45.
        let rows = [[0.0], [0.0], [0.0], [0.45], [0.9], [3.0]];
        assert_eq!(detect_anomalies(&rows, 0.5, 4).anomalies, vec![5]);
    }

    #[test]
    fn single_post_profile() {
        let t = table(vec![rec("t1", "p1", "alice", 1, "one two three four five six")]);
        let p = behavior_profile(0, &[0], &t).unwrap();
        assert_eq!(p.metrics, [6.0, 1.0, 1.0, 1.0, 1.0, 1.0, 6.0, 1.0, 0.0, 100.0]);
    }

    #[test]
    fn commenter_only_user() {
        let t = table(vec![
            rec("t1", "p1", "alice", 1, "aaa bbb"),
            rec("t1", "p2", "bob", 2, "ccc"),
            rec("t1", "p3", "bob", 4, "ddd eee fff"),
        ]);
        let p = behavior_profile(0, &[0, 1, 2], &t).unwrap();
        // alice started one thread, bob none.
        assert_eq!(p.metrics[1], 0.5);
        assert_eq!(p.metrics[3], 1.5);
        assert_eq!(p.metrics[0], (2.0 + 2.0) / 2.0);
        assert_eq!(p.metrics[6], 2.0);
        assert_eq!(p.metrics[8], 3.0);
        assert_eq!(p.metrics[9], 75.0);
        assert!(behavior_profile(0, &[], &t).is_err());
    }

    #[test]
    fn normalization() {
        let prof = |v: f64| BehaviorProfile {
            cluster_id: 0,
            metrics: [v; METRIC_COUNT],
        };
        assert_eq!(normalize_profiles(&[prof(2.0), prof(4.0)])[1][0], 1.0);
        let three = normalize_profiles(&[prof(1.0), prof(2.0), prof(3.0)]);
        assert_eq!([three[0][3], three[1][3], three[2][3]], [0.0, 0.5, 1.0]);
        assert_eq!(normalize_profiles(&[prof(7.0)])[0], [0.0; METRIC_COUNT]);
    }

    #[test]
    fn zero_idf_terms_never_rank() {
        let t = table(vec![rec("t1", "p1", "a", 1, "shared alpha"), rec("t2", "p2", "b", 1, "shared beta")]);
        let df = DocumentFrequencies::from_table(&t);
        let c = Cluster {
            cluster_id: 0,
            energy: 1.0,
            users: vec![(0, 1.0), (1, 1.0)],
            threads: vec![(0, 1.0), (1, 1.0)],
            weeks: vec![(0, 1.0)],
        };
        let k = cluster_keywords(&c, &t, &df, 50);
        assert!(k.keywords.iter().all(|(w, _)| w != "shared"));
        assert_eq!(k.terms().into_iter().collect::<Vec<_>>(), ["alpha", "beta"]);
    }
}
