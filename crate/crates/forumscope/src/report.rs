//! Serialized views: cluster JSON, TableView CSV, StoryLine HTML, heat map
//! CSV, scree data and word clouds.

use chrono::NaiveDate;
use forumscope_core::cluster::{Cluster, ClusterActivity};
use forumscope_core::ingest::{PostTable, TimeIndex};
use forumscope_core::profile::{
    normalize_profiles, AnomalyReport, BehaviorProfile, ClusterLabel, KeywordSet, ScreeData, METRIC_COUNT,
    METRIC_NAMES,
};
use forumscope_core::topics::{StoryLine, TableViewRow};
use html_escape::encode_text;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TABLEVIEW_COLUMNS: [&str; 7] =
    ["forum_cid", "n_users", "type", "top_threads", "top_users", "top_dates", "dominant_topics"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStrength {
    pub name: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadStrength {
    pub id: String,
    pub title: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekStrength {
    pub slot: usize,
    pub start_date: NaiveDate,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub cluster_id: usize,
    pub energy: f64,
    pub users: Vec<UserStrength>,
    pub threads: Vec<ThreadStrength>,
    pub weeks: Vec<WeekStrength>,
}

impl ClusterJson {
    pub fn new(c: &Cluster, table: &PostTable, time: &TimeIndex) -> Self {
        ClusterJson {
            cluster_id: c.cluster_id,
            energy: c.energy,
            users: c
                .users
                .iter()
                .map(|&(u, strength)| UserStrength {
                    name: table.users().name(u).to_string(),
                    strength,
                })
                .collect(),
            threads: c
                .threads
                .iter()
                .map(|&(t, strength)| ThreadStrength {
                    id: table.threads().name(t).to_string(),
                    title: table.title_of(t).to_string(),
                    strength,
                })
                .collect(),
            weeks: c
                .weeks
                .iter()
                .map(|&(slot, strength)| WeekStrength {
                    slot,
                    start_date: time.slot_start(slot),
                    strength,
                })
                .collect(),
        }
    }

    /// Resolves names back to indices of `table`.
    pub fn to_cluster(&self, table: &PostTable) -> Result<Cluster> {
        let missing = |kind: &'static str, id: &str| Error::NotFound { kind, id: id.to_string() };
        Ok(Cluster {
            cluster_id: self.cluster_id,
            energy: self.energy,
            users: self
                .users
                .iter()
                .map(|u| Ok((table.users().get(&u.name).ok_or_else(|| missing("user", &u.name))?, u.strength)))
                .collect::<Result<_>>()?,
            threads: self
                .threads
                .iter()
                .map(|t| Ok((table.threads().get(&t.id).ok_or_else(|| missing("thread", &t.id))?, t.strength)))
                .collect::<Result<_>>()?,
            weeks: self.weeks.iter().map(|w| (w.slot, w.strength)).collect(),
        })
    }
}

/// Activity without the post list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub cluster_id: usize,
    pub posts: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub duration_days: i64,
    pub active_days: usize,
    pub active_day_percentage: f64,
}

impl ActivitySummary {
    pub fn new(cluster_id: usize, a: &ClusterActivity) -> Self {
        ActivitySummary {
            cluster_id,
            posts: a.posts.len(),
            first_date: a.first_date,
            last_date: a.last_date,
            duration_days: a.duration_days,
            active_days: a.active_days,
            active_day_percentage: a.active_day_percentage,
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| Error::io("<csv>", e.into());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

/// List cells are joined with `; `; topic word lists with spaces.
pub fn tableview_csv(rows: &[TableViewRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &TABLEVIEW_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.forum_cid.clone(),
                r.n_users.to_string(),
                r.label.clone(),
                r.top_threads.join("; "),
                r.top_users.join("; "),
                r.top_dates.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
                r.dominant_topics.iter().map(|t| t.join(" ")).collect::<Vec<_>>().join("; "),
            ]
        }),
    )
}

fn metric_header(prefix: &str, names: impl Iterator<Item = String>) -> Vec<String> {
    std::iter::once(prefix.to_string()).chain(names).collect()
}

/// Raw metric values per cluster.
pub fn profiles_csv(profiles: &[BehaviorProfile]) -> Result<Vec<u8>> {
    let header = metric_header("cluster_id", METRIC_NAMES.iter().map(|s| s.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        profiles.iter().map(|p| {
            std::iter::once(p.cluster_id.to_string()).chain(p.metrics.iter().map(|v| v.to_string())).collect()
        }),
    )
}

/// Min-max normalized metrics, columns `m1..m10`.
pub fn heatmap_csv(profiles: &[BehaviorProfile]) -> Result<Vec<u8>> {
    let header = metric_header("cluster_id", (1..=METRIC_COUNT).map(|m| format!("m{m}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let normalized = normalize_profiles(profiles);
    csv_bytes(
        &header,
        profiles.iter().zip(&normalized).map(|(p, row)| {
            std::iter::once(p.cluster_id.to_string()).chain(row.iter().map(|v| v.to_string())).collect()
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub cluster_id: usize,
    pub label: String,
    pub raw: [f64; METRIC_COUNT],
    pub normalized: [f64; METRIC_COUNT],
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub metrics: Vec<String>,
    pub rows: Vec<HeatmapRow>,
    /// Too few clusters for density-based anomaly detection.
    pub unlabelable: bool,
}

pub fn heatmap(profiles: &[BehaviorProfile], labels: &[ClusterLabel], anomalies: &AnomalyReport) -> Heatmap {
    let normalized = normalize_profiles(profiles);
    Heatmap {
        metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        rows: profiles
            .iter()
            .zip(normalized)
            .enumerate()
            .map(|(ix, (p, normalized))| HeatmapRow {
                cluster_id: p.cluster_id,
                label: labels.get(ix).map(|l| l.label.clone()).unwrap_or_default(),
                raw: p.metrics,
                normalized,
                anomalous: anomalies.anomalies.contains(&ix),
            })
            .collect(),
        unlabelable: anomalies.unlabelable,
    }
}

pub fn scree_csv(scree: &ScreeData) -> Result<Vec<u8>> {
    let series = [
        ("threads_vs_users", &scree.threads_vs_users),
        ("active_days_vs_duration", &scree.active_days_vs_duration),
    ];
    csv_bytes(
        &["series", "cluster_id", "x", "y", "label"],
        series.iter().flat_map(|(name, points)| {
            points.iter().map(move |p| {
                vec![name.to_string(), p.cluster_id.to_string(), p.x.to_string(), p.y.to_string(), p.label.clone()]
            })
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloud {
    pub cluster_id: usize,
    pub words: Vec<WeightedTerm>,
}

pub fn word_clouds(keywords: &[KeywordSet]) -> Vec<WordCloud> {
    keywords
        .iter()
        .map(|k| WordCloud {
            cluster_id: k.cluster_id,
            words: k
                .keywords
                .iter()
                .map(|(term, weight)| WeightedTerm {
                    term: term.clone(),
                    weight: *weight,
                })
                .collect(),
        })
        .collect()
}

pub fn keywords_from_clouds(clouds: &[WordCloud]) -> Vec<KeywordSet> {
    clouds
        .iter()
        .map(|c| KeywordSet {
            cluster_id: c.cluster_id,
            keywords: c.words.iter().map(|w| (w.term.clone(), w.weight)).collect(),
        })
        .collect()
}

/// Self-contained timeline fragment with inline styles.
pub fn storyline_html(s: &StoryLine) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<section class=\"storyline\" data-cluster=\"{}\" style=\"font-family:sans-serif;max-width:48em\">\n",
        s.cluster_id
    ));
    out.push_str(&format!("  <h2 style=\"font-size:1.2em\">Cluster {} storyline</h2>\n", s.cluster_id));
    out.push_str("  <ul class=\"topics\" style=\"list-style:none;padding:0\">\n");
    for t in &s.dominant_topics {
        out.push_str(&format!(
            "    <li data-topic=\"{}\"><strong>Topic {}</strong> ({:.0}% of threads): {}</li>\n",
            t.topic,
            t.topic,
            100.0 * t.share,
            encode_text(&t.words.join(", "))
        ));
    }
    out.push_str("  </ul>\n  <ol class=\"timeline\" style=\"border-left:2px solid #888;padding-left:1em\">\n");
    for e in &s.entries {
        out.push_str(&format!(
            "    <li data-thread=\"{}\" data-topic=\"{}\"><time datetime=\"{}\">{}</time> {} <small>(score {:.3})</small></li>\n",
            html_escape::encode_double_quoted_attribute(&e.thread_id),
            e.topic,
            e.date,
            e.date,
            encode_text(&e.title),
            e.score
        ));
    }
    out.push_str("  </ol>\n</section>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use forumscope_core::topics::{StoryEntry, StoryTopic};

    #[test]
    fn tableview_header_is_exact() {
        let bytes = tableview_csv(&[]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "forum_cid,n_users,type,top_threads,top_users,top_dates,dominant_topics\n");
    }

    #[test]
    fn tableview_row_cells() {
        let row = TableViewRow {
            forum_cid: "OC-7".into(),
            n_users: 34,
            label: "P".into(),
            top_threads: vec!["Selling, cheap".into(), "VIP".into()],
            top_users: vec!["a".into()],
            top_dates: vec![NaiveDate::from_ymd_opt(2016, 1, 2).unwrap()],
            dominant_topics: vec![vec!["buy".into(), "sell".into()], vec!["vip".into()]],
        };
        let text = String::from_utf8(tableview_csv(&[row]).unwrap()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "OC-7,34,P,\"Selling, cheap; VIP\",a,2016-01-02,buy sell; vip");
    }

    #[test]
    fn storyline_html_escapes_titles() {
        let s = StoryLine {
            cluster_id: 2,
            dominant_topics: vec![StoryTopic { topic: 0, words: vec!["ransom".into()], share: 0.81 }],
            entries: vec![StoryEntry {
                thread: 0,
                thread_id: "t\"1".into(),
                title: "<b>locker</b> & co".into(),
                date: NaiveDate::from_ymd_opt(2014, 6, 1).unwrap(),
                topic: 0,
                score: 0.9,
            }],
        };
        let html = storyline_html(&s);
        assert!(html.contains("&lt;b&gt;locker&lt;/b&gt; &amp; co"));
        assert!(html.contains("data-thread=\"t&quot;1\""));
        assert!(html.contains("(81% of threads)"));
        assert!(!html.contains("<script"));
    }
}
