//! Title topic model, dominant topics, StoryLine and TableView.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, TopEntities};
use crate::ingest::PostTable;
use crate::profile::ClusterLabel;
use crate::text::tokenize;
use crate::{Error, Result};

pub const LDA_SWEEPS: usize = 500;
pub const LDA_BETA: f64 = 0.01;
pub const DEFAULT_TH_DOM: f64 = 0.70;
pub const DEFAULT_RT: usize = 5;
pub const DEFAULT_TOP_K: usize = 3;
/// Words reported per topic.
pub const TOPIC_WORDS: usize = 10;

const FOLD_IN_ITERATIONS: usize = 500;
const FOLD_IN_TOLERANCE: f64 = 1e-12;
const SHARE_SLACK: f64 = 1e-12;

/// `max(2, round(√threads))`.
pub fn topic_count(threads: usize) -> usize {
    (libm::round(libm::sqrt(threads as f64)) as usize).max(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topic_count: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: Vec<String>,
    /// Topic-word distributions, `topic_count × vocabulary.len()`.
    pub topic_word: Vec<Vec<f64>>,
    /// Highest-weight words per topic, weight descending, ties alphabetical.
    pub topics: Vec<Vec<(String, f64)>>,
    /// Thread index of each document; empty for models fitted on raw documents.
    pub threads: Vec<usize>,
    pub doc_topic: Vec<Vec<f64>>,
}

/// Default document-topic prior, `50 / k`.
pub fn default_alpha(k: usize) -> f64 {
    50.0 / k as f64
}

/// Collapsed Gibbs sampling LDA over tokenized documents with `β = 0.01`.
///
/// Topic-word distributions come from the final sample. Each document's
/// topic proportions are then the maximum-likelihood mixture weights of its
/// words under those distributions, so equal documents get equal
/// proportions.
pub fn fit_lda(docs: &[Vec<String>], k: usize, alpha: f64, sweeps: usize, seed: u64) -> Result<TopicModel> {
    if k == 0 {
        return Err(Error::InvalidParameter("topic count must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("alpha must be positive, got {alpha}")));
    }
    let mut index: BTreeMap<&str, usize> = docs.iter().flatten().map(|w| (w.as_str(), 0)).collect();
    for (ix, slot) in index.values_mut().enumerate() {
        *slot = ix;
    }
    let vocabulary: Vec<String> = index.keys().map(|w| w.to_string()).collect();
    let v = vocabulary.len();
    let words: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|w| index[w.as_str()]).collect()).collect();

    let beta = LDA_BETA;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_dk = vec![vec![0usize; k]; docs.len()];
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut n_k = vec![0usize; k];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in words.iter().enumerate() {
        let zs: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k)).collect();
        for (&w, &t) in doc.iter().zip(&zs) {
            n_dk[d][t] += 1;
            n_kw[t][w] += 1;
            n_k[t] += 1;
        }
        z.push(zs);
    }
    let vbeta = v as f64 * beta;
    let mut p = vec![0.0; k];
    for _ in 0..sweeps {
        for (d, doc) in words.iter().enumerate() {
            for (n, &w) in doc.iter().enumerate() {
                let old = z[d][n];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta) / (n_k[t] as f64 + vbeta);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);
                z[d][n] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let topic_word: Vec<Vec<f64>> = (0..k)
        .map(|t| (0..v).map(|w| (n_kw[t][w] as f64 + beta) / (n_k[t] as f64 + vbeta)).collect())
        .collect();
    let topics = topic_word
        .iter()
        .map(|phi| {
            let mut ranked: Vec<(String, f64)> = vocabulary.iter().cloned().zip(phi.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(TOPIC_WORDS);
            ranked
        })
        .collect();
    let doc_topic = words.iter().map(|doc| fold_in(doc, &topic_word)).collect();
    Ok(TopicModel {
        topic_count: k,
        alpha,
        beta,
        vocabulary,
        topic_word,
        topics,
        threads: Vec::new(),
        doc_topic,
    })
}

/// EM for the mixture weights of one document with fixed topics.
fn fold_in(doc: &[usize], topic_word: &[Vec<f64>]) -> Vec<f64> {
    let k = topic_word.len();
    let mut theta = vec![1.0 / k as f64; k];
    if doc.is_empty() {
        return theta;
    }
    let mut next = vec![0.0; k];
    for _ in 0..FOLD_IN_ITERATIONS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for &w in doc {
            let z: f64 = (0..k).map(|t| theta[t] * topic_word[t][w]).sum();
            if z > 0.0 {
                for t in 0..k {
                    next[t] += theta[t] * topic_word[t][w] / z;
                }
            }
        }
        let total: f64 = next.iter().sum();
        let mut change: f64 = 0.0;
        for t in 0..k {
            let v = next[t] / total;
            change = change.max((v - theta[t]).abs());
            theta[t] = v;
        }
        if change < FOLD_IN_TOLERANCE {
            break;
        }
    }
    theta
}

/// Topic model over the titles of a cluster's threads. Needs at least two
/// titles that keep a token after filtering.
pub fn fit_titles_lda(c: &Cluster, table: &PostTable, seed: u64) -> Result<TopicModel> {
    let mut threads = Vec::new();
    let mut docs = Vec::new();
    for &(t, _) in &c.threads {
        let tokens = tokenize(table.title_of(t));
        if !tokens.is_empty() {
            threads.push(t);
            docs.push(tokens);
        }
    }
    if docs.len() < 2 {
        return Err(Error::StorylineUnavailable(alloc::format!(
            "cluster {} has {} usable title(s); at least 2 are needed",
            c.cluster_id,
            docs.len()
        )));
    }
    let k = topic_count(c.threads.len());
    let mut model = fit_lda(&docs, k, default_alpha(k), LDA_SWEEPS, seed)?;
    model.threads = threads;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    /// Document position in the model.
    pub doc: usize,
    pub topic: usize,
    /// Relevance: the document's proportion of `topic`.
    pub score: f64,
}

/// Assigns each document its most relevant topic, lower topic id on ties.
pub fn assign_topics(tm: &TopicModel) -> Vec<TopicAssignment> {
    tm.doc_topic
        .iter()
        .enumerate()
        .map(|(doc, dist)| {
            let mut topic = 0;
            for (t, &v) in dist.iter().enumerate() {
                if v > dist[topic] {
                    topic = t;
                }
            }
            TopicAssignment {
                doc,
                topic,
                score: dist.get(topic).copied().unwrap_or(0.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantTopic {
    pub topic: usize,
    pub threads: usize,
    pub share: f64,
}

/// The shortest prefix of topics, by assigned-thread count descending (ties
/// by topic id), whose cumulative share reaches `th_dom`.
pub fn dominant_topics(assignments: &[TopicAssignment], th_dom: f64) -> Result<Vec<DominantTopic>> {
    if !(th_dom > 0.0 && th_dom <= 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("th_dom must be in (0, 1], got {th_dom}")));
    }
    if assignments.is_empty() {
        return Err(Error::InvalidParameter("no topic assignments".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in assignments {
        *counts.entry(a.topic).or_insert(0) += 1;
    }
    let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let n = assignments.len() as f64;
    let mut out = Vec::new();
    let mut covered = 0usize;
    for (topic, threads) in ranked {
        covered += threads;
        out.push(DominantTopic {
            topic,
            threads,
            share: threads as f64 / n,
        });
        if covered as f64 / n >= th_dom - SHARE_SLACK {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryTopic {
    pub topic: usize,
    pub words: Vec<String>,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryEntry {
    pub thread: usize,
    pub thread_id: String,
    pub title: String,
    pub date: NaiveDate,
    pub topic: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryLine {
    pub cluster_id: usize,
    pub dominant_topics: Vec<StoryTopic>,
    /// Sorted by first-post date, then thread id.
    pub entries: Vec<StoryEntry>,
}

/// Up to `r_t` most relevant threads per dominant topic, merged into one
/// date-ordered timeline.
pub fn build_storyline(
    c: &Cluster,
    tm: &TopicModel,
    assignments: &[TopicAssignment],
    t_dom: &[DominantTopic],
    r_t: usize,
    table: &PostTable,
) -> Result<StoryLine> {
    if t_dom.is_empty() {
        return Err(Error::InvalidParameter("no dominant topics".into()));
    }
    if r_t == 0 {
        return Err(Error::InvalidParameter("r_t must be >= 1".into()));
    }
    if tm.threads.len() != tm.doc_topic.len() {
        return Err(Error::ShapeMismatch("topic model documents are not bound to threads".into()));
    }
    let mut entries = Vec::new();
    for d in t_dom {
        let mut members: Vec<&TopicAssignment> = assignments.iter().filter(|a| a.topic == d.topic).collect();
        members.sort_by(|a, b| b.score.total_cmp(&a.score).then(tm.threads[a.doc].cmp(&tm.threads[b.doc])));
        for a in members.into_iter().take(r_t) {
            let thread = tm.threads[a.doc];
            let first = &table.records()[table.first_post_of(thread)];
            entries.push(StoryEntry {
                thread,
                thread_id: first.thread_id.clone(),
                title: table.title_of(thread).to_string(),
                date: first.date,
                topic: a.topic,
                score: a.score,
            });
        }
    }
    entries.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.thread_id.cmp(&b.thread_id)));
    Ok(StoryLine {
        cluster_id: c.cluster_id,
        dominant_topics: t_dom
            .iter()
            .map(|d| StoryTopic {
                topic: d.topic,
                words: tm.topics[d.topic].iter().map(|(w, _)| w.clone()).collect(),
                share: d.share,
            })
            .collect(),
        entries,
    })
}

/// One analyst table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableViewRow {
    /// `<forum id>-<cluster id>`.
    pub forum_cid: String,
    pub n_users: usize,
    #[serde(rename = "type")]
    pub label: String,
    /// Thread titles, falling back to the thread id for untitled threads.
    pub top_threads: Vec<String>,
    pub top_users: Vec<String>,
    pub top_dates: Vec<NaiveDate>,
    /// Words of each dominant topic; empty when no storyline is available.
    pub dominant_topics: Vec<Vec<String>>,
}

pub fn tableview_row(
    forum_id: &str,
    c: &Cluster,
    label: &ClusterLabel,
    top: &TopEntities,
    storyline: Option<&StoryLine>,
    table: &PostTable,
) -> TableViewRow {
    TableViewRow {
        forum_cid: alloc::format!("{forum_id}-{}", c.cluster_id),
        n_users: c.users.len(),
        label: label.label.clone(),
        top_threads: top
            .top_threads
            .iter()
            .map(|&t| match table.title_of(t) {
                "" => table.threads().name(t).to_string(),
                title => title.to_string(),
            })
            .collect(),
        top_users: top.top_users.iter().map(|&u| table.users().name(u).to_string()).collect(),
        top_dates: top.top_dates.clone(),
        dominant_topics: storyline
            .map(|s| s.dominant_topics.iter().map(|d| d.words.clone()).collect())
            .unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn topic_count_formula() {
        assert_eq!(topic_count(70), 8);
        assert_eq!(topic_count(1), 2);
        assert_eq!(topic_count(2), 2);
        assert_eq!(topic_count(100), 10);
    }

    #[test]
    fn distributions_sum_to_one() {
        let docs = [doc(&["alpha", "beta"]), doc(&["gamma"]), doc(&["alpha", "gamma", "delta"])];
        let m = fit_lda(&docs, 3, default_alpha(3), 50, 7).unwrap();
        for d in &m.doc_topic {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.iter().all(|&x| x >= 0.0));
        }
        for phi in &m.topic_word {
            assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_titles_identical_distributions() {
        let docs = vec![doc(&["same", "title", "here"]); 6];
        let m = fit_lda(&docs, 2, default_alpha(2), LDA_SWEEPS, 3).unwrap();
        assert!(m.doc_topic.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn argmax_and_tie_rule() {
        let tm = TopicModel {
            topic_count: 2,
            alpha: 25.0,
            beta: LDA_BETA,
            vocabulary: Vec::new(),
            topic_word: Vec::new(),
            topics: Vec::new(),
            threads: Vec::new(),
            doc_topic: vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.2, 0.8]],
        };
        let a = assign_topics(&tm);
        assert_eq!((a[0].topic, a[0].score), (0, 0.7));
        assert_eq!(a[1].topic, 0);
        assert_eq!(a[2].topic, 1);
    }

    fn assignments(topics: &[usize]) -> Vec<TopicAssignment> {
        topics
            .iter()
            .enumerate()
            .map(|(doc, &topic)| TopicAssignment { doc, topic, score: 1.0 })
            .collect()
    }

    #[test]
    fn dominant_prefixes() {
        let uniform: Vec<usize> = (0..10).collect();
        assert_eq!(dominant_topics(&assignments(&uniform), 0.7).unwrap().len(), 7);
        let all = dominant_topics(&assignments(&[0, 0, 1, 2]), 1.0).unwrap();
        assert_eq!(all.iter().map(|d| d.topic).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(dominant_topics(&assignments(&[0]), 0.0).is_err());
    }
}
