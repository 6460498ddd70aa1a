//! Clusters from the rank-one components of a fitted model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::{PostTable, TimeIndex};
use crate::linalg::Matrix;
use crate::tensor::CpModel;
use crate::{Error, Result};

/// Default participation threshold: the soft-thresholded fit produces exact
/// zeros, so only strictly positive strengths are kept.
pub const DEFAULT_EPSILON: f64 = 0.0;

/// One component after zero-filtering. Member lists hold
/// `(entity index, participation strength)` sorted by strength descending,
/// ties by index ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Index of the component in the fitted model.
    pub cluster_id: usize,
    pub energy: f64,
    pub users: Vec<(usize, f64)>,
    pub threads: Vec<(usize, f64)>,
    pub weeks: Vec<(usize, f64)>,
}

impl Cluster {
    pub fn user_set(&self) -> BTreeSet<usize> {
        self.users.iter().map(|&(i, _)| i).collect()
    }

    pub fn thread_set(&self) -> BTreeSet<usize> {
        self.threads.iter().map(|&(i, _)| i).collect()
    }

    pub fn week_set(&self) -> BTreeSet<usize> {
        self.weeks.iter().map(|&(i, _)| i).collect()
    }
}

fn members(factor: &Matrix, r: usize, epsilon: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = (0..factor.rows())
        .map(|i| (i, factor.get(i, r)))
        .filter(|&(_, v)| v > epsilon)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Keeps, per component, the entities whose strength exceeds `epsilon`.
/// Components left empty in any mode are dropped. Clusters are ordered by
/// component energy descending, ties by component index.
pub fn extract_clusters(model: &CpModel, epsilon: f64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    for r in 0..model.rank {
        let users = members(&model.users, r, epsilon);
        let threads = members(&model.threads, r, epsilon);
        let weeks = members(&model.weeks, r, epsilon);
        if users.is_empty() || threads.is_empty() || weeks.is_empty() {
            log::info!("component {r} is empty after filtering; dropped");
            continue;
        }
        clusters.push(Cluster {
            cluster_id: r,
            energy: model.component_energy(r),
            users,
            threads,
            weeks,
        });
    }
    clusters.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.cluster_id.cmp(&b.cluster_id)));
    clusters
}

/// The `k` strongest members per mode, and for each top week its busiest day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopEntities {
    pub top_users: Vec<usize>,
    pub top_threads: Vec<usize>,
    pub top_weeks: Vec<usize>,
    /// Parallel to `top_weeks`.
    pub top_dates: Vec<NaiveDate>,
}

/// Record indices of posts by cluster users in cluster threads during
/// cluster weeks.
pub fn cluster_posts(c: &Cluster, table: &PostTable, time: &TimeIndex) -> Vec<usize> {
    let users = c.user_set();
    let threads = c.thread_set();
    let weeks = c.week_set();
    (0..table.len())
        .filter(|&p| {
            let slot = time.slot(table.records()[p].date);
            slot >= 0
                && weeks.contains(&(slot as usize))
                && users.contains(&table.user_of(p))
                && threads.contains(&table.thread_of(p))
        })
        .collect()
}

/// Top-`k` entities. The date for a week is the day with the most posts by
/// cluster users in cluster threads, earliest on ties; a week without such
/// posts reports its first day.
pub fn top_entities(c: &Cluster, table: &PostTable, time: &TimeIndex, k: usize) -> TopEntities {
    let k = k.max(1);
    let top = |list: &[(usize, f64)]| list.iter().take(k).map(|&(i, _)| i).collect::<Vec<_>>();
    let top_weeks = top(&c.weeks);
    let users = c.user_set();
    let threads = c.thread_set();
    let wanted: BTreeSet<usize> = top_weeks.iter().copied().collect();
    let mut per_day: BTreeMap<usize, BTreeMap<NaiveDate, usize>> = BTreeMap::new();
    for (p, rec) in table.records().iter().enumerate() {
        let slot = time.slot(rec.date);
        if slot < 0 || !wanted.contains(&(slot as usize)) {
            continue;
        }
        if users.contains(&table.user_of(p)) && threads.contains(&table.thread_of(p)) {
            *per_day.entry(slot as usize).or_default().entry(rec.date).or_insert(0) += 1;
        }
    }
    let top_dates = top_weeks
        .iter()
        .map(|w| {
            per_day
                .get(w)
                .and_then(|days| {
                    // BTreeMap iterates dates ascending, so `>` keeps the earliest.
                    let mut best: Option<(NaiveDate, usize)> = None;
                    for (&d, &n) in days {
                        if best.is_none_or(|(_, m)| n > m) {
                            best = Some((d, n));
                        }
                    }
                    best.map(|(d, _)| d)
                })
                .unwrap_or_else(|| time.slot_start(*w))
        })
        .collect();
    TopEntities {
        top_users: top(&c.users),
        top_threads: top(&c.threads),
        top_weeks,
        top_dates,
    }
}

/// Temporal extent of a cluster's post set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterActivity {
    pub posts: Vec<usize>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    /// Days between the first and the last post.
    pub duration_days: i64,
    pub active_days: usize,
    /// Active days over the calendar days spanned, as a percentage in (0, 100].
    pub active_day_percentage: f64,
}

pub fn cluster_activity(c: &Cluster, table: &PostTable, time: &TimeIndex) -> Result<ClusterActivity> {
    let posts = cluster_posts(c, table, time);
    activity_of(posts, table).ok_or(Error::InconsistentCluster(c.cluster_id))
}

/// Activity summary of an arbitrary post set; `None` when it is empty.
pub fn activity_of(posts: Vec<usize>, table: &PostTable) -> Option<ClusterActivity> {
    let days: BTreeSet<NaiveDate> = posts.iter().map(|&p| table.records()[p].date).collect();
    let first_date = *days.first()?;
    let last_date = *days.last()?;
    let duration_days = (last_date - first_date).num_days();
    let active_days = days.len();
    Some(ClusterActivity {
        posts,
        first_date,
        last_date,
        duration_days,
        active_days,
        active_day_percentage: 100.0 * active_days as f64 / (duration_days + 1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{discretize, Granularity, PostRecord};
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(thread: &str, post: &str, user: &str, date: (i32, u32, u32)) -> PostRecord {
        PostRecord {
            forum_id: "f".to_string(),
            thread_id: thread.to_string(),
            post_id: post.to_string(),
            username: user.to_string(),
            date: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            content: "hello world".to_string(),
        }
    }

    fn latest() -> NaiveDate {
        NaiveDate::from_ymd_opt(2030, 1, 1).unwrap()
    }

    fn model_with(users: Matrix, threads: Matrix, weeks: Matrix) -> CpModel {
        CpModel::new(users, threads, weeks).unwrap()
    }

    #[test]
    fn filters_zeros_and_orders_by_energy() {
        let m = model_with(
            Matrix::from_vec(3, 3, vec![1.0, 0.0, 2.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.0]),
            Matrix::from_vec(2, 3, vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0]),
            Matrix::from_vec(2, 3, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]),
        );
        let cs = extract_clusters(&m, 0.0);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].cluster_id, 2);
        assert_eq!(cs[0].users, vec![(0, 2.0), (1, 2.0)]);
        assert_eq!(cs[1].cluster_id, 0);
        assert_eq!(cs[1].users, vec![(0, 1.0), (2, 0.5)]);
        assert_eq!(cs[1].threads, vec![(0, 1.0)]);
    }

    #[test]
    fn dead_week_column_dropped() {
        let m = model_with(
            Matrix::from_vec(1, 1, vec![1.0]),
            Matrix::from_vec(1, 1, vec![1.0]),
            Matrix::from_vec(2, 1, vec![0.0, 0.0]),
        );
        assert!(extract_clusters(&m, 0.0).is_empty());
    }

    fn one_cluster(table: &PostTable, weeks: Vec<(usize, f64)>) -> Cluster {
        Cluster {
            cluster_id: 0,
            energy: 1.0,
            users: (0..table.user_count()).map(|i| (i, 1.0)).collect(),
            threads: (0..table.thread_count()).map(|i| (i, 1.0)).collect(),
            weeks,
        }
    }

    #[test]
    fn busiest_day_wins() {
        // 2024-01-01 is a Monday.
        let table = PostTable::new(
            vec![
                rec("t", "1", "a", (2024, 1, 1)),
                rec("t", "2", "b", (2024, 1, 1)),
                rec("t", "3", "a", (2024, 1, 2)),
                rec("t", "4", "b", (2024, 1, 1)),
            ],
            latest(),
        )
        .unwrap();
        let time = discretize(&table, Granularity::Week).unwrap();
        let c = one_cluster(&table, vec![(0, 1.0)]);
        let top = top_entities(&c, &table, &time, 3);
        assert_eq!(top.top_dates, vec![NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()]);
        assert_eq!(top.top_users.len(), 2);
    }

    #[test]
    fn day_ties_go_to_the_earliest_date() {
        let table = PostTable::new(
            vec![rec("t", "1", "a", (2024, 1, 3)), rec("t", "2", "a", (2024, 1, 2))],
            latest(),
        )
        .unwrap();
        let time = discretize(&table, Granularity::Week).unwrap();
        let top = top_entities(&one_cluster(&table, vec![(0, 1.0)]), &table, &time, 1);
        assert_eq!(top.top_dates, vec![NaiveDate::from_ymd_opt(2024, 1, 2).unwrap()]);
    }

    #[test]
    fn activity_percentages() {
        let table = PostTable::new(
            vec![rec("t", "1", "a", (2024, 1, 1)), rec("t", "2", "b", (2024, 1, 1))],
            latest(),
        )
        .unwrap();
        let time = discretize(&table, Granularity::Week).unwrap();
        let act = cluster_activity(&one_cluster(&table, vec![(0, 1.0)]), &table, &time).unwrap();
        assert_eq!((act.duration_days, act.active_days), (0, 1));
        assert_eq!(act.active_day_percentage, 100.0);

        let days = [1, 3, 5, 7, 10];
        let recs = days
            .iter()
            .enumerate()
            .map(|(n, &d)| rec("t", &alloc::format!("{n}"), "a", (2024, 1, d)))
            .collect();
        let table = PostTable::new(recs, latest()).unwrap();
        let time = discretize(&table, Granularity::Week).unwrap();
        let c = one_cluster(&table, vec![(0, 1.0), (1, 0.5)]);
        let act = cluster_activity(&c, &table, &time).unwrap();
        assert_eq!(act.active_days, 5);
        assert_eq!(act.duration_days, 9);
        assert!((act.active_day_percentage - 50.0).abs() < 1e-12);
    }

    #[test]
    fn empty_activity_is_inconsistent() {
        let table = PostTable::new(vec![rec("t", "1", "a", (2024, 1, 1))], latest()).unwrap();
        let time = discretize(&table, Granularity::Week).unwrap();
        let c = one_cluster(&table, vec![(3, 1.0)]);
        assert_eq!(cluster_activity(&c, &table, &time), Err(Error::InconsistentCluster(0)));
    }
}
