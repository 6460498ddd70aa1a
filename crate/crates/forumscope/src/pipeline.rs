//! End-to-end run: ingest, decompose, extract, profile, investigate.

use forumscope_core::cluster::{
    cluster_activity, cluster_posts, extract_clusters, top_entities, Cluster, ClusterActivity, TopEntities,
    DEFAULT_EPSILON,
};
use forumscope_core::ingest::{build_tensor, discretize, Granularity, PostTable, TimeIndex};
use forumscope_core::profile::{
    behavior_profile, cluster_keywords, detect_anomalies, label_cluster, normalize_profiles, validate_classes,
    AnomalyReport, BehaviorProfile, ClassDefinition, ClusterLabel, DocumentFrequencies, KeywordSet,
    DEFAULT_DBSCAN_EPS, DEFAULT_DBSCAN_MIN_PTS, DEFAULT_G_FLOOR, DEFAULT_KEYWORDS, DEFAULT_MIX_RANGE,
};
use forumscope_core::tensor::{
    cp_als_nn_l1, default_max_rank, evaluate_candidate, select_rank, CpModel, Family, RankSelection,
    SolverOptions, SparseTensor3, DEFAULT_CONSISTENCY_THRESHOLD,
};
use forumscope_core::topics::{
    assign_topics, build_storyline, dominant_topics, fit_titles_lda, tableview_row, DominantTopic, StoryLine,
    TableViewRow, TopicAssignment, TopicModel, DEFAULT_RT, DEFAULT_TH_DOM, DEFAULT_TOP_K,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankChoice {
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for RankChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(RankChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(RankChoice::Fixed(r)),
            _ => Err(Error::InvalidArgument(format!("rank must be `auto` or a positive integer, got `{s}`"))),
        }
    }
}

impl Serialize for RankChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RankChoice::Auto => s.serialize_str("auto"),
            RankChoice::Fixed(r) => s.serialize_u64(*r as u64),
        }
    }
}

impl<'de> Deserialize<'de> for RankChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("rank must be >= 1")),
            Raw::Num(r) => Ok(RankChoice::Fixed(r)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

const CLASS_FILES: [(&str, &str); 3] = [
    ("A", include_str!("../data/classes/A.txt")),
    ("T", include_str!("../data/classes/T.txt")),
    ("P", include_str!("../data/classes/P.txt")),
];

/// One word per line; blank lines and `#` comments are skipped.
pub fn parse_bag(label: &str, text: &str) -> ClassDefinition {
    ClassDefinition::new(
        label,
        text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
    )
}

/// The shipped A/T/P bags.
pub fn default_classes() -> Vec<ClassDefinition> {
    CLASS_FILES.iter().map(|(label, text)| parse_bag(label, text)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub granularity: Granularity,
    pub rank: RankChoice,
    pub lambda: f64,
    pub keywords_n: usize,
    pub th_dom: f64,
    pub r_t: usize,
    pub top_k: usize,
    pub seed: u64,
    pub classes: Vec<ClassDefinition>,
    /// Largest candidate rank; `min(50, smallest dimension)` when unset.
    pub r_max: Option<usize>,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub consistency_threshold: f64,
    pub epsilon: f64,
    pub mix_range: f64,
    pub g_floor: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            granularity: Granularity::Week,
            rank: RankChoice::Auto,
            lambda: solver.lambda,
            keywords_n: DEFAULT_KEYWORDS,
            th_dom: DEFAULT_TH_DOM,
            r_t: DEFAULT_RT,
            top_k: DEFAULT_TOP_K,
            seed: solver.seed,
            classes: default_classes(),
            r_max: None,
            max_sweeps: solver.max_sweeps,
            tolerance: solver.tolerance,
            consistency_threshold: DEFAULT_CONSISTENCY_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
            mix_range: DEFAULT_MIX_RANGE,
            g_floor: DEFAULT_G_FLOOR,
            dbscan_eps: DEFAULT_DBSCAN_EPS,
            dbscan_min_pts: DEFAULT_DBSCAN_MIN_PTS,
        }
    }
}

impl RunConfig {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            lambda: self.lambda,
            max_sweeps: self.max_sweeps,
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver().validate()?;
        validate_classes(&self.classes)?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.th_dom > 0.0 && self.th_dom <= 1.0) {
            return bad("th_dom must be in (0, 1]");
        }
        if self.r_t == 0 || self.top_k == 0 || self.keywords_n == 0 {
            return bad("r_t, top_k and keywords_n must be >= 1");
        }
        if self.r_max == Some(0) {
            return bad("r_max must be >= 1");
        }
        if !(self.epsilon >= 0.0) || !(self.mix_range >= 0.0) || !(self.g_floor >= 0.0) || !(self.dbscan_eps >= 0.0) {
            return bad("epsilon, mix_range, g_floor and dbscan_eps must be >= 0");
        }
        Ok(())
    }
}

/// Rank sweep over both families with candidates fitted in parallel. Each
/// fit is sequential, so the result does not depend on the worker count.
pub fn autoten_parallel(
    x: &SparseTensor3,
    r_max: usize,
    opts: &SolverOptions,
    threshold: f64,
) -> forumscope_core::Result<RankSelection> {
    if r_max == 0 {
        return Err(forumscope_core::Error::InvalidParameter("r_max must be >= 1".into()));
    }
    // Largest ranks first so the longest fits start early.
    let jobs: Vec<(Family, usize)> = (1..=r_max)
        .rev()
        .flat_map(|r| [(Family::CpAls, r), (Family::CpApr, r)])
        .collect();
    let candidates = jobs
        .into_par_iter()
        .map(|(family, rank)| evaluate_candidate(x, family, rank, opts))
        .collect::<forumscope_core::Result<Vec<_>>>()?;
    select_rank(candidates, threshold)
}

/// Topic model state behind one cluster's storyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopics {
    pub cluster_id: usize,
    pub model: TopicModel,
    pub assignments: Vec<TopicAssignment>,
    pub dominant: Vec<DominantTopic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StorylineOutcome {
    Available { storyline: StoryLine },
    Unavailable { cluster_id: usize, reason: String },
}

impl StorylineOutcome {
    pub fn storyline(&self) -> Option<&StoryLine> {
        match self {
            StorylineOutcome::Available { storyline } => Some(storyline),
            StorylineOutcome::Unavailable { .. } => None,
        }
    }
}

/// Everything a run derives from its dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub forum_id: String,
    pub time: TimeIndex,
    pub tensor_shape: (usize, usize, usize),
    pub tensor_nnz: usize,
    pub selection: Option<RankSelection>,
    pub model: CpModel,
    pub clusters: Vec<Cluster>,
    /// Components with members in every mode but no posts in their
    /// intersection; not reported as clusters.
    pub inconsistent: Vec<usize>,
    pub activities: Vec<ClusterActivity>,
    pub tops: Vec<TopEntities>,
    pub keywords: Vec<KeywordSet>,
    pub labels: Vec<ClusterLabel>,
    pub profiles: Vec<BehaviorProfile>,
    pub anomalies: AnomalyReport,
    pub topics: Vec<Option<ClusterTopics>>,
    pub storylines: Vec<StorylineOutcome>,
    pub tableview: Vec<TableViewRow>,
}

/// Forum id used in table rows: the most frequent one, ties alphabetical.
pub fn forum_id_of(table: &PostTable) -> String {
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for r in table.records() {
        *counts.entry(&r.forum_id).or_insert(0) += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (id, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((id, n));
        }
    }
    best.map(|(id, _)| id.to_string()).unwrap_or_default()
}

pub fn label_all(keywords: &[KeywordSet], config: &RunConfig) -> Result<Vec<ClusterLabel>> {
    validate_classes(&config.classes)?;
    keywords
        .iter()
        .map(|kw| Ok(label_cluster(kw, &config.classes, config.mix_range, config.g_floor)?))
        .collect()
}

/// Storyline for one cluster from its fitted topics.
pub fn storyline_from(
    c: &Cluster,
    topics: &ClusterTopics,
    r_t: usize,
    table: &PostTable,
) -> forumscope_core::Result<StoryLine> {
    build_storyline(c, &topics.model, &topics.assignments, &topics.dominant, r_t, table)
}

fn investigate(c: &Cluster, table: &PostTable, config: &RunConfig) -> Result<(Option<ClusterTopics>, StorylineOutcome)> {
    let seed = config.seed.wrapping_add(c.cluster_id as u64);
    let model = match fit_titles_lda(c, table, seed) {
        Ok(m) => m,
        Err(forumscope_core::Error::StorylineUnavailable(reason)) => {
            log::info!("cluster {}: storyline unavailable: {reason}", c.cluster_id);
            return Ok((
                None,
                StorylineOutcome::Unavailable {
                    cluster_id: c.cluster_id,
                    reason,
                },
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let assignments = assign_topics(&model);
    let dominant = dominant_topics(&assignments, config.th_dom)?;
    let topics = ClusterTopics {
        cluster_id: c.cluster_id,
        model,
        assignments,
        dominant,
    };
    let storyline = storyline_from(c, &topics, config.r_t, table)?;
    Ok((Some(topics), StorylineOutcome::Available { storyline }))
}

pub fn build_tableview(
    forum_id: &str,
    clusters: &[Cluster],
    labels: &[ClusterLabel],
    tops: &[TopEntities],
    storylines: &[StorylineOutcome],
    table: &PostTable,
) -> Vec<TableViewRow> {
    clusters
        .iter()
        .enumerate()
        .map(|(ix, c)| tableview_row(forum_id, c, &labels[ix], &tops[ix], storylines[ix].storyline(), table))
        .collect()
}

/// Runs every stage. `progress` is called as each stage starts.
pub fn run_pipeline(table: &PostTable, config: &RunConfig, mut progress: impl FnMut(Stage)) -> Result<RunOutputs> {
    config.validate()?;

    progress(Stage::Ingest);
    let time = discretize(table, config.granularity).map_err(|e| Error::at(Stage::Ingest)(e.into()))?;
    let x = build_tensor(table, &time);
    log::info!("tensor {:?} with {} nonzeros", x.shape(), x.nnz());

    progress(Stage::Decompose);
    let decompose = || -> Result<(Option<RankSelection>, CpModel)> {
        let opts = config.solver();
        let (selection, rank) = match config.rank {
            RankChoice::Fixed(r) => (None, r),
            RankChoice::Auto => {
                let r_max = config.r_max.unwrap_or_else(|| default_max_rank(x.shape()));
                let sel = autoten_parallel(&x, r_max, &opts, config.consistency_threshold)?;
                let rank = sel.selected;
                (Some(sel), rank)
            }
        };
        log::info!("fitting rank {rank}");
        Ok((selection, cp_als_nn_l1(&x, rank, &opts)?))
    };
    let (selection, model) = decompose().map_err(Error::at(Stage::Decompose))?;

    progress(Stage::Extract);
    let mut clusters = Vec::new();
    let mut inconsistent = Vec::new();
    let mut activities = Vec::new();
    for c in extract_clusters(&model, config.epsilon) {
        match cluster_activity(&c, table, &time) {
            Ok(a) => {
                activities.push(a);
                clusters.push(c);
            }
            Err(forumscope_core::Error::InconsistentCluster(id)) => {
                log::warn!("component {id} has no posts in its intersection; not reported");
                inconsistent.push(id);
            }
            Err(e) => return Err(Error::at(Stage::Extract)(e.into())),
        }
    }
    let tops: Vec<TopEntities> = clusters.iter().map(|c| top_entities(c, table, &time, config.top_k)).collect();

    progress(Stage::Profile);
    let profile = || -> Result<_> {
        let df = DocumentFrequencies::from_table(table);
        let keywords: Vec<KeywordSet> = clusters
            .par_iter()
            .map(|c| cluster_keywords(c, table, &df, config.keywords_n))
            .collect();
        let labels = label_all(&keywords, config)?;
        let profiles = clusters
            .par_iter()
            .map(|c| behavior_profile(c.cluster_id, &cluster_posts(c, table, &time), table))
            .collect::<forumscope_core::Result<Vec<_>>>()?;
        let anomalies = detect_anomalies(&normalize_profiles(&profiles), config.dbscan_eps, config.dbscan_min_pts);
        Ok((keywords, labels, profiles, anomalies))
    };
    let (keywords, labels, profiles, anomalies) = profile().map_err(Error::at(Stage::Profile))?;

    progress(Stage::Investigate);
    let investigated = clusters
        .par_iter()
        .map(|c| investigate(c, table, config))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at(Stage::Investigate))?;
    let (topics, storylines): (Vec<_>, Vec<_>) = investigated.into_iter().unzip();
    let forum_id = forum_id_of(table);
    let tableview = build_tableview(&forum_id, &clusters, &labels, &tops, &storylines, table);

    Ok(RunOutputs {
        forum_id,
        time,
        tensor_shape: x.shape(),
        tensor_nnz: x.nnz(),
        selection,
        model,
        clusters,
        inconsistent,
        activities,
        tops,
        keywords,
        labels,
        profiles,
        anomalies,
        topics,
        storylines,
        tableview,
    })
}
