//! File-per-run artifact store.
//!
//! ```text
//! <root>/datasets/<name>/{dataset.json, posts.jsonl}
//! <root>/runs/<id>/{status.json, config.json, manifest.json, factors.bin,
//!     factors.json, clusters.json, activity.json, top_entities.json,
//!     keywords.json, classes.json, labels.json, profiles.csv,
//!     profiles.json, anomalies.json, heatmap.csv, scree.json,
//!     tableview.json, tableview.csv, storylines/<cid>.{json,html},
//!     topics/<cid>.json}
//! ```
//!
//! Every file is written through a temporary file and renamed into place.
//! Only `status.json` carries timestamps.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use forumscope_core::cluster::{top_entities, Cluster, TopEntities};
use forumscope_core::ingest::{PostRecord, PostTable, TimeIndex};
use forumscope_core::profile::{
    scree_data, AnomalyReport, BehaviorProfile, ClassDefinition, ClusterLabel, KeywordSet, ScreeData,
};
use forumscope_core::tensor::{RankCandidate, RankSelection};
use forumscope_core::topics::{StoryLine, TableViewRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Stage};
use crate::io::{parse_posts_until, read_records, write_records, Format};
use crate::pipeline::{
    build_tableview, label_all, run_pipeline, storyline_from, ClusterTopics, RunConfig, RunOutputs,
    StorylineOutcome,
};
use crate::report::{self, ActivitySummary, ClusterJson, Heatmap, WordCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Queued,
    Fitting,
    Profiling,
    Done,
    Failed,
}

impl RunStatus {
    fn order(self) -> u8 {
        match self {
            RunStatus::Queued => 0,
            RunStatus::Fitting => 1,
            RunStatus::Profiling => 2,
            RunStatus::Done | RunStatus::Failed => 3,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Failed)
    }

    /// Transitions only move forward; any live status may fail.
    pub fn can_advance_to(self, next: RunStatus) -> bool {
        !self.is_terminal() && (next == RunStatus::Failed || next.order() > self.order())
    }

    fn for_stage(stage: Stage) -> RunStatus {
        match stage {
            Stage::Ingest | Stage::Decompose => RunStatus::Fitting,
            _ => RunStatus::Profiling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub dataset: String,
    pub status: RunStatus,
    /// Stage in progress, or the failing stage.
    pub stage: Option<Stage>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub checksum: String,
    pub posts: usize,
    pub users: usize,
    pub threads: usize,
    pub active_days: usize,
    pub min_date: Option<NaiveDate>,
    pub max_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub selected: usize,
    pub als_rank: Option<usize>,
    pub apr_rank: Option<usize>,
    pub fallback: bool,
    pub threshold: f64,
}

impl From<&RankSelection> for SelectionSummary {
    fn from(s: &RankSelection) -> Self {
        SelectionSummary {
            selected: s.selected,
            als_rank: s.als_rank,
            apr_rank: s.apr_rank,
            fallback: s.fallback,
            threshold: s.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub dataset: String,
    pub dataset_checksum: String,
    pub config: RunConfig,
    pub forum_id: String,
    pub time: TimeIndex,
    pub tensor_shape: (usize, usize, usize),
    pub tensor_nnz: usize,
    pub rank: usize,
    pub rank_selection: Option<SelectionSummary>,
    pub cluster_ids: Vec<usize>,
    pub inconsistent_components: Vec<usize>,
    pub factors_sha256: String,
}

/// Sidecar of the binary factor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorManifest {
    pub format: String,
    pub shape: (usize, usize, usize),
    pub rank: usize,
    pub lambda: f64,
    pub seed: u64,
    pub sweeps: usize,
    pub objective_trace: Vec<f64>,
    pub corcondia: Vec<RankCandidate>,
}

/// Named top entities for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNamed {
    pub users: Vec<String>,
    pub threads: Vec<report::ThreadStrength>,
    pub weeks: Vec<usize>,
    pub dates: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDetail {
    pub cluster: ClusterJson,
    pub label: ClusterLabel,
    pub keywords: WordCloud,
    pub profile: BehaviorProfile,
    pub activity: ActivitySummary,
    pub top: TopNamed,
    pub anomalous: bool,
    pub storyline_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadPost {
    pub post_id: String,
    pub username: String,
    pub date: NaiveDate,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadView {
    pub thread_id: String,
    pub title: String,
    pub posts: Vec<ThreadPost>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loaded artifacts of a finished run.
#[derive(Debug, Clone)]
pub struct RunView {
    pub manifest: RunManifest,
    pub table: Arc<PostTable>,
    pub clusters_json: Vec<ClusterJson>,
    pub clusters: Vec<Cluster>,
    pub activities: Vec<ActivitySummary>,
    pub tops: Vec<TopEntities>,
    pub keywords: Vec<KeywordSet>,
    pub classes: Vec<ClassDefinition>,
    pub labels: Vec<ClusterLabel>,
    pub profiles: Vec<BehaviorProfile>,
    pub anomalies: AnomalyReport,
    pub storylines: Vec<StorylineOutcome>,
    pub topics: Vec<Option<ClusterTopics>>,
    pub tableview: Vec<TableViewRow>,
}

impl RunView {
    fn position(&self, cid: usize) -> Result<usize> {
        self.clusters.iter().position(|c| c.cluster_id == cid).ok_or(Error::NotFound {
            kind: "cluster",
            id: cid.to_string(),
        })
    }

    pub fn cluster_detail(&self, cid: usize) -> Result<ClusterDetail> {
        let ix = self.position(cid)?;
        let top = &self.tops[ix];
        let t = &self.table;
        Ok(ClusterDetail {
            cluster: self.clusters_json[ix].clone(),
            label: self.labels[ix].clone(),
            keywords: report::word_clouds(&self.keywords[ix..=ix]).remove(0),
            profile: self.profiles[ix].clone(),
            activity: self.activities[ix].clone(),
            top: TopNamed {
                users: top.top_users.iter().map(|&u| t.users().name(u).to_string()).collect(),
                threads: top
                    .top_threads
                    .iter()
                    .map(|&j| report::ThreadStrength {
                        id: t.threads().name(j).to_string(),
                        title: t.title_of(j).to_string(),
                        strength: self.clusters[ix].threads.iter().find(|m| m.0 == j).map_or(0.0, |m| m.1),
                    })
                    .collect(),
                weeks: top.top_weeks.clone(),
                dates: top.top_dates.clone(),
            },
            anomalous: self.anomalies.anomalies.contains(&ix),
            storyline_available: self.storylines[ix].storyline().is_some(),
        })
    }

    /// Storyline at the stored `r_t`, or rebuilt from the fitted topics.
    pub fn storyline(&self, cid: usize, r_t: Option<usize>) -> Result<StoryLine> {
        let ix = self.position(cid)?;
        let unavailable = |reason: &str| Error::Core(forumscope_core::Error::StorylineUnavailable(reason.to_string()));
        match (&self.storylines[ix], r_t) {
            (StorylineOutcome::Unavailable { reason, .. }, _) => Err(unavailable(reason)),
            (StorylineOutcome::Available { storyline }, None) => Ok(storyline.clone()),
            (StorylineOutcome::Available { storyline }, Some(r)) if r == self.manifest.config.r_t => {
                Ok(storyline.clone())
            }
            (StorylineOutcome::Available { .. }, Some(r)) => {
                let topics = self.topics[ix].as_ref().ok_or_else(|| unavailable("topic model missing"))?;
                Ok(storyline_from(&self.clusters[ix], topics, r, &self.table)?)
            }
        }
    }

    pub fn tableview(&self, k: Option<usize>) -> Result<Vec<TableViewRow>> {
        match k {
            None => Ok(self.tableview.clone()),
            Some(0) => Err(Error::InvalidArgument("k must be >= 1".into())),
            Some(k) if k == self.manifest.config.top_k => Ok(self.tableview.clone()),
            Some(k) => {
                let tops: Vec<TopEntities> = self
                    .clusters
                    .iter()
                    .map(|c| top_entities(c, &self.table, &self.manifest.time, k))
                    .collect();
                Ok(build_tableview(
                    &self.manifest.forum_id,
                    &self.clusters,
                    &self.labels,
                    &tops,
                    &self.storylines,
                    &self.table,
                ))
            }
        }
    }

    pub fn heatmap(&self) -> Heatmap {
        report::heatmap(&self.profiles, &self.labels, &self.anomalies)
    }

    pub fn scree(&self) -> Result<ScreeData> {
        Ok(scree_data(&self.clusters, &self.profiles, &self.labels)?)
    }
}

pub struct Store {
    root: PathBuf,
    tables: Mutex<HashMap<String, Arc<PostTable>>>,
    running: Mutex<HashSet<String>>,
    /// Serializes read-modify-write of run status files.
    status_lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        for sub in ["datasets", "runs"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Store {
            root,
            tables: Mutex::new(HashMap::new()),
            running: Mutex::new(HashSet::new()),
            status_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_dir(&self, name: &str) -> Result<PathBuf> {
        if !valid_name(name) {
            return Err(Error::InvalidArgument(format!("invalid dataset name `{name}`")));
        }
        Ok(self.root.join("datasets").join(name))
    }

    pub fn run_dir(&self, id: &str) -> Result<PathBuf> {
        if !valid_name(id) {
            return Err(Error::NotFound { kind: "run", id: id.to_string() });
        }
        Ok(self.root.join("runs").join(id))
    }

    /// Parses and stores a dataset. Re-ingesting identical content under the
    /// same name is a no-op; different content is a conflict.
    pub fn ingest(&self, name: &str, input: impl std::io::Read, format: Format) -> Result<DatasetInfo> {
        self.ingest_records(name, read_records(input, format)?)
    }

    pub fn ingest_records(&self, name: &str, records: Vec<PostRecord>) -> Result<DatasetInfo> {
        let dir = self.dataset_dir(name)?;
        let table = PostTable::new(records, Utc::now().date_naive())?;
        let mut canonical = Vec::new();
        write_records(&mut canonical, table.records(), Format::Jsonl)?;
        let stats = table.stats();
        let info = DatasetInfo {
            name: name.to_string(),
            checksum: sha256_hex(&canonical),
            posts: stats.posts,
            users: stats.users,
            threads: stats.threads,
            active_days: stats.active_days,
            min_date: table.min_date(),
            max_date: table.max_date(),
        };
        if let Ok(existing) = self.dataset(name) {
            if existing.checksum == info.checksum {
                return Ok(existing);
            }
            return Err(Error::Conflict(format!("dataset `{name}` already exists with different content")));
        }
        write_atomic(&dir.join("posts.jsonl"), &canonical)?;
        write_atomic(&dir.join("dataset.json"), &to_json(&info)?)?;
        self.tables.lock().unwrap().insert(name.to_string(), Arc::new(table));
        Ok(info)
    }

    pub fn dataset(&self, name: &str) -> Result<DatasetInfo> {
        let path = self.dataset_dir(name)?.join("dataset.json");
        if !path.exists() {
            return Err(Error::NotFound { kind: "dataset", id: name.to_string() });
        }
        read_json(&path)
    }

    pub fn table(&self, name: &str) -> Result<Arc<PostTable>> {
        if let Some(t) = self.tables.lock().unwrap().get(name) {
            return Ok(t.clone());
        }
        self.dataset(name)?;
        let path = self.dataset_dir(name)?.join("posts.jsonl");
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let table = Arc::new(parse_posts_until(std::io::BufReader::new(file), Format::Jsonl, NaiveDate::MAX)?);
        self.tables.lock().unwrap().insert(name.to_string(), table.clone());
        Ok(table)
    }

    pub fn thread(&self, dataset: &str, thread_id: &str) -> Result<ThreadView> {
        let table = self.table(dataset)?;
        let j = table.threads().get(thread_id).ok_or(Error::NotFound {
            kind: "thread",
            id: thread_id.to_string(),
        })?;
        let mut posts: Vec<(usize, &PostRecord)> =
            table.records().iter().enumerate().filter(|(p, _)| table.thread_of(*p) == j).collect();
        posts.sort_by(|a, b| a.1.date.cmp(&b.1.date).then_with(|| a.1.post_id.cmp(&b.1.post_id)));
        Ok(ThreadView {
            thread_id: thread_id.to_string(),
            title: table.title_of(j).to_string(),
            posts: posts
                .into_iter()
                .map(|(_, r)| ThreadPost {
                    post_id: r.post_id.clone(),
                    username: r.username.clone(),
                    date: r.date,
                    content: r.content.clone(),
                })
                .collect(),
        })
    }

    /// Deterministic id of `(dataset content, config)`.
    pub fn run_id(&self, dataset: &str, config: &RunConfig) -> Result<String> {
        let info = self.dataset(dataset)?;
        let mut h = Sha256::new();
        h.update(info.checksum.as_bytes());
        h.update(b"\n");
        h.update(serde_json::to_vec(config)?);
        Ok(hex::encode(h.finalize())[..16].to_string())
    }

    /// Registers a run as queued, or returns the existing run with the same
    /// id. The flag reports whether the run is new.
    pub fn create_run(&self, dataset: &str, config: &RunConfig) -> Result<(RunRecord, bool)> {
        config.validate()?;
        let id = self.run_id(dataset, config)?;
        let dir = self.run_dir(&id)?;
        let _guard = self.status_lock.lock().unwrap();
        if dir.join("status.json").exists() {
            return Ok((read_json(&dir.join("status.json"))?, false));
        }
        let now = Utc::now();
        let record = RunRecord {
            id: id.clone(),
            dataset: dataset.to_string(),
            status: RunStatus::Queued,
            stage: None,
            error: None,
            created_at: now,
            updated_at: now,
        };
        write_atomic(&dir.join("config.json"), &to_json(config)?)?;
        write_atomic(&dir.join("status.json"), &to_json(&record)?)?;
        Ok((record, true))
    }

    pub fn status(&self, id: &str) -> Result<RunRecord> {
        let path = self.run_dir(id)?.join("status.json");
        if !path.exists() {
            return Err(Error::NotFound { kind: "run", id: id.to_string() });
        }
        read_json(&path)
    }

    pub fn list_runs(&self) -> Result<Vec<RunRecord>> {
        let dir = self.root.join("runs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if let Some(id) = entry.file_name().to_str() {
                if let Ok(r) = self.status(id) {
                    out.push(r);
                }
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    fn transition(&self, id: &str, status: RunStatus, stage: Option<Stage>, error: Option<String>) -> Result<RunRecord> {
        let _guard = self.status_lock.lock().unwrap();
        let mut record = self.status(id)?;
        if record.status != status && !record.status.can_advance_to(status) {
            return Err(Error::Conflict(format!("run {id} cannot move from {:?} to {status:?}", record.status)));
        }
        record.status = status;
        record.stage = stage;
        record.error = error;
        record.updated_at = Utc::now();
        write_atomic(&self.run_dir(id)?.join("status.json"), &to_json(&record)?)?;
        Ok(record)
    }

    /// Executes a queued run to completion. Finished runs are returned as is.
    pub fn execute_run(&self, id: &str) -> Result<RunRecord> {
        let record = self.status(id)?;
        if record.status.is_terminal() {
            return Ok(record);
        }
        if !self.running.lock().unwrap().insert(id.to_string()) {
            return Err(Error::Conflict(format!("run {id} is already executing")));
        }
        let result = self.execute_inner(id, &record.dataset);
        self.running.lock().unwrap().remove(id);
        match result {
            Ok(()) => self.transition(id, RunStatus::Done, None, None),
            Err(e) => {
                let stage = e.stage().unwrap_or(Stage::Ingest);
                let message = match &e {
                    Error::Stage { source, .. } => source.to_string(),
                    other => other.to_string(),
                };
                log::error!("run {id} failed at {stage}: {message}");
                self.transition(id, RunStatus::Failed, Some(stage), Some(message))
            }
        }
    }

    fn execute_inner(&self, id: &str, dataset: &str) -> Result<()> {
        let dir = self.run_dir(id)?;
        let config: RunConfig = read_json(&dir.join("config.json")).map_err(Error::at(Stage::Ingest))?;
        let table = self.table(dataset).map_err(Error::at(Stage::Ingest))?;
        let info = self.dataset(dataset).map_err(Error::at(Stage::Ingest))?;
        let mut failed_transition = None;
        let outputs = run_pipeline(&table, &config, |stage| {
            let status = RunStatus::for_stage(stage);
            if let Err(e) = self.transition(id, status, Some(stage), None) {
                failed_transition.get_or_insert(e);
            }
        })?;
        if let Some(e) = failed_transition {
            return Err(Error::at(Stage::Persist)(e));
        }
        self.transition(id, RunStatus::Profiling, Some(Stage::Persist), None)?;
        self.persist(id, &info, &config, &table, &outputs).map_err(Error::at(Stage::Persist))
    }

    fn persist(&self, id: &str, info: &DatasetInfo, config: &RunConfig, table: &PostTable, out: &RunOutputs) -> Result<()> {
        let dir = self.run_dir(id)?;
        let put = |name: &str, bytes: &[u8]| write_atomic(&dir.join(name), bytes);

        let factor_bytes = crate::factors::encode(&out.model)?;
        put("factors.bin", &factor_bytes)?;
        put(
            "factors.json",
            &to_json(&FactorManifest {
                format: "CPF1".into(),
                shape: out.model.shape(),
                rank: out.model.rank,
                lambda: config.lambda,
                seed: config.seed,
                sweeps: out.model.objective_trace.len().saturating_sub(1),
                objective_trace: out.model.objective_trace.clone(),
                corcondia: out.selection.as_ref().map(|s| s.candidates.clone()).unwrap_or_default(),
            })?,
        )?;
        let clusters: Vec<ClusterJson> = out.clusters.iter().map(|c| ClusterJson::new(c, table, &out.time)).collect();
        put("clusters.json", &to_json(&clusters)?)?;
        let activity: Vec<ActivitySummary> = out
            .clusters
            .iter()
            .zip(&out.activities)
            .map(|(c, a)| ActivitySummary::new(c.cluster_id, a))
            .collect();
        put("activity.json", &to_json(&activity)?)?;
        put("top_entities.json", &to_json(&out.tops)?)?;
        put("keywords.json", &to_json(&report::word_clouds(&out.keywords))?)?;
        put("classes.json", &to_json(&config.classes)?)?;
        put("labels.json", &to_json(&out.labels)?)?;
        put("profiles.json", &to_json(&out.profiles)?)?;
        put("profiles.csv", &report::profiles_csv(&out.profiles)?)?;
        put("heatmap.csv", &report::heatmap_csv(&out.profiles)?)?;
        put("anomalies.json", &to_json(&out.anomalies)?)?;
        put("scree.json", &to_json(&scree_data(&out.clusters, &out.profiles, &out.labels)?)?)?;
        for (c, (story, topics)) in out.clusters.iter().zip(out.storylines.iter().zip(&out.topics)) {
            put(&format!("storylines/{}.json", c.cluster_id), &to_json(story)?)?;
            if let Some(s) = story.storyline() {
                put(&format!("storylines/{}.html", c.cluster_id), report::storyline_html(s).as_bytes())?;
            }
            if let Some(t) = topics {
                put(&format!("topics/{}.json", c.cluster_id), &to_json(t)?)?;
            }
        }
        put("tableview.json", &to_json(&out.tableview)?)?;
        put("tableview.csv", &report::tableview_csv(&out.tableview)?)?;
        let manifest = RunManifest {
            id: id.to_string(),
            dataset: info.name.clone(),
            dataset_checksum: info.checksum.clone(),
            config: config.clone(),
            forum_id: out.forum_id.clone(),
            time: out.time,
            tensor_shape: out.tensor_shape,
            tensor_nnz: out.tensor_nnz,
            rank: out.model.rank,
            rank_selection: out.selection.as_ref().map(SelectionSummary::from),
            cluster_ids: out.clusters.iter().map(|c| c.cluster_id).collect(),
            inconsistent_components: out.inconsistent.clone(),
            factors_sha256: sha256_hex(&factor_bytes),
        };
        put("manifest.json", &to_json(&manifest)?)
    }

    /// Creates (if needed) and executes a run synchronously.
    pub fn run(&self, dataset: &str, config: &RunConfig) -> Result<RunRecord> {
        let (record, _) = self.create_run(dataset, config)?;
        self.execute_run(&record.id)
    }

    fn require_done(&self, id: &str) -> Result<PathBuf> {
        let record = self.status(id)?;
        if record.status != RunStatus::Done {
            return Err(Error::Conflict(format!("run {id} is {:?}, not done", record.status).to_lowercase()));
        }
        self.run_dir(id)
    }

    pub fn manifest(&self, id: &str) -> Result<RunManifest> {
        read_json(&self.require_done(id)?.join("manifest.json"))
    }

    pub fn load_run(&self, id: &str) -> Result<RunView> {
        let dir = self.require_done(id)?;
        let manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
        let table = self.table(&manifest.dataset)?;
        let clusters_json: Vec<ClusterJson> = read_json(&dir.join("clusters.json"))?;
        let clusters = clusters_json.iter().map(|c| c.to_cluster(&table)).collect::<Result<Vec<_>>>()?;
        let mut storylines = Vec::new();
        let mut topics = Vec::new();
        for c in &clusters {
            storylines.push(read_json(&dir.join(format!("storylines/{}.json", c.cluster_id)))?);
            let path = dir.join(format!("topics/{}.json", c.cluster_id));
            topics.push(if path.exists() { Some(read_json(&path)?) } else { None });
        }
        let clouds: Vec<WordCloud> = read_json(&dir.join("keywords.json"))?;
        Ok(RunView {
            table,
            clusters_json,
            clusters,
            activities: read_json(&dir.join("activity.json"))?,
            tops: read_json(&dir.join("top_entities.json"))?,
            keywords: report::keywords_from_clouds(&clouds),
            classes: read_json(&dir.join("classes.json"))?,
            labels: read_json(&dir.join("labels.json"))?,
            profiles: read_json(&dir.join("profiles.json"))?,
            anomalies: read_json(&dir.join("anomalies.json"))?,
            storylines,
            topics,
            tableview: read_json(&dir.join("tableview.json"))?,
            manifest,
        })
    }

    /// Recomputes labels and the views that show them. Decomposition
    /// artifacts are not touched.
    pub fn relabel(&self, id: &str, classes: Vec<ClassDefinition>) -> Result<Vec<ClusterLabel>> {
        let view = self.load_run(id)?;
        let dir = self.run_dir(id)?;
        let config = RunConfig {
            classes,
            ..view.manifest.config.clone()
        };
        let labels = label_all(&view.keywords, &config)?;
        let tableview: Vec<TableViewRow> = view
            .tableview
            .iter()
            .zip(&labels)
            .map(|(row, l)| TableViewRow {
                label: l.label.clone(),
                ..row.clone()
            })
            .collect();
        write_atomic(&dir.join("classes.json"), &to_json(&config.classes)?)?;
        write_atomic(&dir.join("labels.json"), &to_json(&labels)?)?;
        write_atomic(&dir.join("scree.json"), &to_json(&scree_data(&view.clusters, &view.profiles, &labels)?)?)?;
        write_atomic(&dir.join("tableview.json"), &to_json(&tableview)?)?;
        write_atomic(&dir.join("tableview.csv"), &report::tableview_csv(&tableview)?)?;
        Ok(labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_moves_forward_only() {
        use RunStatus::*;
        assert!(Queued.can_advance_to(Fitting));
        assert!(Fitting.can_advance_to(Profiling));
        assert!(Profiling.can_advance_to(Done));
        assert!(Queued.can_advance_to(Failed));
        assert!(!Profiling.can_advance_to(Fitting));
        assert!(!Done.can_advance_to(Failed));
        assert!(!Failed.can_advance_to(Queued));
    }

    #[test]
    fn names_are_restricted() {
        assert!(valid_name("oc-2016_v1.2"));
        assert!(!valid_name("../etc"));
        assert!(!valid_name(".hidden"));
        assert!(!valid_name("a/b"));
        assert!(!valid_name(""));
    }
}
