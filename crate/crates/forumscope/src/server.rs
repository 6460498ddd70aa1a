//! JSON HTTP API over a [`Store`].
//!
//! Runs are executed one at a time by a background worker thread; reads are
//! served concurrently from the files of finished runs.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{mpsc, Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forumscope_core::profile::ClassDefinition;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Stage};
use crate::io::Format;
use crate::pipeline::RunConfig;
use crate::store::{RunManifest, RunRecord, RunView, Store};

/// Error body: `{code, message, stage?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        use forumscope_core::Error as Core;
        let (status, code) = match &e {
            Error::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Core(Core::StorylineUnavailable(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "storyline_unavailable"),
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::InvalidSpec(_)
            | Error::Json(_)
            | Error::Core(
                Core::Field { .. } | Core::DuplicatePostIds(_) | Core::InvalidOptions(_) | Core::InvalidParameter(_),
            ) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError(
            status,
            ErrorBody {
                code: code.to_string(),
                message: e.to_string(),
                stage: e.stage(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub struct AppState {
    store: Arc<Store>,
    jobs: Mutex<mpsc::Sender<String>>,
    views: Mutex<HashMap<String, Arc<RunView>>>,
}

impl AppState {
    /// Starts the run worker and re-queues unfinished runs.
    pub fn new(store: Store) -> crate::error::Result<Arc<AppState>> {
        let store = Arc::new(store);
        let (tx, rx) = mpsc::channel::<String>();
        let worker_store = store.clone();
        std::thread::Builder::new()
            .name("run-worker".into())
            .spawn(move || {
                for id in rx {
                    if let Err(e) = worker_store.execute_run(&id) {
                        log::error!("run {id}: {e}");
                    }
                }
            })
            .map_err(|e| Error::io("<worker>", e))?;
        for r in store.list_runs()? {
            if !r.status.is_terminal() {
                let _ = tx.send(r.id);
            }
        }
        Ok(Arc::new(AppState {
            store,
            jobs: Mutex::new(tx),
            views: Mutex::new(HashMap::new()),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn view(&self, id: &str) -> crate::error::Result<Arc<RunView>> {
        if let Some(v) = self.views.lock().unwrap().get(id) {
            return Ok(v.clone());
        }
        let view = Arc::new(self.store.load_run(id)?);
        self.views.lock().unwrap().insert(id.to_string(), view.clone());
        Ok(view)
    }
}

async fn blocking<T, F>(state: Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> crate::error::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&state)).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorBody {
                code: "internal".into(),
                message: e.to_string(),
                stage: None,
            },
        )),
    }
}

#[derive(Debug, Deserialize)]
pub struct NewDataset {
    pub name: String,
    pub format: Format,
    /// The post log itself.
    pub data: String,
}

#[derive(Debug, Deserialize)]
pub struct NewRun {
    pub dataset: String,
    #[serde(default)]
    pub config: Option<RunConfig>,
}

#[derive(Debug, Deserialize)]
pub struct Relabel {
    pub classes: Vec<ClassDefinition>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    #[serde(flatten)]
    pub record: RunRecord,
    pub manifest: Option<RunManifest>,
    pub cluster_count: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct RtQuery {
    pub rt: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct KQuery {
    pub k: Option<usize>,
}

async fn create_dataset(State(s): State<Arc<AppState>>, Json(body): Json<NewDataset>) -> Response {
    match blocking(s, move |s| s.store.ingest(&body.name, body.data.as_bytes(), body.format)).await {
        Ok(info) => (StatusCode::CREATED, info).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn dataset(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<crate::store::DatasetInfo> {
    blocking(s, move |s| s.store.dataset(&id)).await
}

async fn thread(
    State(s): State<Arc<AppState>>,
    Path((id, tid)): Path<(String, String)>,
) -> ApiResult<crate::store::ThreadView> {
    blocking(s, move |s| s.store.thread(&id, &tid)).await
}

async fn create_run(State(s): State<Arc<AppState>>, Json(body): Json<NewRun>) -> Response {
    let result = blocking(s, move |s| {
        let config = body.config.unwrap_or_default();
        let (record, created) = s.store.create_run(&body.dataset, &config)?;
        if created {
            s.jobs
                .lock()
                .unwrap()
                .send(record.id.clone())
                .map_err(|_| Error::Conflict("run worker stopped".into()))?;
        }
        Ok((record, created))
    })
    .await;
    match result {
        Ok(Json((record, true))) => (StatusCode::ACCEPTED, Json(record)).into_response(),
        Ok(Json((record, false))) => (StatusCode::OK, Json(record)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn list_runs(State(s): State<Arc<AppState>>) -> ApiResult<Vec<RunRecord>> {
    blocking(s, |s| s.store.list_runs()).await
}

async fn run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<RunSummary> {
    blocking(s, move |s| {
        let record = s.store.status(&id)?;
        let manifest = match record.status {
            crate::store::RunStatus::Done => Some(s.store.manifest(&id)?),
            _ => None,
        };
        Ok(RunSummary {
            cluster_count: manifest.as_ref().map(|m| m.cluster_ids.len()),
            record,
            manifest,
        })
    })
    .await
}

async fn clusters(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Vec<crate::report::ClusterJson>> {
    blocking(s, move |s| Ok(s.view(&id)?.clusters_json.clone())).await
}

async fn cluster(
    State(s): State<Arc<AppState>>,
    Path((id, cid)): Path<(String, usize)>,
) -> ApiResult<crate::store::ClusterDetail> {
    blocking(s, move |s| s.view(&id)?.cluster_detail(cid)).await
}

async fn storyline(
    State(s): State<Arc<AppState>>,
    Path((id, cid)): Path<(String, usize)>,
    Query(q): Query<RtQuery>,
) -> ApiResult<forumscope_core::topics::StoryLine> {
    blocking(s, move |s| {
        if q.rt == Some(0) {
            return Err(Error::InvalidArgument("rt must be >= 1".into()));
        }
        s.view(&id)?.storyline(cid, q.rt)
    })
    .await
}

async fn tableview(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<KQuery>,
) -> ApiResult<Vec<forumscope_core::topics::TableViewRow>> {
    blocking(s, move |s| s.view(&id)?.tableview(q.k)).await
}

async fn heatmap(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<crate::report::Heatmap> {
    blocking(s, move |s| Ok(s.view(&id)?.heatmap())).await
}

async fn scree(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<forumscope_core::profile::ScreeData> {
    blocking(s, move |s| s.view(&id)?.scree()).await
}

#[derive(Debug, Serialize)]
pub struct RelabelResponse {
    pub labels: Vec<forumscope_core::profile::ClusterLabel>,
    pub tableview: Vec<forumscope_core::topics::TableViewRow>,
}

async fn relabel(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<Relabel>,
) -> ApiResult<RelabelResponse> {
    blocking(s, move |s| {
        let labels = s.store.relabel(&id, body.classes)?;
        s.views.lock().unwrap().remove(&id);
        Ok(RelabelResponse {
            labels,
            tableview: s.view(&id)?.tableview(None)?,
        })
    })
    .await
}

async fn fallback() -> ApiError {
    ApiError(
        StatusCode::NOT_FOUND,
        ErrorBody {
            code: "not_found".into(),
            message: "no such endpoint".into(),
            stage: None,
        },
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/datasets", post(create_dataset))
        .route("/api/datasets/{id}", get(dataset))
        .route("/api/datasets/{id}/threads/{tid}", get(thread))
        .route("/api/runs", post(create_run).get(list_runs))
        .route("/api/runs/{id}", get(run))
        .route("/api/runs/{id}/clusters", get(clusters))
        .route("/api/runs/{id}/clusters/{cid}", get(cluster))
        .route("/api/runs/{id}/clusters/{cid}/storyline", get(storyline))
        .route("/api/runs/{id}/tableview", get(tableview))
        .route("/api/runs/{id}/heatmap", get(heatmap))
        .route("/api/runs/{id}/scree", get(scree))
        .route("/api/runs/{id}/relabel", post(relabel))
        .fallback(fallback)
        .with_state(state)
}

/// Binds `addr`; failure to bind (for example a port in use) is returned
/// before any request is served.
pub async fn bind(store: Store, addr: SocketAddr) -> crate::error::Result<(tokio::net::TcpListener, Router)> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("bind {addr}"), e))?;
    Ok((listener, router(AppState::new(store)?)))
}

pub async fn serve(store: Store, addr: SocketAddr) -> crate::error::Result<()> {
    let (listener, app) = bind(store, addr).await?;
    log::info!("listening on {}", listener.local_addr().map_err(|e| Error::io("<listener>", e))?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("<server>", e))
}
