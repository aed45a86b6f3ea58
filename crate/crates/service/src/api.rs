//! HTTP interface over a served pipeline snapshot.
//!
//! Reads clone an `Arc` to the current snapshot and never block on writers.
//! Overrides and lazy group-stat recomputation are serialized by a single
//! writer lock and publish a new snapshot atomically.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use gaitlens_core::catalog::{catalog, model_channels, CATALOG_VERSION};
use gaitlens_core::explain::{bin_relevance, ChannelRows, RelevanceMap};
use gaitlens_core::{asymmetry_overview, overview_relevance, zscore_overview, GaitClass, GroupStats, Side, CYCLE_LEN, FEATURE_LEN};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, Mutex};
use tokio::task::JoinHandle;

use crate::dataset::{replay_overrides, write_atomic, dataset_to_string, ClassificationOverride, LegKey};
use crate::error::{Result, ServiceError};
use crate::pipeline::{group_stats_for, ServedState};

struct Snapshot {
    base: Arc<ServedState>,
    overrides: Arc<Vec<ClassificationOverride>>,
    confirmed: Arc<BTreeMap<LegKey, GaitClass>>,
    /// `None` after an override until the next stats request.
    group_stats: Option<Arc<BTreeMap<GaitClass, GroupStats>>>,
}

impl Snapshot {
    fn with(&self, overrides: Arc<Vec<ClassificationOverride>>, confirmed: Arc<BTreeMap<LegKey, GaitClass>>, stats: Option<Arc<BTreeMap<GaitClass, GroupStats>>>) -> Snapshot {
        Snapshot {
            base: self.base.clone(),
            overrides,
            confirmed,
            group_stats: stats,
        }
    }
}

/// Shared service state.
#[derive(Clone)]
pub struct ApiState {
    inner: Arc<Inner>,
}

struct Inner {
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
    persist: Option<PathBuf>,
}

impl ApiState {
    pub fn new(state: ServedState) -> Self {
        let overrides = state.dataset.overrides.clone();
        let confirmed = replay_overrides(&state.dataset, &overrides);
        let stats = Arc::new(state.group_stats.clone());
        let snapshot = Snapshot {
            base: Arc::new(state),
            overrides: Arc::new(overrides),
            confirmed: Arc::new(confirmed),
            group_stats: Some(stats),
        };
        ApiState {
            inner: Arc::new(Inner {
                current: RwLock::new(Arc::new(snapshot)),
                writer: Mutex::new(()),
                persist: None,
            }),
        }
    }

    /// Rewrites the dataset file, including the override log, after every
    /// accepted override.
    pub fn with_persistence(state: ServedState, path: PathBuf) -> Self {
        let mut s = ApiState::new(state);
        Arc::get_mut(&mut s.inner).expect("fresh state").persist = Some(path);
        s
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.inner.current.read().expect("snapshot lock poisoned").clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.inner.current.write().expect("snapshot lock poisoned") = Arc::new(s);
    }

    pub fn override_log(&self) -> Vec<ClassificationOverride> {
        self.snapshot().overrides.as_ref().clone()
    }

    pub fn confirmed_classes(&self) -> BTreeMap<LegKey, GaitClass> {
        self.snapshot().confirmed.as_ref().clone()
    }

    pub fn stats_stale(&self) -> bool {
        self.snapshot().group_stats.is_none()
    }

    /// Appends an override and marks group statistics stale.
    pub async fn add_override(&self, o: ClassificationOverride) -> Result<()> {
        let _guard = self.inner.writer.lock().await;
        let cur = self.snapshot();
        cur.base.dataset.check_leg(&o.patient_id, o.side)?;
        let mut log = cur.overrides.as_ref().clone();
        let mut confirmed = cur.confirmed.as_ref().clone();
        confirmed.insert((o.patient_id.clone(), o.side), o.chosen_class);
        log.push(o);
        if let Some(path) = &self.inner.persist {
            let mut ds = cur.base.dataset.clone();
            ds.overrides = log.clone();
            write_atomic(path, dataset_to_string(&ds)?.as_bytes())?;
        }
        self.publish(cur.with(Arc::new(log), Arc::new(confirmed), None));
        Ok(())
    }

    /// Current group statistics, recomputed first if stale.
    pub async fn group_stats(&self) -> Result<Arc<BTreeMap<GaitClass, GroupStats>>> {
        if let Some(s) = &self.snapshot().group_stats {
            return Ok(s.clone());
        }
        let _guard = self.inner.writer.lock().await;
        let cur = self.snapshot();
        if let Some(s) = &cur.group_stats {
            return Ok(s.clone());
        }
        let stats = Arc::new(group_stats_for(&cur.base.dataset, &cur.confirmed)?);
        self.publish(cur.with(cur.overrides.clone(), cur.confirmed.clone(), Some(stats.clone())));
        Ok(stats)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownPatient(_) | ServiceError::UnknownSide { .. } | ServiceError::NoGroup(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::InvalidInput(_) | ServiceError::Format { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "status": self.status.as_u16(), "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Json<Value>, ApiError>;

fn parse_side(s: &str) -> std::result::Result<Side, ApiError> {
    s.parse().map_err(|e: gaitlens_core::CoreError| ApiError::bad_request(e.to_string()))
}

fn parse_class(s: &str) -> std::result::Result<GaitClass, ApiError> {
    s.parse().map_err(|e: gaitlens_core::CoreError| ApiError::bad_request(e.to_string()))
}

fn leg_json(snap: &Snapshot, id: &str, side: Side) -> Value {
    let leg = snap.base.legs.get(&(id.to_string(), side));
    json!({
        "predictedClass": leg.map(|l| l.prediction.class),
        "probabilities": leg.map(|l| &l.prediction.probabilities),
        "confirmedClass": snap.confirmed.get(&(id.to_string(), side)),
    })
}

async fn list_patients(State(api): State<ApiState>) -> ApiResult {
    let snap = api.snapshot();
    let rows: Vec<Value> = snap
        .base
        .dataset
        .patients
        .iter()
        .map(|p| {
            let sides: BTreeMap<Side, Value> = p.sides.keys().map(|s| (*s, leg_json(&snap, &p.id, *s))).collect();
            json!({
                "id": p.id,
                "examDate": p.exam_date,
                "walkingSpeed": p.walking_speed,
                "sides": sides,
            })
        })
        .collect();
    Ok(Json(Value::Array(rows)))
}

async fn get_patient(State(api): State<ApiState>, Path(id): Path<String>) -> ApiResult {
    let snap = api.snapshot();
    let p = snap
        .base
        .dataset
        .patient(&id)
        .ok_or_else(|| ApiError::from(ServiceError::UnknownPatient(id.clone())))?;
    let mut sides = BTreeMap::new();
    for (side, data) in &p.sides {
        let channels: Vec<Value> = catalog()
            .iter()
            .filter_map(|c| {
                data.averaged.get(c).map(|avg| {
                    let trials: Vec<&[f64]> = data.trials.iter().filter_map(|t| t.get(c).map(|s| s.values())).collect();
                    json!({
                        "key": c.key(),
                        "label": c.label(),
                        "unit": avg.unit(),
                        "inModel": c.in_model(),
                        "averaged": avg.values(),
                        "trials": trials,
                    })
                })
            })
            .collect();
        let mut leg = leg_json(&snap, &id, *side);
        leg["events"] = serde_json::to_value(data.events).expect("events serialize");
        leg["channels"] = Value::Array(channels);
        sides.insert(*side, leg);
    }
    Ok(Json(json!({
        "id": p.id,
        "examDate": p.exam_date,
        "walkingSpeed": p.walking_speed,
        "sides": sides,
    })))
}

fn relevance_for(snap: &Snapshot, id: &str, side: Side) -> std::result::Result<RelevanceMap, ApiError> {
    snap.base.dataset.check_leg(id, side)?;
    snap.base
        .legs
        .get(&(id.to_string(), side))
        .map(|l| l.relevance.clone())
        .ok_or_else(|| ApiError::not_found(format!("no relevance map for patient {id} {side}")))
}

async fn get_relevance(State(api): State<ApiState>, Path((id, side)): Path<(String, String)>) -> ApiResult {
    let side = parse_side(&side)?;
    let snap = api.snapshot();
    let map = relevance_for(&snap, &id, side)?;
    let mut channels = Vec::with_capacity(model_channels().len());
    for c in model_channels() {
        let row = map.channel_row(*c).expect("model channel");
        let levels = row
            .iter()
            .map(|r| bin_relevance(*r))
            .collect::<gaitlens_core::Result<Vec<_>>>()
            .map_err(|e| ApiError::from(ServiceError::from(e)))?;
        channels.push(json!({
            "key": c.key(),
            "label": c.label(),
            "values": row,
            "levels": levels,
        }));
    }
    Ok(Json(json!({
        "patientId": id,
        "side": side,
        "targetClass": map.target_class(),
        "channels": channels,
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverviewMode {
    Standard,
    Explain,
    Group,
}

fn rows_json(rows: &ChannelRows) -> Vec<Value> {
    catalog()
        .iter()
        .map(|c| {
            json!({
                "key": c.key(),
                "label": c.label(),
                "unit": c.unit(),
                "inModel": c.in_model(),
                "values": rows.get(c),
            })
        })
        .collect()
}

async fn get_overview(
    State(api): State<ApiState>,
    Path((id, side)): Path<(String, String)>,
    Query(query): Query<BTreeMap<String, String>>,
) -> ApiResult {
    let side = parse_side(&side)?;
    let mode = match query.get("mode").map(String::as_str).unwrap_or("standard") {
        "standard" => OverviewMode::Standard,
        "explain" => OverviewMode::Explain,
        "group" => OverviewMode::Group,
        other => return Err(ApiError::bad_request(format!("unknown overview mode `{other}`"))),
    };
    let class = query.get("class").map(|c| parse_class(c)).transpose()?;
    let snap = api.snapshot();
    snap.base.dataset.check_leg(&id, side)?;
    let patient = snap.base.dataset.patient(&id).expect("checked");
    let (rows, class) = match mode {
        OverviewMode::Standard => (asymmetry_overview(patient).map_err(ServiceError::from)?, None),
        OverviewMode::Explain => {
            let map = |s: Side| match snap.base.legs.get(&(id.clone(), s)) {
                Some(l) => l.relevance.clone(),
                None => RelevanceMap::zeros(GaitClass::TrueEquinus, s),
            };
            (overview_relevance(&map(Side::Left), &map(Side::Right)), None)
        }
        OverviewMode::Group => {
            let key = (id.clone(), side);
            let class = class
                .or_else(|| snap.confirmed.get(&key).copied())
                .or_else(|| snap.base.legs.get(&key).map(|l| l.prediction.class))
                .ok_or_else(|| ApiError::bad_request("no class given and none known for this leg"))?;
            let stats = api.group_stats().await?;
            let group = stats.get(&class).ok_or(ServiceError::NoGroup(class))?;
            (zscore_overview(patient, group).map_err(ServiceError::from)?, Some(class))
        }
    };
    Ok(Json(json!({
        "patientId": id,
        "side": side,
        "mode": mode,
        "gaitClass": class,
        "channels": rows_json(&rows),
    })))
}

async fn get_group_stats(State(api): State<ApiState>, Path(class): Path<String>) -> ApiResult {
    let class = parse_class(&class)?;
    let stats = api.group_stats().await?;
    let group = stats.get(&class).ok_or(ServiceError::NoGroup(class))?;
    let per_side: BTreeMap<Side, Vec<Value>> = group
        .per_side
        .iter()
        .map(|(side, channels)| {
            let rows = catalog()
                .iter()
                .filter_map(|c| {
                    channels.get(c).map(|s| {
                        json!({
                            "key": c.key(),
                            "unit": c.unit(),
                            "n": s.n,
                            "mean": s.mean,
                            "std": s.std,
                        })
                    })
                })
                .collect();
            (*side, rows)
        })
        .collect();
    Ok(Json(json!({ "gaitClass": class, "perSide": per_side })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideBody {
    #[serde(alias = "chosenClass")]
    class: GaitClass,
    #[serde(default)]
    note: Option<String>,
}

async fn post_classification(
    State(api): State<ApiState>,
    Path((id, side)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let side = parse_side(&side)?;
    let body: OverrideBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))?;
    let o = ClassificationOverride {
        patient_id: id.clone(),
        side,
        chosen_class: body.class,
        timestamp: Utc::now(),
        note: body.note,
    };
    api.add_override(o.clone()).await?;
    let snap = api.snapshot();
    let mut leg = leg_json(&snap, &id, side);
    leg["override"] = serde_json::to_value(&o).expect("override serializes");
    Ok(Json(leg))
}

async fn get_catalog() -> Json<Value> {
    let channels: Vec<Value> = catalog()
        .iter()
        .map(|c| {
            json!({
                "key": c.key(),
                "label": c.label(),
                "variable": c.variable(),
                "bodyPart": c.body_part(),
                "plane": c.plane(),
                "unit": c.unit(),
                "inModel": c.in_model(),
                "modelIndex": c.model_index(),
            })
        })
        .collect();
    Json(json!({
        "catalogVersion": CATALOG_VERSION,
        "cycleLength": CYCLE_LEN,
        "featureLength": FEATURE_LEN,
        "classes": GaitClass::ALL,
        "channels": channels,
    }))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(api: ApiState) -> Router {
    Router::new()
        .route("/patients", get(list_patients))
        .route("/patients/{id}", get(get_patient))
        .route("/patients/{id}/sides/{side}/relevance", get(get_relevance))
        .route("/patients/{id}/sides/{side}/overview", get(get_overview))
        .route("/patients/{id}/sides/{side}/classification", post(post_classification))
        .route("/groups/{class}/stats", get(get_group_stats))
        .route("/meta/catalog", get(get_catalog))
        .fallback(not_found)
        .with_state(api)
}

pub struct ServerHandle {
    addr: SocketAddr,
    api: ApiState,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &ApiState {
        &self.api
    }

    pub async fn shutdown(self) -> Result<()> {
        let _ = self.shutdown.send(());
        match self.task.await {
            Ok(r) => r.map_err(|e| ServiceError::Io {
                path: self.addr.to_string(),
                source: e,
            }),
            Err(e) => Err(ServiceError::InvalidInput(format!("server task failed: {e}"))),
        }
    }

    /// Runs until the server stops on its own.
    pub async fn wait(self) -> Result<()> {
        let addr = self.addr;
        let _keep = self.shutdown;
        match self.task.await {
            Ok(r) => r.map_err(|e| ServiceError::Io {
                path: addr.to_string(),
                source: e,
            }),
            Err(e) => Err(ServiceError::InvalidInput(format!("server task failed: {e}"))),
        }
    }
}

/// Binds `addr` and serves in a background task. Binding errors, such as a
/// busy port, are returned before anything is spawned.
pub async fn serve(api: ApiState, addr: SocketAddr) -> Result<ServerHandle> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ServiceError::Io {
        path: addr.to_string(),
        source: e,
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Io {
        path: addr.to_string(),
        source: e,
    })?;
    let (tx, rx) = oneshot::channel();
    let app = router(api.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        api,
        shutdown: tx,
        task,
    })
}
