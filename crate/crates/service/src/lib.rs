//! HTTP/JSON front end over persisted campaigns.
//!
//! Every request loads the campaign file, works on it and, for mutating
//! endpoints, writes it back with a revision compare-and-swap. Responses use
//! one envelope: `{"ok": true, "data": .., "revision": r}` or
//! `{"ok": false, "error": {"code", "message", "details"}, "revision": r}`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bayesdoe::io::{load_campaign, save_campaign};
use bayesdoe::{
    ask_with, fit_models, init_campaign_with_id, observed_pareto, recommend, suggest, tell, BatchStrategy, CampaignConfig,
    CampaignState, Error, Observation, OutputColumn, OutputRole, RecommendOutcome, Sense, Variable,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const PORT_VAR: &str = "BAYESDOE_PORT";
pub const DIR_VAR: &str = "BAYESDOE_DIR";

/// Largest slice resolution served.
pub const MAX_SLICE_POINTS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory holding `<id>.json` campaign files.
    pub dir: PathBuf,
    pub host: String,
    pub port: u16,
    /// Origin allowed by CORS; any origin when absent.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            dir: PathBuf::from("."),
            host: "127.0.0.1".to_string(),
            port: 8080,
            cors_origin: None,
        }
    }
}

/// Binds the configured address and serves until the process ends.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    fs::create_dir_all(&config.dir)?;
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
    log::info!("listening on {}, campaigns in {}", listener.local_addr()?, config.dir.display());
    axum::serve(listener, router(&config)).await
}

struct AppState {
    dir: PathBuf,
    /// One async lock per campaign (plus one for creation) so a retried
    /// request sees the reply of the first attempt.
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    async fn lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .await
            .entry(key.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    }

    fn campaign_path(&self, id: &str) -> Result<PathBuf, ApiError> {
        if valid_id(id) {
            Ok(self.dir.join(format!("{id}.json")))
        } else {
            Err(ApiError::not_found(id))
        }
    }

    fn load(&self, id: &str) -> Result<CampaignState, ApiError> {
        let path = self.campaign_path(id)?;
        load_campaign(&path).map_err(|e| match e {
            Error::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => ApiError::not_found(id),
            other => other.into(),
        })
    }

    fn replies_path(&self, scope: &str) -> PathBuf {
        self.dir.join(format!("{scope}.requests.json"))
    }

    fn recall(&self, scope: &str, request_id: &str) -> Option<StoredReply> {
        let text = fs::read_to_string(self.replies_path(scope)).ok()?;
        let mut all: BTreeMap<String, StoredReply> = serde_json::from_str(&text).ok()?;
        all.remove(request_id)
    }

    fn remember(&self, scope: &str, request_id: &str, reply: &StoredReply) -> Result<(), ApiError> {
        let path = self.replies_path(scope);
        let mut all: BTreeMap<String, StoredReply> = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        all.insert(request_id.to_string(), reply.clone());
        let text = serde_json::to_string(&all).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| ApiError::internal(e.to_string()))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredReply {
    status: u16,
    body: Value,
}

impl IntoResponse for StoredReply {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::OK);
        (status, Json(self.body)).into_response()
    }
}

pub fn router(config: &ServiceConfig) -> Router {
    let origin = match &config.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE]);
    let state = Arc::new(AppState {
        dir: config.dir.clone(),
        locks: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/campaigns", post(create))
        .route("/campaigns/{id}", get(summary))
        .route("/campaigns/{id}/ask", post(ask_handler))
        .route("/campaigns/{id}/tell", post(tell_handler))
        .route("/campaigns/{id}/recommend", get(recommend_handler))
        .route("/campaigns/{id}/pareto", get(pareto_handler))
        .route("/campaigns/{id}/slice", get(slice_handler))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Value,
    revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
            revision: None,
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no campaign '{id}'"))
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn invalid(message: impl Into<String>, details: Vec<FieldError>) -> Self {
        let mut e = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message);
        if !details.is_empty() {
            e.details = serde_json::to_value(details).unwrap_or(Value::Null);
        }
        e
    }

    fn conflict(expected: u64, found: u64) -> Self {
        let mut e = ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            format!("campaign is at revision {found}, request expected {expected}"),
        );
        e.revision = Some(found);
        e
    }

    fn at(mut self, revision: u64) -> Self {
        self.revision.get_or_insert(revision);
        self
    }
}

#[derive(Debug, Serialize)]
struct FieldError {
    field: String,
    message: String,
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Conflict { expected, found } => ApiError::conflict(expected, found),
            Error::RejectedRows(ref rows) => {
                let details = rows.iter().map(|r| field(format!("rows[{}]", r.row), r.reason.clone())).collect();
                ApiError::invalid(e.to_string(), details)
            }
            Error::Parse {
                row,
                ref column,
                ref message,
            } => {
                let details = vec![field(format!("rows[{row}].{column}"), message.clone())];
                ApiError::invalid(e.to_string(), details)
            }
            ref other if other.is_validation() => ApiError::invalid(other.to_string(), Vec::new()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = match r {
            JsonRejection::JsonDataError(_) | JsonRejection::JsonSyntaxError(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ref other => other.status(),
        };
        ApiError::new(status, "validation", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code, "message": self.message});
        if !self.details.is_null() {
            error["details"] = self.details;
        }
        let mut body = json!({"ok": false, "error": error});
        if let Some(r) = self.revision {
            body["revision"] = json!(r);
        }
        (self.status, Json(body)).into_response()
    }
}

fn envelope(data: Value, revision: u64) -> Value {
    json!({"ok": true, "data": data, "revision": revision})
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> bayesdoe::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

/// A measured row, either positional or keyed by variable and output names.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RowInput {
    Positional { point: Vec<f64>, outputs: Vec<f64> },
    Named(BTreeMap<String, f64>),
}

fn to_observations(state: &CampaignState, rows: &[RowInput], clamp: bool) -> Result<Vec<Observation>, ApiError> {
    let vars = state.space.names();
    let cols: Vec<&str> = state.data.columns().iter().map(|c| c.name.as_str()).collect();
    let mut problems = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let obs = match row {
            RowInput::Positional { point, outputs } => Observation::new(point.clone(), outputs.clone()),
            RowInput::Named(map) => {
                let mut take = |name: &str| match map.get(name) {
                    Some(v) => *v,
                    None => {
                        problems.push(field(format!("rows[{i}].{name}"), "missing"));
                        f64::NAN
                    }
                };
                let point = vars.iter().map(|n| take(n)).collect();
                let outputs = cols.iter().map(|n| take(n)).collect();
                for k in map.keys().filter(|k| !vars.contains(&k.as_str()) && !cols.contains(&k.as_str())) {
                    problems.push(field(format!("rows[{i}].{k}"), "unknown column"));
                }
                Observation::new(point, outputs)
            }
        };
        out.push(obs);
    }
    if !problems.is_empty() {
        return Err(ApiError::invalid("rows do not match the campaign columns", problems));
    }
    if clamp {
        for obs in &mut out {
            if obs.point.len() == state.space.dim() {
                obs.point = state.space.clamp(&obs.point);
            }
        }
    }
    Ok(out)
}

/// Objective column, its sense, and the best feasible observed (row, value).
type Incumbents = Vec<(usize, Sense, Option<(usize, f64)>)>;

fn incumbents(state: &CampaignState) -> Incumbents {
    let feasible = state.feasible_rows();
    state
        .objectives()
        .into_iter()
        .map(|(col, sense)| {
            let best = feasible
                .iter()
                .map(|&r| (r, state.data.outputs()[r][col]))
                .fold(None, |acc: Option<(usize, f64)>, (r, v)| match acc {
                    Some((_, b)) if sense.sign() * v <= sense.sign() * b => acc,
                    _ => Some((r, v)),
                });
            (col, sense, best)
        })
        .collect()
}

fn summary_json(state: &CampaignState) -> Value {
    let cols = state.data.columns();
    let observations: Vec<Value> = (0..state.data.len())
        .map(|r| {
            json!({
                "row": r,
                "point": state.data.points()[r],
                "outputs": state.data.outputs()[r],
                "feasible": state.row_feasible(r),
            })
        })
        .collect();
    let incumbent: Vec<Value> = incumbents(state)
        .into_iter()
        .map(|(col, _, best)| match best {
            Some((r, v)) => json!({"column": cols[col].name, "row": r, "value": v, "point": state.data.points()[r]}),
            None => json!({"column": cols[col].name, "row": null, "value": null, "point": null}),
        })
        .collect();
    // best-so-far of the first objective in told order, for the trace chart
    let trace: Vec<Value> = match state.objectives().first() {
        Some(&(col, sense)) => {
            let mut best: Option<f64> = None;
            (0..state.data.len())
                .map(|r| {
                    let v = state.data.outputs()[r][col];
                    if state.row_feasible(r) && best.is_none_or(|b| sense.sign() * v > sense.sign() * b) {
                        best = Some(v);
                    }
                    json!({"row": r, "value": v, "best_so_far": best})
                })
                .collect()
        }
        None => Vec::new(),
    };
    json!({
        "id": state.id,
        "revision": state.revision,
        "variables": state.space.variables(),
        "outputs": cols,
        "observations": observations,
        "pending": state.pending,
        "incumbent": incumbent,
        "trace": trace,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    variables: Vec<Variable>,
    #[serde(default)]
    outputs: Vec<OutputColumn>,
    #[serde(default)]
    config: Option<CampaignConfig>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    rows: Vec<RowInput>,
    #[serde(default)]
    request_id: Option<String>,
}

async fn create(State(app): State<Arc<AppState>>, payload: Result<Json<CreateRequest>, JsonRejection>) -> Response {
    let Json(req) = match payload {
        Ok(p) => p,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let lock = app.lock("").await;
    let _held = lock.lock().await;
    if let Some(reply) = req.request_id.as_deref().and_then(|r| app.recall("create", r)) {
        return reply.into_response();
    }
    match create_inner(&app, &req) {
        Ok(reply) => {
            if let Some(r) = &req.request_id {
                if let Err(e) = app.remember("create", r, &reply) {
                    return e.into_response();
                }
            }
            reply.into_response()
        }
        Err(e) => e.into_response(),
    }
}

fn create_inner(app: &AppState, req: &CreateRequest) -> Result<StoredReply, ApiError> {
    let space = bayesdoe::DesignSpace::new(req.variables.clone())?;
    let outputs = if req.outputs.is_empty() {
        vec![OutputColumn::objective("y", Sense::Maximize)]
    } else {
        req.outputs.clone()
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let config = req.config.clone().unwrap_or_default();
    let mut state = init_campaign_with_id(id, space, outputs, config, req.seed)?;
    if !req.rows.is_empty() {
        let rows = to_observations(&state, &req.rows, false)?;
        state = tell(&state, rows)?;
    }
    save_campaign(app.campaign_path(&state.id)?, &state, None)?;
    Ok(StoredReply {
        status: StatusCode::CREATED.as_u16(),
        body: envelope(summary_json(&state), state.revision),
    })
}

async fn summary(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let state = app.load(&id)?;
    Ok(Json(envelope(summary_json(&state), state.revision)))
}

fn default_q() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    #[serde(default = "default_q")]
    q: usize,
    #[serde(default)]
    strategy: Option<String>,
    /// Revision the client last saw; the ask is refused if the campaign moved on.
    #[serde(default)]
    revision: Option<u64>,
    /// Compute suggestions without recording them as pending.
    #[serde(default)]
    dry_run: bool,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TellRequest {
    rows: Vec<RowInput>,
    #[serde(default)]
    revision: Option<u64>,
    /// Clamp out-of-box points into the design box instead of rejecting them.
    #[serde(default)]
    clamp: bool,
    #[serde(default)]
    request_id: Option<String>,
}

/// Runs a mutating request under the campaign lock, replaying the stored
/// reply when `request_id` was already served.
async fn idempotent<F, Fut>(app: &Arc<AppState>, id: &str, request_id: Option<&str>, op: F) -> Response
where
    F: FnOnce() -> Fut,
    Fut: std::future::Future<Output = Result<StoredReply, ApiError>>,
{
    if !valid_id(id) {
        return ApiError::not_found(id).into_response();
    }
    let lock = app.lock(id).await;
    let _held = lock.lock().await;
    if let Some(reply) = request_id.and_then(|r| app.recall(id, r)) {
        return reply.into_response();
    }
    match op().await {
        Ok(reply) => {
            if let Some(r) = request_id {
                if let Err(e) = app.remember(id, r, &reply) {
                    return e.into_response();
                }
            }
            reply.into_response()
        }
        Err(e) => e.into_response(),
    }
}

fn check_revision(state: &CampaignState, expected: Option<u64>) -> Result<(), ApiError> {
    match expected {
        Some(r) if r != state.revision => Err(ApiError::conflict(r, state.revision)),
        _ => Ok(()),
    }
}

async fn ask_handler(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<AskRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match payload {
        Ok(p) => p,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let request_id = req.request_id.clone();
    idempotent(&app, &id, request_id.as_deref(), || async {
        let state = app.load(&id)?;
        check_revision(&state, req.revision)?;
        let strategy = match &req.strategy {
            Some(s) => s
                .parse::<BatchStrategy>()
                .map_err(|e| ApiError::invalid(e.to_string(), vec![field("strategy", e.to_string())]).at(state.revision))?,
            None => state.config.acquisition.strategy,
        };
        let q = req.q;
        let revision = state.revision;
        let names: Vec<String> = state.space.names().iter().map(|s| s.to_string()).collect();
        if req.dry_run {
            let shared = state.clone();
            let result = blocking(move || suggest(&shared, q, strategy))
                .await
                .map_err(|e| e.at(revision))?;
            let mut data = serde_json::to_value(&result).map_err(|e| ApiError::internal(e.to_string()))?;
            data["variables"] = json!(names);
            return Ok(StoredReply {
                status: 200,
                body: envelope(data, revision),
            });
        }
        let (next, result) = blocking(move || ask_with(&state, q, strategy))
            .await
            .map_err(|e| e.at(revision))?;
        save_campaign(app.campaign_path(&id)?, &next, Some(revision))?;
        let mut data = serde_json::to_value(&result).map_err(|e| ApiError::internal(e.to_string()))?;
        data["variables"] = json!(names);
        Ok(StoredReply {
            status: 200,
            body: envelope(data, next.revision),
        })
    })
    .await
}

async fn tell_handler(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<TellRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match payload {
        Ok(p) => p,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let request_id = req.request_id.clone();
    idempotent(&app, &id, request_id.as_deref(), || async {
        let state = app.load(&id)?;
        check_revision(&state, req.revision)?;
        let rows = to_observations(&state, &req.rows, req.clamp).map_err(|e| e.at(state.revision))?;
        let next = tell(&state, rows).map_err(|e| ApiError::from(e).at(state.revision))?;
        save_campaign(app.campaign_path(&id)?, &next, Some(state.revision))?;
        Ok(StoredReply {
            status: 200,
            body: envelope(summary_json(&next), next.revision),
        })
    })
    .await
}

fn rows_json(state: &CampaignState, rows: &[usize]) -> Value {
    rows.iter()
        .map(|&r| json!({"row": r, "point": state.data.points()[r], "outputs": state.data.outputs()[r]}))
        .collect()
}

async fn recommend_handler(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    let state = Arc::new(app.load(&id)?);
    let revision = state.revision;
    let shared = state.clone();
    let outcome = blocking(move || recommend(&shared)).await.map_err(|e| e.at(revision))?;
    let mut data = serde_json::to_value(&outcome).map_err(|e| ApiError::internal(e.to_string()))?;
    if let RecommendOutcome::Pareto { indices } = &outcome {
        data["rows"] = rows_json(&state, indices);
    }
    data["variables"] = json!(state.space.names());
    Ok(Json(envelope(data, revision)))
}

async fn pareto_handler(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let state = app.load(&id)?;
    let rows = observed_pareto(&state);
    let data = json!({
        "variables": state.space.names(),
        "outputs": state.data.columns().iter().map(|c| &c.name).collect::<Vec<_>>(),
        "rows": rows_json(&state, &rows),
    });
    Ok(Json(envelope(data, state.revision)))
}

#[derive(Debug, Deserialize)]
struct SliceQuery {
    /// Variable index or name.
    dim: String,
    points: Option<usize>,
    /// Output column; the first objective when absent.
    column: Option<String>,
}

/// Posterior mean and a two-standard-deviation band along one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub variable: String,
    pub column: String,
    /// Point the other variables are held at.
    pub anchor: Vec<f64>,
    pub anchor_row: Option<usize>,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// The slice is anchored at the incumbent of the first objective (best
/// feasible observed row, or best observed row when nothing is feasible).
pub fn compute_slice(state: &CampaignState, dim: usize, points: usize, column: usize) -> bayesdoe::Result<Slice> {
    let models = fit_models(state)?;
    let cols = state.data.columns();
    let (sign, model) = if let Some((_, sense, m)) = models.objectives.iter().find(|(i, _, _)| *i == column) {
        (sense.sign(), m)
    } else if let Some((_, m)) = models.constraints.iter().find(|(c, _)| c.output_index == column) {
        (1.0, m)
    } else {
        return Err(bayesdoe::Error::Argument(format!("column '{}' is not modeled", cols[column].name)));
    };
    let anchor_row = match incumbents(state).first() {
        Some((_, _, Some((r, _)))) => Some(*r),
        Some((col, sense, None)) => (0..state.data.len()).max_by(|&a, &b| {
            let va = sense.sign() * state.data.outputs()[a][*col];
            let vb = sense.sign() * state.data.outputs()[b][*col];
            va.total_cmp(&vb).then(b.cmp(&a))
        }),
        None => None,
    };
    let anchor = match anchor_row {
        Some(r) => state.data.points()[r].clone(),
        None => state.space.from_unit(&vec![0.5; state.space.dim()]),
    };
    let var = &state.space.variables()[dim];
    let mut slice = Slice {
        variable: var.name.clone(),
        column: cols[column].name.clone(),
        anchor: anchor.clone(),
        anchor_row,
        x: Vec::with_capacity(points),
        mean: Vec::with_capacity(points),
        lower: Vec::with_capacity(points),
        upper: Vec::with_capacity(points),
    };
    for i in 0..points {
        let t = i as f64 / (points - 1) as f64;
        let mut p = anchor.clone();
        p[dim] = var.lower + t * (var.upper - var.lower);
        let post = model.posterior(&p)?;
        let mean = sign * post.mean;
        let sd = post.variance.max(0.0).sqrt();
        slice.x.push(p[dim]);
        slice.mean.push(mean);
        slice.lower.push(mean - 2.0 * sd);
        slice.upper.push(mean + 2.0 * sd);
    }
    Ok(slice)
}

async fn slice_handler(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    query: Query<SliceQuery>,
) -> Result<Json<Value>, ApiError> {
    let state = app.load(&id)?;
    let revision = state.revision;
    let names = state.space.names();
    let mut problems = Vec::new();
    let dim = match query.dim.parse::<usize>() {
        Ok(k) if k < names.len() => Some(k),
        Ok(k) => {
            problems.push(field("dim", format!("index {k} out of range, campaign has {} variables", names.len())));
            None
        }
        Err(_) => {
            let k = names.iter().position(|n| *n == query.dim);
            if k.is_none() {
                problems.push(field("dim", format!("unknown variable '{}'", query.dim)));
            }
            k
        }
    };
    let points = query.points.unwrap_or(200);
    if !(2..=MAX_SLICE_POINTS).contains(&points) {
        problems.push(field("points", format!("must be between 2 and {MAX_SLICE_POINTS}")));
    }
    let column = match &query.column {
        Some(name) => {
            let c = state.data.column_index(name);
            let modeled = c.is_some_and(|c| !matches!(state.data.columns()[c].role, OutputRole::Auxiliary));
            if !modeled {
                problems.push(field("column", format!("'{name}' is not a modeled output")));
            }
            c
        }
        None => state.objectives().first().map(|(c, _)| *c),
    };
    if !problems.is_empty() {
        return Err(ApiError::invalid("invalid slice request", problems).at(revision));
    }
    let (dim, column) = (dim.expect("validated"), column.expect("validated"));
    let slice = blocking(move || compute_slice(&state, dim, points, column))
        .await
        .map_err(|e| e.at(revision))?;
    let data = serde_json::to_value(&slice).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(envelope(data, revision)))
}
