//! JSON over HTTP. Audit mutations carry the revision the caller last saw
//! and fail with 409 if it is stale. Monitor runs are queued as jobs.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use uuid::Uuid;

use mlaudit_core::canonical::{to_canonical_bytes, Digest};
use mlaudit_core::ids::{ActorId, AuditId, EvidenceId, StepId};
use mlaudit_core::lifecycle::StepStatus;
use mlaudit_core::reporting::{render, ReportFormat};
use mlaudit_core::risk_assessment::Requirement;
use mlaudit_core::risk_register::RiskRegisterEntry;
use mlaudit_core::workflow::{Audit, AuditEvent, Command, CreateAudit, QuestionFormat};

use crate::ops::{ErrorKind, EvidenceUpload, MonitorRequest, Service, ServiceError};

const ACTOR_HEADER: &str = "x-actor";
const DEFAULT_ACTOR: &str = "api";
const MAX_BODY: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done { revision: u64 },
    Failed { error: ErrorKind, message: String },
}

#[derive(Clone)]
pub struct AppState {
    service: Service,
    token: Option<Arc<str>>,
    workers: Arc<Semaphore>,
    jobs: Arc<Mutex<HashMap<Uuid, JobStatus>>>,
}

impl AppState {
    pub fn new(service: Service, token: Option<String>, workers: usize) -> Self {
        Self {
            service,
            token: token.map(Into::into),
            workers: Arc::new(Semaphore::new(workers.max(1))),
            jobs: Arc::default(),
        }
    }

    fn set_job(&self, id: Uuid, status: JobStatus) {
        self.jobs.lock().expect("job table poisoned").insert(id, status);
    }
}

pub fn router(state: AppState) -> Router {
    let audits = Router::new()
        .route("/audits", get(list_audits).post(create_audit))
        .route("/audits/{id}", get(get_audit))
        .route("/audits/{id}/log", get(get_log))
        .route("/audits/{id}/commands", post(post_command))
        .route("/audits/{id}/lifecycle", get(get_lifecycle))
        .route("/audits/{id}/lifecycle/steps/{step}", put(put_step))
        .route("/audits/{id}/gate", get(get_gate))
        .route("/audits/{id}/advance", post(advance))
        .route("/audits/{id}/questions", get(get_questions).post(import_questions))
        .route("/audits/{id}/responses", post(record_response))
        .route("/audits/{id}/evidence", post(add_evidence))
        .route("/audits/{id}/evidence/verify", get(verify_evidence))
        .route("/audits/{id}/tests", post(record_test))
        .route("/audits/{id}/monitors", post(start_monitor))
        .route("/audits/{id}/reports", post(compile_report))
        .route("/audits/{id}/reports/latest", get(latest_report))
        .route("/audits/{id}/reports/{iteration}", get(iteration_report))
        .route("/audits/{id}/events", post(record_event))
        .route("/audits/{id}/bundle", get(export_bundle))
        .route("/bundles", post(import_bundle))
        .route("/blobs", post(put_blob))
        .route("/blobs/{digest}", get(get_blob))
        .route("/register", get(query_register).post(add_register_entry))
        .route("/register/feed", post(ingest_feed))
        .route("/jobs/{job}", get(get_job))
        .layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .merge(audits)
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self { status, error, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, error) = match e.kind() {
            ErrorKind::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorKind::Conflict => (StatusCode::CONFLICT, "conflict"),
            ErrorKind::Rejected => (StatusCode::UNPROCESSABLE_ENTITY, "rejected"),
            ErrorKind::BadRequest => (StatusCode::BAD_REQUEST, "bad_request"),
            ErrorKind::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "request failed");
        }
        Self::new(status, error, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.error, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

/// Canonical JSON, so responses hash the same as stored entities.
fn canonical<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let bytes = to_canonical_bytes(value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok((status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response())
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    canonical(StatusCode::OK, value)
}

fn actor(headers: &HeaderMap) -> ActorId {
    let name = headers.get(ACTOR_HEADER).and_then(|v| v.to_str().ok()).map(str::trim).filter(|s| !s.is_empty());
    ActorId::new(name.unwrap_or(DEFAULT_ACTOR))
}

/// Calls into the store off the async runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Serialize)]
struct Revision<'a> {
    audit: &'a AuditId,
    revision: u64,
    iteration: u32,
    phase: mlaudit_core::workflow::IterationPhase,
}

fn revision(audit: &Audit) -> ApiResult {
    ok(&Revision { audit: &audit.id, revision: audit.revision, iteration: audit.current_iteration().index, phase: audit.phase() })
}

/// Body of a mutation: the revision the caller saw plus its payload.
#[derive(Deserialize)]
struct Mutation<T> {
    expected_revision: u64,
    #[serde(flatten)]
    payload: T,
}

async fn execute(state: AppState, id: AuditId, headers: &HeaderMap, expected: u64, command: Command) -> ApiResult {
    let who = actor(headers);
    let audit = blocking(move || state.service.execute(&id, Some(expected), &who, command)).await?;
    revision(&audit)
}

async fn list_audits(State(state): State<AppState>) -> ApiResult {
    ok(&blocking(move || state.service.list()).await?)
}

async fn create_audit(State(state): State<AppState>, headers: HeaderMap, Json(body): Json<CreateAudit>) -> ApiResult {
    let who = actor(&headers);
    let audit = blocking(move || state.service.create(&who, body)).await?;
    canonical(StatusCode::CREATED, &Revision { audit: &audit.id, revision: audit.revision, iteration: 0, phase: audit.phase() })
}

async fn get_audit(State(state): State<AppState>, Path(id): Path<AuditId>) -> ApiResult {
    ok(&*blocking(move || state.service.load(&id)).await?)
}

async fn get_log(State(state): State<AppState>, Path(id): Path<AuditId>) -> ApiResult {
    ok(&blocking(move || Ok(state.service.store().log(&id)?)).await?)
}

/// Body is the tagged command plus `expected_revision`, e.g.
/// `{"expected_revision":4,"command":"derive_concerns"}`.
async fn post_command(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<Command>>) -> ApiResult {
    if matches!(body.payload, Command::Create(_)) {
        return Err(ApiError::bad_request("create audits with POST /audits"));
    }
    execute(state, id, &headers, body.expected_revision, body.payload).await
}

async fn get_lifecycle(State(state): State<AppState>, Path(id): Path<AuditId>) -> ApiResult {
    let audit = blocking(move || state.service.load(&id)).await?;
    #[derive(Serialize)]
    struct View<'a> {
        model: &'a mlaudit_core::lifecycle::LifecycleModel,
        colors: std::collections::BTreeMap<StepId, mlaudit_core::lifecycle::Color>,
        coverage: mlaudit_core::lifecycle::CoverageReport,
    }
    ok(&View { model: &audit.lifecycle, colors: audit.lifecycle.color_map(), coverage: audit.lifecycle.coverage() })
}

#[derive(Deserialize)]
struct StepBody {
    status: StepStatus,
    #[serde(default)]
    rationale: String,
}

async fn put_step(State(state): State<AppState>, Path((id, step)): Path<(AuditId, StepId)>, headers: HeaderMap, Json(body): Json<Mutation<StepBody>>) -> ApiResult {
    let cmd = Command::AssessStep { step, status: body.payload.status, rationale: body.payload.rationale };
    execute(state, id, &headers, body.expected_revision, cmd).await
}

async fn get_gate(State(state): State<AppState>, Path(id): Path<AuditId>) -> ApiResult {
    ok(&blocking(move || state.service.gate(&id)).await?)
}

#[derive(Deserialize)]
struct Empty {}

async fn advance(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<Empty>>) -> ApiResult {
    execute(state, id, &headers, body.expected_revision, Command::AdvancePhase).await
}

#[derive(Deserialize)]
struct QuestionFilter {
    /// Comma-separated requirement names.
    requirements: Option<String>,
}

fn parse_requirements(list: &str) -> ApiResult<BTreeSet<Requirement>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_enum::<Requirement>(s).map_err(ApiError::bad_request)).collect()
}

/// Accepts the wire name or a snake/kebab-case spelling of an enum variant.
pub fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    let pascal: String = s
        .split(['_', '-', ' '])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
        })
        .collect();
    serde_json::from_value(serde_json::Value::String(pascal)).map_err(|_| format!("unknown value `{s}`"))
}

async fn get_questions(State(state): State<AppState>, Path(id): Path<AuditId>, Query(q): Query<QuestionFilter>) -> ApiResult {
    let reqs = q.requirements.as_deref().map(parse_requirements).transpose()?;
    ok(&blocking(move || state.service.questions(&id, reqs.as_ref())).await?)
}

#[derive(Deserialize)]
struct ImportQuery {
    expected_revision: u64,
    format: String,
}

/// The raw CSV or JSON file is the request body.
async fn import_questions(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Query(q): Query<ImportQuery>, body: Bytes) -> ApiResult {
    let format: QuestionFormat = parse_enum(&q.format).map_err(ApiError::bad_request)?;
    let who = actor(&headers);
    let audit = blocking(move || state.service.import_questions(&id, Some(q.expected_revision), &who, format, &body)).await?;
    revision(&audit)
}

#[derive(Deserialize)]
struct ResponseBody {
    question: mlaudit_core::ids::QuestionId,
    answer: mlaudit_core::risk_assessment::Answer,
    justification: String,
    #[serde(default)]
    evidence_refs: Vec<EvidenceId>,
}

async fn record_response(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<ResponseBody>>) -> ApiResult {
    let r = body.payload;
    let cmd = Command::RecordResponse { question: r.question, answer: r.answer, justification: r.justification, evidence_refs: r.evidence_refs };
    execute(state, id, &headers, body.expected_revision, cmd).await
}

#[derive(Deserialize)]
struct EvidenceBody {
    evidence: EvidenceUpload,
    /// Artefact content, base64.
    content: String,
}

async fn add_evidence(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<EvidenceBody>>) -> ApiResult {
    let content = B64.decode(body.payload.content.as_bytes()).map_err(|e| ApiError::bad_request(format!("content: {e}")))?;
    let who = actor(&headers);
    let expected = body.expected_revision;
    let audit = blocking(move || state.service.add_evidence(&id, Some(expected), &who, body.payload.evidence, &content)).await?;
    revision(&audit)
}

#[derive(Deserialize)]
struct VerifyQuery {
    id: Option<EvidenceId>,
}

async fn verify_evidence(State(state): State<AppState>, Path(id): Path<AuditId>, Query(q): Query<VerifyQuery>) -> ApiResult {
    ok(&blocking(move || state.service.verify_evidence(&id, q.id.as_ref())).await?)
}

#[derive(Deserialize)]
struct TestBody {
    record: mlaudit_core::fieldwork::TestRecord,
}

async fn record_test(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<TestBody>>) -> ApiResult {
    execute(state, id, &headers, body.expected_revision, Command::RecordTest { record: body.payload.record }).await
}

#[derive(Deserialize)]
struct MonitorBody {
    spec: MonitorRequest,
    /// Digest of a prediction log uploaded through `/blobs`.
    log: Digest,
}

/// Validates synchronously, then queues the run and answers 202 with a job id.
async fn start_monitor(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<MonitorBody>>) -> ApiResult {
    let spec = state.service.monitor_spec(&body.payload.spec)?;
    let job = Uuid::new_v4();
    state.set_job(job, JobStatus::Queued);
    let who = actor(&headers);
    let expected = body.expected_revision;
    let log = body.payload.log;
    let st = state.clone();
    tokio::spawn(async move {
        let Ok(_permit) = st.workers.clone().acquire_owned().await else { return };
        st.set_job(job, JobStatus::Running);
        let svc = st.service.clone();
        let status = match tokio::task::spawn_blocking(move || svc.run_monitor(&id, Some(expected), &who, spec, log)).await {
            Ok(Ok(audit)) => JobStatus::Done { revision: audit.revision },
            Ok(Err(e)) => JobStatus::Failed { error: e.kind(), message: e.to_string() },
            Err(e) => JobStatus::Failed { error: ErrorKind::Internal, message: e.to_string() },
        };
        st.set_job(job, status);
    });
    canonical(StatusCode::ACCEPTED, &serde_json::json!({ "job": job.to_string() }))
}

async fn get_job(State(state): State<AppState>, Path(job): Path<Uuid>) -> ApiResult {
    let status = state.jobs.lock().expect("job table poisoned").get(&job).cloned();
    match status {
        Some(s) => ok(&serde_json::json!({ "job": job.to_string(), "status": s })),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no job {job}"))),
    }
}

async fn compile_report(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<Empty>>) -> ApiResult {
    let who = actor(&headers);
    let report = blocking(move || state.service.compile_report(&id, Some(body.expected_revision), &who)).await?;
    canonical(StatusCode::CREATED, &report)
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn report_response(report: &mlaudit_core::reporting::AuditReport, format: Option<&str>) -> ApiResult {
    let format: ReportFormat = format.unwrap_or("canonical").parse().map_err(|e: mlaudit_core::reporting::ReportError| ApiError::bad_request(e.to_string()))?;
    let content_type = match format {
        ReportFormat::Canonical => "application/json",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static(content_type))], render(report, format)).into_response())
}

async fn latest_report(State(state): State<AppState>, Path(id): Path<AuditId>, Query(q): Query<FormatQuery>) -> ApiResult {
    let report = blocking(move || state.service.report(&id, None)).await?;
    report_response(&report, q.format.as_deref())
}

async fn iteration_report(State(state): State<AppState>, Path((id, iteration)): Path<(AuditId, u32)>, Query(q): Query<FormatQuery>) -> ApiResult {
    let report = blocking(move || state.service.report(&id, Some(iteration))).await?;
    report_response(&report, q.format.as_deref())
}

#[derive(Deserialize)]
struct EventBody {
    event: AuditEvent,
}

async fn record_event(State(state): State<AppState>, Path(id): Path<AuditId>, headers: HeaderMap, Json(body): Json<Mutation<EventBody>>) -> ApiResult {
    execute(state, id, &headers, body.expected_revision, Command::RecordEvent { event: body.payload.event }).await
}

async fn export_bundle(State(state): State<AppState>, Path(id): Path<AuditId>) -> ApiResult {
    let bytes = blocking(move || state.service.export_bundle(&id)).await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response())
}

#[derive(Deserialize)]
struct RenameQuery {
    rename: Option<AuditId>,
}

async fn import_bundle(State(state): State<AppState>, Query(q): Query<RenameQuery>, body: Bytes) -> ApiResult {
    let id = blocking(move || state.service.import_bundle(&body, q.rename)).await?;
    canonical(StatusCode::CREATED, &serde_json::json!({ "audit": id }))
}

async fn put_blob(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let digest = blocking(move || state.service.put_blob(&body)).await?;
    canonical(StatusCode::CREATED, &serde_json::json!({ "digest": digest }))
}

async fn get_blob(State(state): State<AppState>, Path(digest): Path<String>) -> ApiResult {
    let digest = Digest::parse(&digest).ok_or_else(|| ApiError::bad_request(format!("`{digest}` is not a digest")))?;
    let bytes = blocking(move || state.service.get_blob(&digest)).await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"))], bytes).into_response())
}

#[derive(Deserialize)]
struct RegisterQuery {
    /// Comma-separated step ids.
    steps: Option<String>,
    requirement: Option<String>,
}

async fn query_register(State(state): State<AppState>, Query(q): Query<RegisterQuery>) -> ApiResult {
    let steps: BTreeSet<StepId> = q.steps.as_deref().unwrap_or("").split(',').map(str::trim).filter(|s| !s.is_empty()).map(StepId::new).collect();
    let requirement = q.requirement.as_deref().map(parse_enum::<Requirement>).transpose().map_err(ApiError::bad_request)?;
    ok(&blocking(move || state.service.register_query(&steps, requirement)).await?)
}

#[derive(Deserialize)]
struct EntryBody {
    /// Register revision the caller last saw.
    expected_revision: u64,
    entry: RiskRegisterEntry,
}

async fn add_register_entry(State(state): State<AppState>, Json(body): Json<EntryBody>) -> ApiResult {
    let rev = blocking(move || state.service.register_add(body.entry, Some(body.expected_revision))).await?;
    canonical(StatusCode::CREATED, &serde_json::json!({ "revision": rev }))
}

#[derive(Deserialize)]
struct FeedQuery {
    feed: String,
    expected_revision: u64,
}

/// The feed CSV is the request body.
async fn ingest_feed(State(state): State<AppState>, headers: HeaderMap, Query(q): Query<FeedQuery>, body: Bytes) -> ApiResult {
    let who = actor(&headers);
    let ids = blocking(move || state.service.register_feed(&body, &q.feed, &who, Some(q.expected_revision))).await?;
    canonical(StatusCode::CREATED, &serde_json::json!({ "added": ids }))
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
