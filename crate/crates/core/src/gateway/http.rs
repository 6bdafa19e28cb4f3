//! JSON-over-HTTP binding of the gateway.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Claim, Gateway, GatewayError};
use crate::assignment::Condition;
use crate::corpus::GroundTruth;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub self_identified_race: String,
    #[serde(default)]
    pub prior_experience: bool,
}

/// Registration result. The coded label is returned, the free text is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub worker_id: String,
    pub experiment_id: String,
    pub coded_race: Option<String>,
    pub condition: Condition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub worker_id: String,
    pub experiment_id: String,
}

/// Assignment as the worker sees it: gold flags and policy are withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub assignment_id: String,
    pub worker_id: String,
    pub experiment_id: String,
    pub pair_ids: Vec<String>,
    pub answered: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub already_claimed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub worker_id: String,
    pub pair_id: String,
    pub decision: GroundTruth,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub format: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        use GatewayError as G;
        let (status, code) = match &e {
            G::ExperimentClosed => (StatusCode::CONFLICT, "experiment_closed"),
            G::ExperimentNotOpen => (StatusCode::CONFLICT, "experiment_not_open"),
            G::ExperimentStillOpen => (StatusCode::CONFLICT, "experiment_still_open"),
            G::DuplicateVerdict { .. } => (StatusCode::CONFLICT, "duplicate_verdict"),
            G::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            G::UnknownExperiment(_) => (StatusCode::NOT_FOUND, "unknown_experiment"),
            G::UnknownWorker(_) => (StatusCode::NOT_FOUND, "unknown_worker"),
            G::UnknownPair(_) => (StatusCode::NOT_FOUND, "unknown_pair"),
            G::IneligibleWorker => (StatusCode::FORBIDDEN, "ineligible_worker"),
            G::UnmappedWorker(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unmapped_worker"),
            G::PairNotAssigned { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "pair_not_assigned"),
            G::Report(_) => (StatusCode::UNPROCESSABLE_ENTITY, "report_unavailable"),
            G::Assignment(_) => (StatusCode::UNPROCESSABLE_ENTITY, "assignment_failed"),
            G::Corpus(_) | G::Config(_) | G::ConfigMismatch(_) | G::Corrupt { .. } | G::Storage(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a blocking gateway call off the async executor.
async fn blocking<T, F>(gateway: &Arc<Gateway>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Gateway) -> Result<T, GatewayError> + Send + 'static,
{
    let gateway = Arc::clone(gateway);
    tokio::task::spawn_blocking(move || f(&gateway))
        .await
        .map_err(|e| ApiError::from(GatewayError::Storage(e.to_string())))?
        .map_err(ApiError::from)
}

fn view(claim: Claim, experiment_id: &str) -> AssignmentView {
    AssignmentView {
        assignment_id: claim.assignment.assignment_id,
        worker_id: claim.assignment.worker_id,
        experiment_id: experiment_id.to_string(),
        pair_ids: claim.assignment.pair_ids,
        answered: claim.answered,
        created_at: claim.assignment.created_at,
        already_claimed: claim.already_claimed,
    }
}

async fn register(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterResponse>)> {
    let Json(req) = body?;
    let experiment_id = gw.experiment_id().to_string();
    let profile = blocking(&gw, move |g| g.register_worker(&req.self_identified_race, req.prior_experience)).await?;
    Ok((
        StatusCode::CREATED,
        Json(RegisterResponse {
            worker_id: profile.worker_id,
            experiment_id,
            coded_race: profile.coded_race.as_canonical().map(str::to_string),
            condition: profile.condition,
        }),
    ))
}

async fn claim(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<ClaimRequest>, JsonRejection>,
) -> ApiResult<Json<AssignmentView>> {
    let Json(req) = body?;
    let experiment_id = req.experiment_id.clone();
    let claim = blocking(&gw, move |g| g.claim_assignment(&req.worker_id, &req.experiment_id)).await?;
    Ok(Json(view(claim, &experiment_id)))
}

async fn pair(State(gw): State<Arc<Gateway>>, Path(pair_id): Path<String>) -> ApiResult<Json<super::PairView>> {
    Ok(Json(gw.pair(&pair_id)?))
}

async fn verdict(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<VerdictRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<super::Ack>)> {
    let Json(req) = body?;
    let ack = blocking(&gw, move |g| {
        g.submit_verdict(&req.worker_id, &req.pair_id, req.decision, req.elapsed_ms)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

async fn report(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let report = blocking(&gw, move |g| g.fetch_report(&id)).await?;
    Ok(match q.format.as_deref() {
        Some("text") => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], report.to_text()).into_response(),
        _ => Json(report).into_response(),
    })
}

async fn progress(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<super::Progress>> {
    if id != gw.experiment_id() {
        return Err(GatewayError::UnknownExperiment(id).into());
    }
    Ok(Json(gw.progress()))
}

async fn open(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<super::Progress>> {
    blocking(&gw, move |g| {
        g.check_experiment(&id)?;
        g.open_experiment()
    })
    .await?;
    Ok(Json(gw.progress()))
}

async fn close(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<Json<super::Progress>> {
    blocking(&gw, move |g| {
        g.check_experiment(&id)?;
        g.close_experiment()
    })
    .await?;
    Ok(Json(gw.progress()))
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/workers", post(register))
        .route("/api/assignments/claim", post(claim))
        .route("/api/pairs/{pair_id}", get(pair))
        .route("/api/verdicts", post(verdict))
        .route("/api/experiments/{id}", get(progress))
        .route("/api/experiments/{id}/report", get(report))
        .route("/api/experiments/{id}/open", post(open))
        .route("/api/experiments/{id}/close", post(close))
        .with_state(gateway)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(shutdown)
        .await
}
