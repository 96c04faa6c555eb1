//! JSON-over-HTTP front end for the operator console.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::money::format_minor;
use crate::receipt::render_receipt;
use crate::service::{CheckoutError, CheckoutService, IdentifyResult};
use crate::session::{CartLine, LineSource, Receipt, Session, SessionState};

pub const MAX_IMAGE_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

impl From<CheckoutError> for ApiError {
    fn from(e: CheckoutError) -> Self {
        let status = match &e {
            CheckoutError::SessionNotFound(_) | CheckoutError::UnknownItem(_) | CheckoutError::UnknownLine(_) => {
                StatusCode::NOT_FOUND
            }
            CheckoutError::SessionClosed(_) => StatusCode::CONFLICT,
            CheckoutError::BadImage(_) | CheckoutError::NoObject(_) | CheckoutError::EmptyCart => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            CheckoutError::Config(_) | CheckoutError::Model(_) | CheckoutError::Persistence(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LineView {
    pub line_no: u32,
    pub item_id: usize,
    pub name: String,
    pub unit_price: u64,
    pub price: String,
    pub confidence: Option<f64>,
    pub source: LineSource,
}

impl From<&CartLine> for LineView {
    fn from(l: &CartLine) -> Self {
        Self {
            line_no: l.line_no,
            item_id: l.item_id,
            name: l.name.clone(),
            unit_price: l.unit_price,
            price: format_minor(l.unit_price),
            confidence: l.confidence,
            source: l.source,
        }
    }
}

/// Session as reported to clients. `total` is the display string;
/// `total_minor` the exact amount in minor units.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub lines: Vec<LineView>,
    pub total: String,
    pub total_minor: u64,
    pub currency: String,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
    pub receipt_number: Option<u64>,
}

impl SessionView {
    pub fn new(s: &Session, currency: &str) -> Self {
        Self {
            session_id: s.id.clone(),
            state: s.state,
            lines: s.lines.iter().map(LineView::from).collect(),
            total: format_minor(s.total()),
            total_minor: s.total(),
            currency: currency.to_string(),
            opened_at: s.opened_at,
            closed_at: s.closed_at,
            receipt_number: s.receipt.as_ref().map(|r| r.number),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Candidate {
    pub item_id: usize,
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdentifyView {
    pub item_id: usize,
    pub name: String,
    pub confidence: f64,
    pub accepted: bool,
    pub threshold: f64,
    pub top5: Vec<Candidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubmitResponse {
    pub result: IdentifyView,
    pub cart: SessionView,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CartResponse {
    pub cart: SessionView,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReceiptLineView {
    pub name: String,
    pub unit_price: u64,
    pub price: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReceiptView {
    pub number: u64,
    pub session_id: String,
    pub lines: Vec<ReceiptLineView>,
    pub total: String,
    pub total_minor: u64,
    pub currency: String,
    pub issued_at: DateTime<Utc>,
}

impl From<&Receipt> for ReceiptView {
    fn from(r: &Receipt) -> Self {
        Self {
            number: r.number,
            session_id: r.session_id.clone(),
            lines: r
                .lines
                .iter()
                .map(|l| ReceiptLineView {
                    name: l.name.clone(),
                    unit_price: l.unit_price,
                    price: format_minor(l.unit_price),
                })
                .collect(),
            total: format_minor(r.total),
            total_minor: r.total,
            currency: r.currency.clone(),
            issued_at: r.issued_at,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckoutResponse {
    pub receipt: ReceiptView,
    pub receipt_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineRequest {
    #[serde(default)]
    pub line_no: Option<u32>,
    pub item_id: usize,
}

type AppState = Arc<CheckoutService>;

fn view(svc: &CheckoutService, s: &Session) -> SessionView {
    SessionView::new(s, &svc.catalog().currency)
}

fn identify_view(svc: &CheckoutService, r: &IdentifyResult) -> IdentifyView {
    let name = |id: usize| svc.catalog().get(id).map(|i| i.name.clone()).unwrap_or_default();
    IdentifyView {
        item_id: r.top1,
        name: name(r.top1),
        confidence: r.confidence,
        accepted: r.accepted,
        threshold: svc.tau(),
        top5: r
            .top5
            .iter()
            .map(|&(item_id, probability)| Candidate {
                item_id,
                name: name(item_id),
                probability,
            })
            .collect(),
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn catalog(State(svc): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], svc.catalog().to_json()).into_response()
}

async fn create_session(State(svc): State<AppState>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let s = svc.begin_session()?;
    Ok((StatusCode::CREATED, Json(view(&svc, &s))))
}

async fn get_session(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(view(&svc, &svc.session(&id)?)))
}

fn image_content_type(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
        .is_some_and(|v| v == "image/png" || v == "image/jpeg")
}

async fn submit_item(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<SubmitResponse>, ApiError> {
    if !image_content_type(&headers) {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "UnsupportedMediaType",
            "body must be image/png or image/jpeg",
        ));
    }
    let worker = svc.clone();
    let (result, session) = tokio::task::spawn_blocking(move || worker.submit_item(&id, &body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(SubmitResponse {
        result: identify_view(&svc, &result),
        cart: view(&svc, &session),
    }))
}

async fn override_line(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<CartResponse>, ApiError> {
    let req: LineRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()))?;
    let s = svc.override_line(&id, req.line_no, req.item_id)?;
    Ok(Json(CartResponse { cart: view(&svc, &s) }))
}

async fn checkout(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Json<CheckoutResponse>, ApiError> {
    let r = svc.checkout(&id)?;
    Ok(Json(CheckoutResponse {
        receipt: ReceiptView::from(&r),
        receipt_text: render_receipt(&r),
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(service: Arc<CheckoutService>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/catalog", get(catalog))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/items", post(submit_item))
        .route("/sessions/{id}/lines", post(override_line))
        .route("/sessions/{id}/checkout", post(checkout))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_IMAGE_BYTES))
        .with_state(service)
}

/// Serves until interrupted.
pub async fn serve(service: Arc<CheckoutService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
