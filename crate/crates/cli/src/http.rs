//! Read-only HTTP facade over ledger snapshots.

use std::path::PathBuf;
use std::sync::Arc;

use aat_core::events::Event;
use aat_core::ledger::{RecordFilter, RecordKind};
use aat_core::{Address, AuditTrail, Error, ExportFormat, TrailConfig, TrajectoryId};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::json;

use crate::{render_graph, store};

#[derive(Clone)]
pub struct AppState {
    pub ledger: Arc<PathBuf>,
    pub config: TrailConfig,
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    json_body(status, json!({ "error": msg.to_string() }).to_string())
}

fn classify(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) | Error::UnknownDid(_) | Error::UnknownNode(_) | Error::UnknownTrajectory(_) => {
            StatusCode::NOT_FOUND
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn load(state: &AppState) -> Result<AuditTrail, Response> {
    store::snapshot(&state.ledger, state.config).map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")))
}

async fn trajectory(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let id: TrajectoryId = match id.parse() {
        Ok(id) => id,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let trail = match load(&state) {
        Ok(t) => t,
        Err(r) => return r,
    };
    match trail.restore(&id) {
        Ok(g) => json_body(StatusCode::OK, render_graph(&g, ExportFormat::Json)),
        Err(e) => error(classify(&e), e),
    }
}

fn parse_did(did: &str) -> Result<Address, Response> {
    Address::parse_did(did).map_err(|e| error(StatusCode::BAD_REQUEST, e))
}

async fn did(State(state): State<AppState>, Path(did): Path<String>) -> Response {
    let result = parse_did(&did).and_then(|d| Ok((d, load(&state)?)));
    let (did, trail) = match result {
        Ok(v) => v,
        Err(r) => return r,
    };
    match trail.resolve_did(&did) {
        Ok(doc) => json_body(StatusCode::OK, crate::pretty(&doc)),
        Err(e) => error(classify(&e), e),
    }
}

pub fn risk_view(trail: &AuditTrail, did: &Address) -> aat_core::Result<serde_json::Value> {
    let doc = trail.resolve_did(did)?;
    let history: Vec<_> = trail
        .ledger()
        .query(&RecordFilter { kind: Some(RecordKind::ErlUpdated), ..Default::default() })
        .into_iter()
        .filter_map(|r| match Event::decode(r.kind, &r.payload) {
            Ok(Event::ErlUpdated { did: d, old, new, hops }) if d == *did => {
                Some(json!({ "index": r.index, "timestamp": r.timestamp, "oldErl": old, "newErl": new, "hops": hops }))
            }
            _ => None,
        })
        .collect();
    Ok(json!({
        "did": doc.did,
        "erl": doc.erl,
        "beta": doc.beta,
        "version": doc.version,
        "history": history,
    }))
}

async fn risk(State(state): State<AppState>, Path(did): Path<String>) -> Response {
    let result = parse_did(&did).and_then(|d| Ok((d, load(&state)?)));
    let (did, trail) = match result {
        Ok(v) => v,
        Err(r) => return r,
    };
    match risk_view(&trail, &did) {
        Ok(v) => json_body(StatusCode::OK, crate::pretty(&v)),
        Err(e) => error(classify(&e), e),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/trajectory/{id}", get(trajectory))
        .route("/did/{did}", get(did))
        .route("/risk/{did}", get(risk))
        .with_state(state)
}

pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
