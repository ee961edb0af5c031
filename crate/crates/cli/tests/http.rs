use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;

use aat_cli::http::{router, AppState};
use aat_core::harness::{preset, run_scenario};
use aat_core::{Address, TrailConfig};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    ledger: PathBuf,
    id: String,
    roster: Vec<Address>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("s.ledger");
    let (env, outcome) = run_scenario(&preset("parallel-fork-tampering").unwrap(), TrailConfig::default()).unwrap();
    std::fs::write(&ledger, env.trail.ledger().to_file_bytes()).unwrap();
    Fixture {
        _dir: dir,
        ledger,
        id: outcome.ground_truth.trajectory_id.unwrap().to_string(),
        roster: outcome.roster.values().copied().collect(),
    }
}

async fn get(f: &Fixture, uri: &str) -> (StatusCode, String) {
    let app = router(AppState { ledger: Arc::new(f.ledger.clone()), config: TrailConfig::default() });
    let resp = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn trajectory_matches_cli_bytes() {
    let f = fixture();
    let (status, body) = get(&f, &format!("/trajectory/{}", f.id)).await;
    assert_eq!(status, StatusCode::OK);
    let cli = Command::new(env!("CARGO_BIN_EXE_aat"))
        .args(["--ledger", f.ledger.to_str().unwrap(), "graph", "restore", &f.id])
        .output()
        .unwrap();
    assert!(cli.status.success());
    assert_eq!(body.as_bytes(), cli.stdout.as_slice());
}

#[tokio::test]
async fn bad_and_unknown_ids() {
    let f = fixture();
    assert_eq!(get(&f, "/trajectory/not-hex").await.0, StatusCode::BAD_REQUEST);
    let unissued = "ff".repeat(16);
    assert_eq!(get(&f, &format!("/trajectory/{unissued}")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f, "/did/did:aat:1234").await.0, StatusCode::BAD_REQUEST);
    let stranger = format!("/did/did:aat:{}", "ab".repeat(32));
    assert_eq!(get(&f, &stranger).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f, &stranger.replace("/did/", "/risk/")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f, "/nothing").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn did_and_risk_views() {
    let f = fixture();
    let did = f.roster[0].did();
    let (status, body) = get(&f, &format!("/did/{did}")).await;
    assert_eq!(status, StatusCode::OK);
    let doc: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(doc["did"], did.as_str());

    let (status, body) = get(&f, &format!("/risk/{did}")).await;
    assert_eq!(status, StatusCode::OK);
    let risk: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(risk["erl"], 0);
    assert_eq!(risk["beta"], 500);
    assert!(risk["history"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn writes_are_refused() {
    let f = fixture();
    let app = router(AppState { ledger: Arc::new(f.ledger.clone()), config: TrailConfig::default() });
    let resp = app
        .oneshot(Request::post(format!("/trajectory/{}", f.id)).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::METHOD_NOT_ALLOWED);
    let before = std::fs::read(&f.ledger).unwrap();
    get(&f, &format!("/trajectory/{}", f.id)).await;
    assert_eq!(std::fs::read(&f.ledger).unwrap(), before);
}
