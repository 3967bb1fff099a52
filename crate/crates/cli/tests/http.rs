use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use twinflex_cli::ops;
use twinflex_cli::server::router;

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[tokio::test]
async fn models_lists_the_catalog() {
    let app = router();
    let (status, body) = call(&app, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<String> = parse(&body)
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap().to_string())
        .collect();
    for want in [
        "bricard1",
        "bricard2",
        "twinned_anticupola",
        "star_dodecahedron",
        "pentagonal_crinkle",
        "foxtrot_template",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
}

#[tokio::test]
async fn build_errors_have_status_codes() {
    let app = router();
    let (s, body) = call(&app, "POST", "/build", Some(json!({"model": "nope"}).to_string())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(parse(&body)["error"]["code"], "unknown_model");

    let (s, _) = call(&app, "POST", "/build", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let bad = json!({"model": "bricard1", "params": {"c_x": 99.0}}).to_string();
    let (s, body) = call(&app, "POST", "/build", Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(parse(&body)["error"]["kind"], "validation");
}

#[tokio::test]
async fn build_matches_the_shared_payload() {
    let app = router();
    let req = ops::BuildRequest {
        model: "bricard2".into(),
        ..Default::default()
    };
    let (s, body) = call(&app, "POST", "/build", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, ops::payload(&ops::build(&req).unwrap()).unwrap());
}

async fn wait_done(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (s, body) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let rec = parse(&body);
        match rec["status"].as_str().unwrap() {
            "done" | "failed" => return rec,
            _ => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn bricard1_flex_job_gives_100_frames() {
    let app = router();
    let (_, mesh) = call(&app, "POST", "/build", Some(json!({"model": "bricard1"}).to_string())).await;
    let req = json!({"mesh": parse(&mesh), "driver": "AA'", "range": "auto", "frames": 100});
    let (s, body) = call(&app, "POST", "/flex", Some(req.to_string())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = parse(&body)["id"].as_str().unwrap().to_string();

    let rec = wait_done(&app, &id).await;
    assert_eq!(rec["status"], "done", "{rec}");
    assert_eq!(rec["result"], format!("/jobs/{id}/frames"));
    let (s, frames) = call(&app, "GET", &format!("/jobs/{id}/frames"), None).await;
    assert_eq!(s, StatusCode::OK);
    let path = parse(&frames);
    assert_eq!(path["frames"].as_array().unwrap().len(), 100);
    for f in path["frames"].as_array().unwrap() {
        assert!(f["diag"]["edge_err"].as_f64().unwrap() < 1e-8);
    }
}

#[tokio::test]
async fn flex_validation_is_synchronous() {
    let app = router();
    let (_, mesh) = call(&app, "POST", "/build", Some(json!({"model": "bricard1"}).to_string())).await;
    let req = json!({"mesh": parse(&mesh), "driver": "QQ'"});
    let (s, body) = call(&app, "POST", "/flex", Some(req.to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(parse(&body)["error"]["code"], "invalid_param");

    let (s, _) = call(&app, "GET", "/jobs/job-404", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn solver_failure_marks_the_job_failed() {
    let app = router();
    // a convex octahedron does not flex
    let (_, mesh) = call(&app, "POST", "/build", Some(json!({"model": "octahedron"}).to_string())).await;
    let req = json!({"mesh": parse(&mesh), "driver": "0,1", "range": "auto", "frames": 10});
    let (s, body) = call(&app, "POST", "/flex", Some(req.to_string())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = parse(&body)["id"].as_str().unwrap().to_string();
    let rec = wait_done(&app, &id).await;
    assert_eq!(rec["status"], "failed");
    let (s, body) = call(&app, "GET", &format!("/jobs/{id}/frames"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["error"]["kind"], "solver");
}

#[tokio::test]
async fn star_frame_is_not_embedded() {
    let app = router();
    let (_, mesh) = call(&app, "POST", "/build", Some(json!({"model": "star_dodecahedron"}).to_string())).await;
    let (s, body) = call(&app, "POST", "/check", Some(json!({"mesh": parse(&mesh)}).to_string())).await;
    assert_eq!(s, StatusCode::OK);
    let report = parse(&body);
    assert_eq!(report["is_embedded"], false);
    assert!(!report["intersections"]["pairs"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn net_returns_svg() {
    let app = router();
    let (_, mesh) = call(&app, "POST", "/build", Some(json!({"model": "tetrahedron"}).to_string())).await;
    let req = Request::builder()
        .method("POST")
        .uri("/net")
        .body(Body::from(json!({"mesh": parse(&mesh)}).to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/svg+xml");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert!(String::from_utf8_lossy(&bytes).starts_with("<?xml"));
}
