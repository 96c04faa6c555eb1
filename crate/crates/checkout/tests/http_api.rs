mod common;

use std::sync::Arc;

use arc_checkout::http::{router, CartResponse, CheckoutResponse, ErrorBody, SessionView, SubmitResponse};
use arc_checkout::{parse_receipt, ServiceOptions, SessionState};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

use common::{confident, doubtful, frame, service};

fn app() -> Router {
    router(Arc::new(service(ServiceOptions::default())))
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    content_type: Option<&str>,
    body: Vec<u8>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header(header::CONTENT_TYPE, ct);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json<T: DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

async fn open(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", None, vec![]).await;
    assert_eq!(status, StatusCode::CREATED);
    json::<SessionView>(&body).session_id
}

async fn submit(app: &Router, id: &str, png: Vec<u8>) -> (StatusCode, Vec<u8>) {
    call(
        app,
        Method::POST,
        &format!("/sessions/{id}/items"),
        Some("image/png"),
        png,
    )
    .await
}

async fn line(app: &Router, id: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let uri = format!("/sessions/{id}/lines");
    call(
        app,
        Method::POST,
        &uri,
        Some("application/json"),
        body.as_bytes().to_vec(),
    )
    .await
}

#[tokio::test]
async fn health_and_catalog() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/healthz", None, vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json::<serde_json::Value>(&body)["status"], "ok");
    let (status, body) = call(&app, Method::GET, "/catalog", None, vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let cat: serde_json::Value = json(&body);
    assert_eq!(cat["currency"], "USD");
    assert_eq!(cat["items"][0]["unit_price"], 1250);
    assert_eq!(cat["items"].as_array().unwrap().len(), 6);
}

#[tokio::test]
async fn full_session_flow() {
    let app = app();
    let id = open(&app).await;
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}"), None, vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let v: SessionView = json(&body);
    assert_eq!(
        (v.state, v.lines.len(), v.total.as_str()),
        (SessionState::Open, 0, "0.00")
    );

    let (status, body) = submit(&app, &id, confident(0)).await;
    assert_eq!(status, StatusCode::OK);
    let r: SubmitResponse = json(&body);
    assert!(r.result.accepted);
    assert_eq!(r.result.name, "Item 0");
    assert_eq!(r.cart.total, "12.50");
    assert_eq!(r.cart.lines[0].price, "12.50");

    let (status, body) = submit(&app, &id, doubtful(1)).await;
    assert_eq!(status, StatusCode::OK);
    let r: SubmitResponse = json(&body);
    assert!(!r.result.accepted);
    assert_eq!(r.result.top5.len(), 5);
    assert_eq!(r.cart.lines.len(), 1);

    let (status, body) = line(&app, &id, r#"{"item_id": 1}"#).await;
    assert_eq!(status, StatusCode::OK);
    let c: CartResponse = json(&body);
    assert_eq!(c.cart.total, "15.80");
    assert_eq!(c.cart.total_minor, 1580);

    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/checkout"), None, vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let r: CheckoutResponse = json(&body);
    assert_eq!(r.receipt.total, "15.80");
    assert_eq!(parse_receipt(&r.receipt_text).unwrap().total, 1580);

    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}"), None, vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let v: SessionView = json(&body);
    assert_eq!(v.state, SessionState::Closed);
    assert_eq!(v.receipt_number, Some(r.receipt.number));
}

#[tokio::test]
async fn error_statuses_and_codes() {
    let app = app();
    let id = open(&app).await;
    let cases: Vec<(StatusCode, Vec<u8>, &str)> = vec![
        {
            let (s, b) = submit(&app, &id, frame(0, 0)).await;
            (s, b, "NoObject")
        },
        {
            let (s, b) = submit(&app, &id, b"not an image".to_vec()).await;
            (s, b, "BadImage")
        },
        {
            let (s, b) = call(
                &app,
                Method::POST,
                &format!("/sessions/{id}/items"),
                Some("text/plain"),
                confident(1),
            )
            .await;
            (s, b, "UnsupportedMediaType")
        },
        {
            let (s, b) = line(&app, &id, r#"{"item_id": 99}"#).await;
            (s, b, "UnknownItem")
        },
        {
            let (s, b) = line(&app, &id, r#"{"line_no": 4, "item_id": 1}"#).await;
            (s, b, "UnknownLine")
        },
        {
            let (s, b) = line(&app, &id, r#"{"item": 1}"#).await;
            (s, b, "BadRequest")
        },
        {
            let (s, b) = call(&app, Method::POST, &format!("/sessions/{id}/checkout"), None, vec![]).await;
            (s, b, "EmptyCart")
        },
        {
            let (s, b) = call(&app, Method::GET, "/sessions/missing", None, vec![]).await;
            (s, b, "SessionNotFound")
        },
    ];
    let expected = [
        StatusCode::UNPROCESSABLE_ENTITY,
        StatusCode::UNPROCESSABLE_ENTITY,
        StatusCode::UNSUPPORTED_MEDIA_TYPE,
        StatusCode::NOT_FOUND,
        StatusCode::NOT_FOUND,
        StatusCode::BAD_REQUEST,
        StatusCode::UNPROCESSABLE_ENTITY,
        StatusCode::NOT_FOUND,
    ];
    for ((status, body, code), want) in cases.into_iter().zip(expected) {
        assert_eq!(status, want, "{code}");
        let e: ErrorBody = json(&body);
        assert_eq!(e.code, code);
        assert!(!e.message.is_empty());
    }

    line(&app, &id, r#"{"item_id": 2}"#).await;
    call(&app, Method::POST, &format!("/sessions/{id}/checkout"), None, vec![]).await;
    let (status, body) = submit(&app, &id, confident(1)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json::<ErrorBody>(&body).code, "SessionClosed");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/checkout"), None, vec![]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = line(&app, &id, r#"{"item_id": 1}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn jpeg_uploads_are_accepted() {
    let app = app();
    let id = open(&app).await;
    let mut jpeg = Vec::new();
    let img = image::RgbImage::from_pixel(8, 8, image::Rgb([250, 3, 0]));
    img.write_to(&mut std::io::Cursor::new(&mut jpeg), image::ImageFormat::Jpeg)
        .unwrap();
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/items"),
        Some("image/jpeg"),
        jpeg,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let r: SubmitResponse = json(&body);
    assert!(r.result.accepted);
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let (status, body) = call(&app(), Method::GET, "/nowhere", None, vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json::<ErrorBody>(&body).code, "NotFound");
}

#[tokio::test]
async fn real_socket_round_trip() {
    let svc = Arc::new(service(ServiceOptions::default()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(async move { axum::serve(listener, router(svc)).await });
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).await.unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    server.abort();
}
