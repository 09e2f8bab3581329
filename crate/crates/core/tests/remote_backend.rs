use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rsu_core::backend::{
    Backend, BackendError, BackendRequest, FrameEncoding, FramePayload, InferRequestBody, InferResponseBody,
    RemoteBackend, RemoteConfig,
};

type Seen = Arc<Mutex<Vec<InferRequestBody>>>;

/// Model server double. The prompt text selects the behaviour.
async fn infer(seen: Seen, Json(body): Json<InferRequestBody>) -> Response {
    seen.lock().unwrap().push(body.clone());
    match body.prompt_text.as_str() {
        "fail" => (StatusCode::INTERNAL_SERVER_ERROR, "boom").into_response(),
        "slow" => {
            tokio::time::sleep(Duration::from_millis(800)).await;
            StatusCode::OK.into_response()
        }
        "garbage" => (StatusCode::OK, "not json").into_response(),
        "wrong-id" => Json(InferResponseBody {
            request_id: "someone-else".into(),
            narration_text: String::new(),
            reasoning_text: String::new(),
        })
        .into_response(),
        _ => Json(InferResponseBody {
            request_id: body.request_id,
            narration_text: "2 pedestrians".into(),
            reasoning_text: "stop because traffic light red".into(),
        })
        .into_response(),
    }
}

struct Server {
    addr: SocketAddr,
    seen: Seen,
    _runtime: tokio::runtime::Runtime,
}

fn server() -> Server {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(1)
        .enable_all()
        .build()
        .unwrap();
    let seen: Seen = Arc::default();
    let state = seen.clone();
    let app = Router::new().route("/infer", post(move |body| infer(state.clone(), body)));
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        addr,
        seen,
        _runtime: runtime,
    }
}

fn client(server: &Server, frames: FrameEncoding) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig {
        url: format!("http://{}", server.addr),
        deadline_ms: 300,
        frames,
        name: "test-model".into(),
    })
    .unwrap()
}

fn request(prompt: &str) -> BackendRequest {
    BackendRequest::new("req-1", prompt, vec!["a.jpg".into(), "b.jpg".into()]).unwrap()
}

#[test]
fn round_trip() {
    let s = server();
    let mut b = client(&s, FrameEncoding::Reference);
    let resp = b.infer(&request("[ENVIRONMENT]\nfog")).unwrap();
    assert_eq!(resp.request_id, "req-1");
    assert_eq!(resp.narration_text, "2 pedestrians");
    assert!(resp.backend_latency_ms >= 0.0);
    assert_eq!(b.name(), "test-model");
    let seen = s.seen.lock().unwrap();
    assert_eq!(
        seen[0].frames,
        [
            FramePayload::Ref {
                reference: "a.jpg".into()
            },
            FramePayload::Ref {
                reference: "b.jpg".into()
            }
        ]
    );
}

#[test]
fn inline_frames_are_base64() {
    let s = server();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.jpg");
    std::fs::write(&path, b"jpg").unwrap();
    let mut b = client(&s, FrameEncoding::Inline);
    let req = BackendRequest::new("req-1", "p", vec![path.display().to_string()]).unwrap();
    b.infer(&req).unwrap();
    assert_eq!(
        s.seen.lock().unwrap()[0].frames,
        [FramePayload::Inline { b64: "anBn".into() }]
    );
}

#[test]
fn non_200_is_unavailable() {
    let s = server();
    let err = client(&s, FrameEncoding::Reference)
        .infer(&request("fail"))
        .unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
}

#[test]
fn deadline_is_enforced() {
    let s = server();
    let err = client(&s, FrameEncoding::Reference)
        .infer(&request("slow"))
        .unwrap_err();
    assert_eq!(err, BackendError::Timeout { deadline_ms: 300 });
}

#[test]
fn bad_bodies_are_malformed() {
    let s = server();
    let mut b = client(&s, FrameEncoding::Reference);
    assert!(matches!(b.infer(&request("garbage")), Err(BackendError::Malformed(_))));
    assert!(matches!(b.infer(&request("wrong-id")), Err(BackendError::Malformed(_))));
}
