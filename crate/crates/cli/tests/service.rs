use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use ctxseg_cli::service::wire::{Interactions, Raster};
use ctxseg_cli::service::{router, AppState};
use ctxseg_core::data::{Corpus, DatasetManifest};
use ctxseg_core::network::{Model, ModelConfig, ModelParams};
use ctxseg_core::{encode_interactions, stack_target, ContextSet, EncodedPrompts, Image, InteractionState, Point, SegMask, DEFAULT_CLICK_RADIUS};

const RES: usize = 16;

fn model() -> Model {
    let cfg = ModelConfig {
        resolution: RES,
        features: 8,
        encoder_stages: 2,
        decoder_stages: 1,
        ..ModelConfig::desk()
    };
    Model::new(ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()).unwrap()
}

fn state(dir: &Path) -> Arc<AppState> {
    AppState::open(model(), "test.ckpt".into(), dir).unwrap()
}

fn image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(RES, RES, (0..RES * RES).map(|_| rng.random::<f32>()).collect()).unwrap()
}

async fn call(app: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Arc<AppState>) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(json!({"task": "demo"}))).await;
    assert_eq!(status, StatusCode::OK);
    v["id"].as_str().unwrap().to_string()
}

fn mask_of(v: &Value) -> Vec<f32> {
    serde_json::from_value::<Raster>(v["mask"].clone()).unwrap().decode(RES * RES).unwrap()
}

fn library_predict(model: &Model, img: &Image, prompts: &EncodedPrompts, prev: Option<&SegMask>, ctx: &ContextSet) -> Vec<f32> {
    model.predict(&stack_target(img, prompts, prev).unwrap(), ctx).unwrap().probs.pixels().to_vec()
}

fn click_state() -> InteractionState {
    let mut s = InteractionState::empty(RES, RES);
    s.positive_clicks.push(Point::new(4, 5));
    s.negative_clicks.push(Point::new(12, 2));
    s.positive_scribbles.set(8, 8, true);
    s
}

#[tokio::test]
async fn create_get_list_delete() {
    let dir = tempfile::tempdir().unwrap();
    let app = state(dir.path());
    let id = create(&app).await;
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["id"], id.as_str());
    assert_eq!(v["context_size"], 0);
    let (_, list) = call(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (status, _) = call(&app, "DELETE", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn predictions_match_library_calls_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let app = state(dir.path());
    let id = create(&app).await;
    let img = image(3);
    let body = json!({"image": Raster::from_f32(img.pixels())});
    let (status, first) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(body)).await;
    assert_eq!(mask_of(&first), mask_of(&second));
    let expected = library_predict(&app.model, &img, &EncodedPrompts::zeros(RES, RES), None, &ContextSet::new());
    assert_eq!(mask_of(&first), expected);
    assert_eq!(first["context_size"], 0);

    let clicks = click_state();
    let body = json!({"image": Raster::from_f32(img.pixels()), "interactions": Interactions::from_state(&clicks), "use_prev": true});
    let (status, v) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["used_previous"], true);
    let prev = SegMask::soft(RES, RES, mask_of(&second)).unwrap();
    let enc = encode_interactions(&clicks, DEFAULT_CLICK_RADIUS).unwrap();
    assert_eq!(mask_of(&v), library_predict(&app.model, &img, &enc, Some(&prev), &ContextSet::new()));
}

#[tokio::test]
async fn wire_clicks_encode_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let app = state(dir.path());
    let clicks = click_state();
    // The payload a browser client builds by hand.
    let payload = json!({
        "height": RES,
        "width": RES,
        "interactions": {
            "positive_clicks": [{"row": 4, "col": 5}],
            "negative_clicks": [{"row": 12, "col": 2}],
            "positive_scribbles": Raster::from_bitmap(&clicks.positive_scribbles),
        }
    });
    let (status, v) = call(&app, "POST", "/v1/encode", Some(payload)).await;
    assert_eq!(status, StatusCode::OK);
    let enc = encode_interactions(&clicks, DEFAULT_CLICK_RADIUS).unwrap();
    for (key, c) in [("box", 0), ("positive", 1), ("negative", 2)] {
        let r: Raster = serde_json::from_value(v[key].clone()).unwrap();
        assert_eq!(r, Raster::from_f32(enc.channel(c)), "channel {key}");
    }
}

#[tokio::test]
async fn accept_persists_across_restart_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let app = state(dir.path());
    let id = create(&app).await;
    let mut ctx = ContextSet::new();
    for k in 0..3u64 {
        let img = image(10 + k);
        let soft: Vec<f32> = (0..RES * RES).map(|i| ((i + k as usize) % 7) as f32 / 6.0).collect();
        let body = json!({"image": Raster::from_f32(img.pixels()), "mask": Raster::from_f32(&soft)});
        let (status, v) = call(&app, "POST", &format!("/v1/sessions/{id}/accept"), Some(body)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["context_size"], k + 1);
        let hard: Vec<f32> = soft.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
        ctx.push(img, SegMask::hard(RES, RES, hard).unwrap()).unwrap();
    }
    let stored = app.store.get(&id).unwrap().context();
    assert_eq!(*stored, ctx);

    let target = image(99);
    let body = json!({"image": Raster::from_f32(target.pixels())});
    let (_, before) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(body.clone())).await;
    assert_eq!(before["context_size"], 3);
    assert_eq!(mask_of(&before), library_predict(&app.model, &target, &EncodedPrompts::zeros(RES, RES), None, &ctx));

    drop(app);
    let restarted = state(dir.path());
    let (_, info) = call(&restarted, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(info["context_size"], 3);
    assert_eq!(*restarted.store.get(&id).unwrap().context(), ctx);
    let (_, after) = call(&restarted, "POST", &format!("/v1/sessions/{id}/predict"), Some(body)).await;
    assert_eq!(mask_of(&before), mask_of(&after));

    let (status, v) = call(&restarted, "POST", &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["manifest"]["subjects"].as_array().unwrap().len(), 3);
    let path = Path::new(v["path"].as_str().unwrap());
    let manifest = DatasetManifest::load(path).unwrap();
    let corpus = Corpus::from_manifests(&[manifest], RES, 0).unwrap();
    let total: usize = corpus.tasks.iter().map(|t| t.train.len() + t.val.len() + t.test.len()).sum();
    assert_eq!(total, 3);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = state(dir.path());
    let img = Raster::from_f32(image(1).pixels());
    let (status, _) = call(&app, "POST", "/v1/sessions/nope/predict", Some(json!({"image": img}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/v1/sessions/nope/accept", Some(json!({"image": img, "mask": img}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = create(&app).await;
    let small = Raster::from_f32(&[0.5; 8 * 8]);
    let (status, v) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(json!({"image": small}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(json!({"image": img, "use_prev": true}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let off_image = json!({"image": img, "interactions": {"positive_clicks": [{"row": RES, "col": 0}]}});
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/predict"), Some(off_image)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, info) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(info["context_size"], 0, "failed requests leave the context alone");
}
