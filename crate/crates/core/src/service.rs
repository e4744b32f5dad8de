//! HTTP inference over frozen checkpoints.
//!
//! Every image is snapped to the 8-bit grid before it reaches the classifier,
//! so probabilities in a response can be reproduced from the PNGs it returns.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, ProbPair};
use crate::dataset::{Dataset, Image, Label, Split};
use crate::error::Error;
use crate::explain::{interpolate, route};
use crate::gan::GanBundle;

pub const DEFAULT_BODY_LIMIT: usize = 8 * 1024 * 1024;
pub const MIN_FRAMES: usize = 2;
pub const MAX_FRAMES: usize = 33;
pub const DEFAULT_SAMPLE_LIMIT: usize = 12;

/// Models and dataset shared by all handlers; never mutated after startup.
pub struct ServiceState {
    models: Option<(ClassifierModel, GanBundle)>,
    dataset: Option<Dataset>,
    body_limit: usize,
}

impl ServiceState {
    /// Verifies the bundle was trained against `classifier`.
    pub fn new(classifier: ClassifierModel, bundle: GanBundle, dataset: Option<Dataset>) -> crate::Result<Self> {
        if !classifier.is_frozen() {
            return Err(Error::NotFrozen);
        }
        bundle.verify_classifier(&classifier)?;
        if let Some(d) = &dataset {
            if d.resolution() != classifier.resolution() {
                return Err(Error::shape(format!(
                    "dataset resolution {} differs from model resolution {}",
                    d.resolution(),
                    classifier.resolution()
                )));
            }
        }
        log::info!(
            "serving classifier {} with bundle {}",
            classifier.checksum(),
            bundle.checksum()
        );
        Ok(ServiceState {
            models: Some((classifier, bundle)),
            dataset,
            body_limit: DEFAULT_BODY_LIMIT,
        })
    }

    /// A state whose inference endpoints answer 503.
    pub fn unloaded(dataset: Option<Dataset>) -> Self {
        ServiceState {
            models: None,
            dataset,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }

    pub fn with_body_limit(mut self, bytes: usize) -> Self {
        self.body_limit = bytes;
        self
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if e.is_validation() || matches!(e, Error::Image(_)) {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probs {
    pub p_normal: f64,
    pub p_opacity: f64,
}

impl From<ProbPair> for Probs {
    fn from(p: ProbPair) -> Self {
        Probs {
            p_normal: p.p_x,
            p_opacity: p.p_y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub p_normal: f64,
    pub p_opacity: f64,
    pub decision: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub png: String,
    pub probs: Probs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub original_probs: Probs,
    pub counterfactual_probs: Probs,
    pub decision_pre: Label,
    pub decision_post: Label,
    pub flipped: bool,
    pub l1_proximity: f64,
    pub counterfactual_png: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frames: Option<Vec<Frame>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub id: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleList {
    pub samples: Vec<SampleInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub id: String,
    pub label: Label,
    pub split: Split,
    pub png: String,
}

#[derive(Deserialize)]
struct ExplainQuery {
    frames: Option<String>,
}

#[derive(Deserialize)]
struct SamplesQuery {
    split: Option<String>,
    limit: Option<String>,
}

pub fn router(state: ServiceState) -> Router {
    let limit = state.body_limit;
    Router::new()
        .route("/health", get(health))
        .route("/classify", post(classify))
        .route("/explain", post(explain))
        .route("/samples", get(samples))
        .route("/samples/{id}", get(sample))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(Arc::new(state))
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::invalid(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on http://{}", listener.local_addr().map_err(|e| Error::invalid(e.to_string()))?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::invalid(format!("server error: {e}")))
}

fn models(state: &ServiceState) -> ApiResult<&(ClassifierModel, GanBundle)> {
    state
        .models
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "models not loaded".into()))
}

fn decode(body: &[u8], side: usize) -> ApiResult<Image> {
    if body.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty body; expected an image".into()));
    }
    Image::from_encoded(body, side)
        .map(|i| i.quantized())
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("cannot decode image: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    match &state.models {
        Some((c, b)) => Json(serde_json::json!({
            "status": "ok",
            "classifier_checksum": c.checksum(),
            "bundle_checksum": b.checksum(),
        }))
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(serde_json::json!({ "status": "unavailable" })),
        )
            .into_response(),
    }
}

async fn classify(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult<Json<ClassifyResponse>> {
    models(&state)?;
    blocking(move || {
        let (c, _) = models(&state)?;
        let p = c.predict(&decode(&body, c.resolution())?)?;
        Ok(Json(ClassifyResponse {
            p_normal: p.p_x,
            p_opacity: p.p_y,
            decision: p.decision(),
        }))
    })
    .await
}

async fn explain(
    State(state): State<Arc<ServiceState>>,
    Query(q): Query<ExplainQuery>,
    body: Bytes,
) -> ApiResult<Json<ExplainResponse>> {
    let frames = match q.frames.as_deref() {
        None => None,
        Some(s) => match s.parse::<usize>() {
            Ok(n) if (MIN_FRAMES..=MAX_FRAMES).contains(&n) => Some(n),
            _ => {
                return Err(ApiError(
                    StatusCode::BAD_REQUEST,
                    format!("frames must be an integer in {MIN_FRAMES}..={MAX_FRAMES}, got `{s}`"),
                ))
            }
        },
    };
    models(&state)?;
    blocking(move || {
        let (c, b) = models(&state)?;
        let original = decode(&body, c.resolution())?;
        let pre = c.predict(&original)?;
        let cf = b.translate(route(pre.decision()), &original)?.quantized();
        let post = c.predict(&cf)?;
        let frames = match frames {
            None => None,
            Some(n) => {
                let imgs = interpolate(&original, &cf, n)?;
                let last = imgs.len() - 1;
                let mut out = Vec::with_capacity(imgs.len());
                for (i, img) in imgs.into_iter().enumerate() {
                    // Endpoints are already on the grid; only blends need snapping.
                    let img = if i == 0 || i == last { img } else { img.quantized() };
                    let probs = if i == 0 {
                        pre
                    } else if i == last {
                        post
                    } else {
                        c.predict(&img)?
                    };
                    out.push(Frame {
                        t: i as f64 / last as f64,
                        png: B64.encode(img.to_png()),
                        probs: probs.into(),
                    });
                }
                Some(out)
            }
        };
        Ok(Json(ExplainResponse {
            original_probs: pre.into(),
            counterfactual_probs: post.into(),
            decision_pre: pre.decision(),
            decision_post: post.decision(),
            flipped: pre.decision() != post.decision(),
            l1_proximity: original.l1_distance(&cf)?,
            counterfactual_png: B64.encode(cf.to_png()),
            frames,
        }))
    })
    .await
}

fn dataset(state: &ServiceState) -> ApiResult<&Dataset> {
    state
        .dataset
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no dataset mounted".into()))
}

async fn samples(State(state): State<Arc<ServiceState>>, Query(q): Query<SamplesQuery>) -> ApiResult<Json<SampleList>> {
    let data = dataset(&state)?;
    let split: Split = q.split.as_deref().unwrap_or("TEST").parse()?;
    let limit = match q.limit.as_deref() {
        None => DEFAULT_SAMPLE_LIMIT,
        Some(s) => s
            .parse()
            .map_err(|_| ApiError(StatusCode::BAD_REQUEST, format!("limit must be a nonnegative integer, got `{s}`")))?,
    };
    let mut list: Vec<SampleInfo> = data
        .split(split)
        .into_iter()
        .map(|s| SampleInfo {
            id: s.id.clone(),
            label: s.label,
            split: s.split,
        })
        .collect();
    list.sort_by(|a, b| a.id.cmp(&b.id));
    list.truncate(limit);
    Ok(Json(SampleList { samples: list }))
}

async fn sample(State(state): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SampleResponse>> {
    let s = dataset(&state)?
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown sample `{id}`")))?;
    Ok(Json(SampleResponse {
        id: s.id.clone(),
        label: s.label,
        split: s.split,
        png: B64.encode(s.image.to_png()),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build, ClassifierConfig};
    use crate::dataset::{synthesize_dataset, SynthSpec};
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    fn state() -> ServiceState {
        let data = synthesize_dataset(&SynthSpec {
            n_per_class: 10,
            resolution: 16,
            opacity_strength: 0.6,
            noise_seed: 2,
        })
        .unwrap();
        let c = build(&ClassifierConfig::tiny_dense(16), 0).unwrap().freeze();
        let b = GanBundle::identity(&c).unwrap();
        ServiceState::new(c, b, Some(data)).unwrap()
    }

    async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    fn post(uri: &str, body: Vec<u8>) -> Request<Body> {
        Request::post(uri).header("content-type", "image/png").body(Body::from(body)).unwrap()
    }

    fn png() -> Vec<u8> {
        Image::filled(16, 0.1).unwrap().to_png()
    }

    #[tokio::test]
    async fn classify_contract() {
        let app = router(state());
        let (s, a) = call(&app, post("/classify", png())).await;
        assert_eq!(s, StatusCode::OK);
        let (_, b) = call(&app, post("/classify", png())).await;
        assert_eq!(a, b);
        let r: ClassifyResponse = serde_json::from_slice(&a).unwrap();
        assert!((r.p_normal + r.p_opacity - 1.0).abs() < 1e-6);
        assert_eq!(call(&app, post("/classify", vec![])).await.0, StatusCode::BAD_REQUEST);
        assert_eq!(call(&app, post("/classify", b"nope".to_vec())).await.0, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn oversize_and_unloaded() {
        let app = router(state().with_body_limit(64));
        assert_eq!(call(&app, post("/classify", vec![0; 1000])).await.0, StatusCode::PAYLOAD_TOO_LARGE);
        let app = router(ServiceState::unloaded(None));
        assert_eq!(call(&app, post("/classify", png())).await.0, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(call(&app, post("/explain", png())).await.0, StatusCode::SERVICE_UNAVAILABLE);
        let req = Request::get("/health").body(Body::empty()).unwrap();
        assert_eq!(call(&app, req).await.0, StatusCode::SERVICE_UNAVAILABLE);
    }

    #[tokio::test]
    async fn explain_frames() {
        let app = router(state());
        let (s, body) = call(&app, post("/explain", png())).await;
        assert_eq!(s, StatusCode::OK);
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(v.get("frames").is_none());
        for bad in ["1", "34", "x"] {
            assert_eq!(call(&app, post(&format!("/explain?frames={bad}"), png())).await.0, StatusCode::BAD_REQUEST);
        }
        let (_, body) = call(&app, post("/explain?frames=2", png())).await;
        let r: ExplainResponse = serde_json::from_slice(&body).unwrap();
        let f = r.frames.unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].probs, r.original_probs);
        assert_eq!(f[1].probs, r.counterfactual_probs);
        assert_eq!(r.flipped, r.decision_pre != r.decision_post);
        let (_, body) = call(&app, post("/explain?frames=33", png())).await;
        let r: ExplainResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(r.frames.unwrap().len(), 33);
    }

    #[tokio::test]
    async fn samples_browse() {
        let app = router(state());
        let get = |u: &str| Request::get(u).body(Body::empty()).unwrap();
        let (s, a) = call(&app, get("/samples?split=TRAIN&limit=5")).await;
        assert_eq!(s, StatusCode::OK);
        let list: SampleList = serde_json::from_slice(&a).unwrap();
        assert_eq!(list.samples.len(), 5);
        assert!(list.samples.windows(2).all(|w| w[0].id < w[1].id));
        assert_eq!(call(&app, get("/samples?split=TRAIN&limit=5")).await.1, a);
        let (s, _) = call(&app, get(&format!("/samples/{}", list.samples[0].id))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(call(&app, get("/samples/missing")).await.0, StatusCode::NOT_FOUND);
        assert_eq!(call(&app, get("/samples?split=BOGUS")).await.0, StatusCode::BAD_REQUEST);
        let (s, h) = call(&app, get("/health")).await;
        assert_eq!(s, StatusCode::OK);
        assert!(String::from_utf8(h).unwrap().contains("bundle_checksum"));
    }
}
