//! A populated store plus an in-process router.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use textpond::ApiConfig;
use textpond_core::engine::IngestReport;
use textpond_core::linkgraph::SimilarityMeasure;
use textpond_core::synth::{self, FixtureDocument};
use textpond_core::{Engine, EngineConfig};
use tower::ServiceExt;

pub const LINKS: [&str; 3] = ["original+tfidf+cosine", "stopwords+tf+spearman", "lemmatized+tf+chi_square"];

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub engine: Arc<Engine>,
    pub docs: Vec<FixtureDocument>,
    pub report: IngestReport,
    pub config: ApiConfig,
    pub app: Router,
}

impl Fixture {
    pub fn new(docs: Vec<FixtureDocument>) -> Self {
        Self::with_config(docs, |_| {})
    }

    pub fn with_config(docs: Vec<FixtureDocument>, tweak: impl FnOnce(&mut ApiConfig)) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let pond = dir.path().join("pond");
        synth::write_pond(&pond, &docs).expect("write pond");
        let store = dir.path().join("store");
        let engine = Engine::open(EngineConfig::new(&store)).expect("open store");
        let report = engine.ingest(&pond).expect("ingest");
        for link in LINKS {
            let measure: SimilarityMeasure = link.parse().expect("link name");
            engine.build_links(measure).expect("build links");
        }
        let mut config = ApiConfig {
            store_root: store,
            ..ApiConfig::default()
        };
        tweak(&mut config);
        let engine = Arc::new(engine);
        let app = textpond::router(engine.clone(), &config).expect("router");
        Self {
            dir,
            engine,
            docs,
            report,
            config,
            app,
        }
    }

    pub fn pond_root(&self) -> PathBuf {
        self.dir.path().join("pond")
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.request(Method::GET, uri, None, &[]).await
    }

    pub async fn post(&self, uri: &str, body: &str) -> Reply {
        self.request(Method::POST, uri, Some(body), &[]).await
    }

    pub async fn request(&self, method: Method, uri: &str, body: Option<&str>, headers: &[(&str, &str)]) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = req
            .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
            .expect("request");
        let resp = self.app.clone().oneshot(req).await.expect("infallible router");
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.expect("body").to_bytes();
        Reply {
            status,
            headers,
            body: String::from_utf8(bytes.to_vec()).expect("utf-8 body"),
        }
    }
}

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }

    /// Checks the error envelope and returns its code.
    pub fn error_code(&self) -> String {
        let v = self.json();
        let err = &v["error"];
        assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()), "{}", self.body);
        let cid = err["correlation_id"].as_str().expect("correlation id");
        assert_eq!(cid.len(), 36, "{cid}");
        err["code"].as_str().expect("code").to_string()
    }
}

/// Percent-encodes a query value.
pub fn enc(s: &str) -> String {
    serde_urlencoded::to_string([("v", s)]).expect("encodable")[2..].to_string()
}
