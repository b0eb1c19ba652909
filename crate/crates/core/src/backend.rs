//! Planner backends: the request/response boundary to the language model.
//!
//! A request is one JSON document `{schema, key, payload}` where `schema`
//! names the expected response schema; the response is one JSON document of
//! that schema. Responses are returned raw and validated by the calling stage.
//!
//! * [`ScriptedBackend`] replays fixtures from a directory, looked up by
//!   explicit key, then by request hash, then by the wildcard key `*`.
//! * [`RemoteBackend`] POSTs the request (plus a rendered prompt) to an HTTP
//!   endpoint and expects the response document as the JSON body.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCENE_PLAN: &str = "scene-plan/1";
pub const OBJECT_DESIGN: &str = "object-design/1";
pub const MANUFACTURE: &str = "manufacture/1";
pub const CONSTRAINT_COMPLETION: &str = "constraint-completion/1";

pub const WILDCARD_KEY: &str = "*";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP status {0}")]
    Status(u16),
    #[error("no fixture for {schema} with key `{key}` (hash {hash})")]
    MissingFixture { schema: String, key: String, hash: String },
    #[error("fixture error in {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("response body is not JSON: {0}")]
    Body(String),
}

impl BackendError {
    /// Transport failures may succeed on a later attempt; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_)) || matches!(self, BackendError::Status(s) if *s >= 500)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub schema: String,
    pub key: String,
    pub payload: Value,
}

impl BackendRequest {
    pub fn new(schema: &str, key: impl Into<String>, payload: Value) -> Self {
        Self { schema: schema.to_owned(), key: key.into(), payload }
    }

    /// Hex SHA-256 prefix of the canonical request text.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("requests always serialize");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

pub trait PlannerBackend {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError>;

    fn scene(&self, key: &str, payload: Value) -> Result<Value, BackendError> {
        self.exchange(&BackendRequest::new(SCENE_PLAN, key, payload))
    }

    fn object(&self, key: &str, payload: Value) -> Result<Value, BackendError> {
        self.exchange(&BackendRequest::new(OBJECT_DESIGN, key, payload))
    }

    fn manufacture(&self, key: &str, payload: Value) -> Result<Value, BackendError> {
        self.exchange(&BackendRequest::new(MANUFACTURE, key, payload))
    }

    fn complete(&self, key: &str, payload: Value) -> Result<Value, BackendError> {
        self.exchange(&BackendRequest::new(CONSTRAINT_COMPLETION, key, payload))
    }
}

impl<B: PlannerBackend + ?Sized> PlannerBackend for &B {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        (**self).exchange(request)
    }
}

impl<B: PlannerBackend + ?Sized> PlannerBackend for Box<B> {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        (**self).exchange(request)
    }
}

/// Answers completion requests with no additions and fails every other call.
/// Used when no backend is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineBackend;

impl PlannerBackend for OfflineBackend {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        if request.schema == CONSTRAINT_COMPLETION {
            return Ok(json!({ "schema": CONSTRAINT_COMPLETION, "additions": [] }));
        }
        Err(BackendError::MissingFixture {
            schema: request.schema.clone(),
            key: request.key.clone(),
            hash: request.hash(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub schema: String,
    pub key: String,
    pub response: Value,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Many(Vec<FixtureEntry>),
    One(FixtureEntry),
}

/// Deterministic fixture replay.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    fixtures: BTreeMap<(String, String), Value>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, schema: &str, key: &str, response: Value) -> Self {
        self.insert(schema, key, response);
        self
    }

    pub fn insert(&mut self, schema: &str, key: &str, response: Value) {
        self.fixtures.insert((schema.to_owned(), key.to_owned()), response);
    }

    /// Load every `*.json` file of `dir`; each holds one entry or an array of entries.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref();
        let fixture_err = |path: &Path, message: String| BackendError::Fixture { path: path.to_owned(), message };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| fixture_err(dir, e.to_string()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut backend = Self::new();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| fixture_err(&path, e.to_string()))?;
            let file: FixtureFile = serde_json::from_str(&text).map_err(|e| fixture_err(&path, e.to_string()))?;
            let entries = match file {
                FixtureFile::Many(v) => v,
                FixtureFile::One(e) => vec![e],
            };
            for entry in entries {
                let slot = (entry.schema.clone(), entry.key.clone());
                if backend.fixtures.contains_key(&slot) {
                    return Err(fixture_err(&path, format!("duplicate fixture {} / {}", entry.schema, entry.key)));
                }
                backend.fixtures.insert(slot, entry.response);
            }
        }
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl PlannerBackend for ScriptedBackend {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        let hash = request.hash();
        [request.key.as_str(), hash.as_str(), WILDCARD_KEY]
            .iter()
            .find_map(|key| self.fixtures.get(&(request.schema.clone(), (*key).to_owned())))
            .cloned()
            .ok_or_else(|| BackendError::MissingFixture { schema: request.schema.clone(), key: request.key.clone(), hash })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    pub timeout_secs: f64,
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { url: String::new(), token: None, timeout_secs: 30.0, retries: 2 }
    }
}

const SYSTEM_PROMPT: &str = "You are one stage of a 3D scene construction pipeline. Scenes are built \
from axis-aligned cuboid blocks (centroid + full extents, meters; x back->front, y left->right, z up). \
Spatial relations use a fixed catalog: concentric, x/y/z_aligned, left/right/upper/lower/front/back_half, \
left, right, above, below, front, back (with a gap distance), and coplanar_top/bottom/left/right/front/back. \
Reply with a single JSON document matching the requested schema and nothing else.";

/// The prompt sent alongside each request: fixed system text plus the task.
pub fn render_prompt(request: &BackendRequest) -> Value {
    let task = serde_json::to_string_pretty(&request.payload).expect("payloads always serialize");
    json!({
        "system": SYSTEM_PROMPT,
        "user": format!("Respond with a `{}` document.\nTask key: {}\nContext:\n{}", request.schema, request.key, task),
    })
}

/// JSON-over-HTTP backend with bounded retries on transport failures.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError::Status(code),
            other => BackendError::Transport(other.to_string()),
        })?;
        response.body_mut().read_json::<Value>().map_err(|e| BackendError::Body(e.to_string()))
    }
}

impl PlannerBackend for RemoteBackend {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        let body = json!({
            "schema": request.schema,
            "key": request.key,
            "payload": request.payload,
            "prompt": render_prompt(request),
        });
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    log::warn!("planner request {} attempt {} failed: {e}", request.key, attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
