use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::arranger::{ArrangerOptions, DEFAULT_PLACEMENT_CEILING};
use crate::backend::{BackendError, OfflineBackend, PlannerBackend, RemoteBackend, RemoteConfig, ScriptedBackend};
use crate::exec::Execution;
use crate::graph::ConstraintBudget;
use crate::metrics::DEFAULT_CONTACT_EPSILON;
use crate::planner::PipelineOptions;
use crate::solver::GaConfig;

pub const ENV_URL: &str = "PLANNER_URL";
pub const ENV_TOKEN: &str = "PLANNER_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid backend `{0}`: expected scripted:<dir> or remote:<url>")]
    BadBackend(String),
    #[error("scripted backend directory does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("no planner backend configured (use --backend or the `backend` config field)")]
    NoBackend,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Which planner backend to talk to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Scripted(PathBuf),
    Remote(String),
}

impl FromStr for BackendSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("scripted", dir)) if !dir.is_empty() => Ok(BackendSpec::Scripted(dir.into())),
            Some(("remote", url)) if !url.is_empty() => Ok(BackendSpec::Remote(url.to_owned())),
            _ => Err(ConfigError::BadBackend(s.to_owned())),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Scripted(dir) => write!(f, "scripted:{}", dir.display()),
            BackendSpec::Remote(url) => write!(f, "remote:{url}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ga: GaConfig,
    pub budgets: ConstraintBudget,
    pub contact_epsilon: f64,
    pub placement_ceiling: f64,
    pub stage_retries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSpec>,
    /// Timeout, retries and token for `remote:` backends; the URL comes from `backend`.
    pub remote: RemoteConfig,
    /// Overrides `ga.seed` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Run GA fitness and metrics on the rayon pool (when built with `parallel`).
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            budgets: ConstraintBudget::default(),
            contact_epsilon: DEFAULT_CONTACT_EPSILON,
            placement_ceiling: DEFAULT_PLACEMENT_CEILING,
            stage_retries: 1,
            backend: None,
            remote: RemoteConfig::default(),
            seed: None,
            parallel: true,
        }
    }
}

impl RunConfig {
    /// Parse a config file. Relative scripted-backend paths are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: shown.clone(), message: e.to_string() })?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: shown, message: e.to_string() })?;
        if let Some(BackendSpec::Scripted(dir)) = &mut config.backend {
            if dir.is_relative() {
                if let Some(parent) = path.parent() {
                    *dir = parent.join(&*dir);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ga.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let b = &self.budgets;
        if b.strong_min == 0 || b.strong_min > b.strong_max || b.weak_min > b.weak_max {
            return Err(ConfigError::Invalid(format!(
                "budgets: need 1 <= strong_min <= strong_max and weak_min <= weak_max, got {b:?}"
            )));
        }
        if !(self.contact_epsilon.is_finite() && self.contact_epsilon >= 0.0) {
            return Err(ConfigError::Invalid("contact_epsilon must be a non-negative number".into()));
        }
        if !(self.placement_ceiling.is_finite() && self.placement_ceiling >= 0.0) {
            return Err(ConfigError::Invalid("placement_ceiling must be a non-negative number".into()));
        }
        if let Some(BackendSpec::Scripted(dir)) = &self.backend {
            if !dir.is_dir() {
                return Err(ConfigError::MissingPath(dir.clone()));
            }
        }
        Ok(())
    }

    /// Apply `PLANNER_URL` / `PLANNER_TOKEN`. A URL selects the remote backend.
    pub fn with_env_overrides(mut self, url: Option<String>, token: Option<String>) -> Self {
        if let Some(url) = url.filter(|u| !u.is_empty()) {
            self.backend = Some(BackendSpec::Remote(url));
        }
        if let Some(token) = token.filter(|t| !t.is_empty()) {
            self.remote.token = Some(token);
        }
        self
    }

    pub fn with_process_env(self) -> Self {
        self.with_env_overrides(std::env::var(ENV_URL).ok(), std::env::var(ENV_TOKEN).ok())
    }

    pub fn effective_ga(&self) -> GaConfig {
        match self.seed {
            Some(seed) => self.ga.clone().with_seed(seed),
            None => self.ga.clone(),
        }
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn arranger_options(&self) -> ArrangerOptions {
        ArrangerOptions {
            budget: self.budgets,
            placement_ceiling: self.placement_ceiling,
            ga: self.effective_ga(),
            execution: self.execution(),
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions { arranger: self.arranger_options(), stage_retries: self.stage_retries }
    }

    /// The configured backend, or `None` if there is none.
    pub fn open_backend(&self) -> Result<Option<Box<dyn PlannerBackend>>, ConfigError> {
        Ok(match &self.backend {
            None => None,
            Some(BackendSpec::Scripted(dir)) => {
                if !dir.is_dir() {
                    return Err(ConfigError::MissingPath(dir.clone()));
                }
                Some(Box::new(ScriptedBackend::from_dir(dir)?))
            }
            Some(BackendSpec::Remote(url)) => Some(Box::new(RemoteBackend::new(RemoteConfig { url: url.clone(), ..self.remote.clone() }))),
        })
    }

    /// Like [`RunConfig::open_backend`], answering completions only when unset.
    pub fn backend_or_offline(&self) -> Result<Box<dyn PlannerBackend>, ConfigError> {
        Ok(self.open_backend()?.unwrap_or_else(|| Box::new(OfflineBackend)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
