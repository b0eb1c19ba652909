//! Files in and out: run configuration, scene documents, OBJ meshes.

mod config;
mod obj;

pub use config::{BackendSpec, ConfigError, RunConfig, ENV_TOKEN, ENV_URL};
pub use obj::{scene_to_obj, BLOCK_FACES, OBJ_HEADER};

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::graph::{DocumentError, SceneGraph};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Document { path: String, source: DocumentError },
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let fail = |source| IoError::Write { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    fs::write(path, text).map_err(fail)
}

pub fn read_scene(path: &Path) -> Result<SceneGraph, IoError> {
    let text = read_text(path)?;
    SceneGraph::from_json(&text).map_err(|source| IoError::Document { path: path.display().to_string(), source })
}
