use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentRecord {
    pub id: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    pub outputs: serde_json::Value,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
}

/// Content hash of the resolved config and the code version.
pub fn run_id(cfg: &Config) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(VERSION.as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Output directory plus the files written so far.
pub struct RunDir {
    pub path: PathBuf,
    pub artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path, id: &str) -> std::io::Result<Self> {
        let path = root.join("runs").join(id);
        std::fs::create_dir_all(&path)?;
        Ok(RunDir { path, artifacts: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<()> {
        std::fs::write(self.path.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}
