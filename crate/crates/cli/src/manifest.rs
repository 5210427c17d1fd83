use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Record of one CLI invocation, written next to its outputs.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_paths: Vec<PathBuf>,
    pub inputs: Vec<PathBuf>,
    /// Output paths per stage.
    pub outputs: BTreeMap<String, Vec<PathBuf>>,
    /// Stage timings in milliseconds.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn output(&mut self, stage: &str, path: impl Into<PathBuf>) {
        self.outputs.entry(stage.to_string()).or_default().push(path.into());
    }

    pub fn time(&mut self, stage: &str, since: Instant) {
        *self.timings_ms.entry(stage.to_string()).or_insert(0.0) += since.elapsed().as_secs_f64() * 1e3;
    }

    pub fn write(&self, path: &Path) -> radar_obb::Result<()> {
        radar_obb::io::write_json(path, self)
    }
}

/// `dir/manifest.json` for directory outputs, `file.manifest.json` otherwise.
pub fn manifest_path_for_file(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}
