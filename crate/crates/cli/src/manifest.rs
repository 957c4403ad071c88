//! Run provenance: every invocation writes a manifest; every CSV references
//! the manifest hash. Reruns with an identical manifest reproduce outputs
//! bit for bit (wall clock and diagnostics are excluded from the hash).

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_hash: String,
    pub tolerance_overrides: BTreeMap<String, String>,
    pub output_dir: String,
    pub manifest_hash: String,
    pub wall_clock_ms: u128,
    pub diagnostics: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: String,
        config_path: Option<String>,
        config_hash: u64,
        tolerance_overrides: BTreeMap<String, String>,
        output_dir: &Path,
    ) -> Self {
        let mut hashable = format!("cmd={command};cfg={config_hash:016x};");
        for (k, v) in &tolerance_overrides {
            hashable.push_str(&format!("{k}={v};"));
        }
        let manifest_hash = format!("{:016x}", wqed_core::numerics::fnv1a64(hashable.as_bytes()));
        RunManifest {
            command,
            config_path,
            config_hash: format!("{config_hash:016x}"),
            tolerance_overrides,
            output_dir: output_dir.display().to_string(),
            manifest_hash,
            wall_clock_ms: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn stamp(&self) -> String {
        format!("# manifest={}\n", self.manifest_hash)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("serialize manifest"))?;
        Ok(path)
    }
}
