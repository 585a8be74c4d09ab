//! Provenance record emitted next to every command's outputs.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// The invoked command line.
    pub command: String,
    /// SHA-256 of the run's config file, when one was given.
    pub config_digest: Option<String>,
    /// Digest over every corpus file, when a corpus was read.
    pub corpus_digest: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Primary output files, relative to the manifest.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        config_digest: Option<String>,
        corpus_digest: Option<String>,
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> RunManifest {
        RunManifest {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config_digest,
            corpus_digest,
            seed,
            tool_version: phone_embed::VERSION.to_string(),
            outputs,
        }
    }

    /// Writes `run_manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        phone_embed::atomic_write(&dir.join("run_manifest.json"), json.as_bytes())?;
        Ok(())
    }
}
