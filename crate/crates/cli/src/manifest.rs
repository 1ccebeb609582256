//! Run manifests: every report embeds the command, tool version, seed,
//! FNV-1a digests of input files, and a configuration snapshot so a report
//! can be traced back to exactly what produced it. Nothing time-dependent
//! enters the manifest — reports are byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::{CliError, CliResult};

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Digest string (`fnv1a64:<16 hex digits>`) of a file's contents.
pub fn digest_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("fnv1a64:{:016x}", fnv1a64(&bytes)))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    /// Input name → content digest.
    pub inputs: BTreeMap<String, String>,
    /// Command-specific configuration snapshot.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        command: &'static str,
        seed: u64,
        inputs: BTreeMap<String, String>,
        config: impl Serialize,
    ) -> CliResult<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| CliError::data(format!("config snapshot failed: {e}")))?;
        Ok(RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            inputs,
            config,
        })
    }
}

/// Serializes a report (pretty by default, compact with `compact`) and
/// writes it to `out` or stdout, newline-terminated.
pub fn emit(report: &impl Serialize, compact: bool, out: Option<&Path>) -> CliResult<()> {
    let mut text = if compact {
        serde_json::to_string(report)
    } else {
        serde_json::to_string_pretty(report)
    }
    .map_err(|e| CliError::data(format!("report serialization failed: {e}")))?;
    text.push('\n');
    write_text(&text, out)
}

/// Writes raw text to `out` or stdout.
pub fn write_text(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|()| lock.flush())
                .map_err(|e| CliError::data(format!("cannot write to stdout: {e}")))
        }
    }
}
