//! Append-only run manifests (`manifest.ndjson`): one JSON line per command invocation.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub const FILE_NAME: &str = "manifest.ndjson";

#[derive(Debug, Serialize)]
struct Record<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a A,
    inputs: &'a [PathBuf],
    outputs: &'a [PathBuf],
    seeds: &'a BTreeMap<&'static str, u64>,
    started_unix_ms: u128,
    duration_s: f64,
}

pub struct Run {
    command: &'static str,
    started: SystemTime,
    clock: Instant,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<&'static str, u64>,
}

impl Run {
    pub fn start(command: &'static str) -> Self {
        Run {
            command,
            started: SystemTime::now(),
            clock: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    /// Appends the record to the manifest file in `dir`.
    pub fn finish<A: Serialize>(self, dir: &Path, args: &A) -> std::io::Result<()> {
        let record = Record {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            args,
            inputs: &self.inputs,
            outputs: &self.outputs,
            seeds: &self.seeds,
            started_unix_ms: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            duration_s: self.clock.elapsed().as_secs_f64(),
        };
        let line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(FILE_NAME))?;
        writeln!(file, "{line}")
    }
}
