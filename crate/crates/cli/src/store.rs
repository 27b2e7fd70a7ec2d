//! One directory per recording: raw streams, stage outputs and a manifest
//! that records their hashes and which stages have run.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use drivesense_core::pipeline::Clocks;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";
pub const STREAM_FILES: [&str; 4] = ["gnss.nmea", "imu.csv", "obd.csv", "vision.jsonl"];
pub const VISION_GNSS: &str = "vision_gnss.nmea";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: no manifest; run `ingest` or `simulate` first")]
    NoManifest(PathBuf),
    #[error("{path}: invalid JSON: {message}")]
    BadJson { path: PathBuf, message: String },
    #[error("{file}: hash mismatch (manifest {expected}, file {found})")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },
    #[error("stage `{needed}` has not run for {trip}; run `{needed}` before `{command}`")]
    MissingStage {
        trip: String,
        needed: Stage,
        command: Stage,
    },
    #[error("{0} is locked by another writer (remove {LOCK} if stale)")]
    Locked(PathBuf),
    #[error("{0} missing from manifest outputs")]
    MissingOutput(String),
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(io_err(path))
}

pub fn read_string(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    serde_json::from_slice(&read(path)?).map_err(|e| StoreError::BadJson {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn to_jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("serializable");
        out.push(b'\n');
    }
    out
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StoreError::BadJson {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::BadJson {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Sync,
    Events,
    Match,
    Dbi,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Sync, Stage::Events, Stage::Match, Stage::Dbi];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sync => "sync",
            Stage::Events => "events",
            Stage::Match => "match",
            Stage::Dbi => "dbi",
        }
    }

    pub fn output_file(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest.json",
            Stage::Sync => "sync.json",
            Stage::Events => "events.jsonl",
            Stage::Match => "matched.jsonl",
            Stage::Dbi => "trips.json",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = self as usize;
        (i > 0).then(|| Stage::ALL[i - 1])
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripManifest {
    pub schema_version: u32,
    pub trip_id: String,
    pub driver_id: String,
    /// Unix seconds of the recording's time zero.
    pub epoch: i64,
    pub streams: Vec<FileHash>,
    #[serde(default)]
    pub clocks: Option<Clocks>,
    /// Completed stages, in pipeline order.
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub outputs: Vec<FileHash>,
    /// Effective configuration of the last stage run, as TOML.
    #[serde(default)]
    pub config: String,
}

impl TripManifest {
    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn output_hash(&self, name: &str) -> Option<&str> {
        self.outputs.iter().find(|f| f.name == name).map(|f| f.sha256.as_str())
    }
}

/// Exclusive writer lock on a trip directory, released on drop.
pub struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn lock(dir: &Path) -> Result<LockGuard, StoreError> {
    let p = dir.join(LOCK);
    match fs::OpenOptions::new().write(true).create_new(true).open(&p) {
        Ok(_) => Ok(LockGuard(p)),
        Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(StoreError::Locked(dir.to_path_buf())),
        Err(e) => Err(StoreError::Io { path: p, source: e }),
    }
}

#[derive(Debug, Clone)]
pub struct TripDir {
    pub path: PathBuf,
    pub manifest: TripManifest,
}

/// Hashes of the stream files present in `dir`.
pub fn hash_streams(dir: &Path) -> Result<Vec<FileHash>, StoreError> {
    let mut out = Vec::new();
    for name in STREAM_FILES.iter().chain(std::iter::once(&VISION_GNSS)) {
        let p = dir.join(name);
        match fs::read(&p) {
            Ok(bytes) => out.push(FileHash {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
            }),
            Err(e) if e.kind() == ErrorKind::NotFound && *name == VISION_GNSS => {}
            Err(e) => return Err(StoreError::Io { path: p, source: e }),
        }
    }
    Ok(out)
}

impl TripDir {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mp = path.join(MANIFEST);
        if !mp.exists() {
            return Err(StoreError::NoManifest(path.to_path_buf()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            manifest: read_json(&mp)?,
        })
    }

    /// A fresh manifest over the streams currently in `path`.
    pub fn init(path: &Path, trip_id: &str, driver_id: &str, epoch: i64) -> Result<Self, StoreError> {
        let manifest = TripManifest {
            schema_version: SCHEMA_VERSION,
            trip_id: trip_id.to_string(),
            driver_id: driver_id.to_string(),
            epoch,
            streams: hash_streams(path)?,
            clocks: None,
            stages: Vec::new(),
            outputs: Vec::new(),
            config: String::new(),
        };
        let d = Self {
            path: path.to_path_buf(),
            manifest,
        };
        d.save()?;
        Ok(d)
    }

    pub fn save(&self) -> Result<(), StoreError> {
        write(&self.path.join(MANIFEST), &to_json_bytes(&self.manifest))
    }

    pub fn verify_file(&self, name: &str, expected: &str) -> Result<Vec<u8>, StoreError> {
        let bytes = read(&self.path.join(name))?;
        let found = sha256_hex(&bytes);
        if found != expected {
            return Err(StoreError::HashMismatch {
                file: self.path.join(name).display().to_string(),
                expected: expected.to_string(),
                found,
            });
        }
        Ok(bytes)
    }

    pub fn verify_streams(&self) -> Result<(), StoreError> {
        for f in &self.manifest.streams {
            self.verify_file(&f.name, &f.sha256)?;
        }
        Ok(())
    }

    /// Stream and output hashes.
    pub fn verify_all(&self) -> Result<(), StoreError> {
        self.verify_streams()?;
        for f in &self.manifest.outputs {
            self.verify_file(&f.name, &f.sha256)?;
        }
        Ok(())
    }

    pub fn require_before(&self, command: Stage) -> Result<(), StoreError> {
        for s in Stage::ALL.into_iter().take_while(|s| *s < command) {
            if !self.manifest.has(s) {
                return Err(StoreError::MissingStage {
                    trip: self.manifest.trip_id.clone(),
                    needed: s,
                    command,
                });
            }
        }
        Ok(())
    }

    /// Verified contents of a prior stage's output.
    pub fn output(&self, stage: Stage) -> Result<Vec<u8>, StoreError> {
        let name = stage.output_file();
        let expected = self
            .manifest
            .output_hash(name)
            .ok_or_else(|| StoreError::MissingOutput(name.to_string()))?
            .to_string();
        self.verify_file(name, &expected)
    }

    pub fn stream_text(&self, name: &str) -> Result<Option<String>, StoreError> {
        match self.manifest.streams.iter().find(|f| f.name == name) {
            Some(f) => {
                let bytes = self.verify_file(name, &f.sha256)?;
                String::from_utf8(bytes).map(Some).map_err(|e| StoreError::BadJson {
                    path: self.path.join(name),
                    message: e.to_string(),
                })
            }
            None => Ok(None),
        }
    }

    /// Records a finished stage. A changed output invalidates every later
    /// stage; an identical one leaves them in place.
    pub fn complete(&mut self, stage: Stage, output: &[u8], config_toml: &str) -> Result<(), StoreError> {
        let name = stage.output_file();
        let hash = sha256_hex(output);
        let changed = self.manifest.output_hash(name) != Some(hash.as_str());
        write(&self.path.join(name), output)?;
        let m = &mut self.manifest;
        if changed || !m.has(stage) {
            m.stages.retain(|s| *s < stage);
            let later: Vec<&str> = Stage::ALL.iter().filter(|s| **s > stage).map(|s| s.output_file()).collect();
            m.outputs.retain(|f| f.name != name && !later.contains(&f.name.as_str()));
            m.outputs.push(FileHash {
                name: name.to_string(),
                sha256: hash,
            });
            m.outputs.sort();
            m.stages.push(stage);
        }
        m.config = config_toml.to_string();
        self.save()
    }
}

/// Trip directories directly under `root`, sorted by name.
pub fn trip_dirs(root: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let p = entry.path();
        if p.is_dir() && p.join(MANIFEST).exists() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
