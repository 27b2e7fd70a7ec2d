//! Export bundles: a deterministic tar of a driver's fused trips and DBI
//! reports for a date range, with a manifest carrying per-file hashes and a
//! hash-tree root.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use drivesense_core::fusion::dbi::trip_date;
use drivesense_core::fusion::{compute_dbi, DbiReport, PeriodKind, Trip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{merkle_root, sha256_hex};
use crate::store::{self, read_json, to_json_bytes, trip_dirs, FileHash, Stage, StoreError, TripDir, MANIFEST};

pub const BUNDLE_MANIFEST: &str = "bundle.json";
pub const BUNDLE_SCHEMA: u32 = 1;
/// Files of each trip carried in a bundle.
pub const TRIP_FILES: [&str; 3] = [MANIFEST, "events.jsonl", "trips.json"];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("trips not at stage dbi: {}", .0.join(", "))]
    IncompleteTrips(Vec<String>),
    #[error("unreadable archive: {0}")]
    Archive(String),
    #[error("bundle entry {0} is missing")]
    MissingEntry(String),
    #[error("bundle entry {name}: hash mismatch (manifest {expected}, content {found})")]
    BadHash {
        name: String,
        expected: String,
        found: String,
    },
    #[error("bundle entry {0} is not listed in the manifest")]
    Unlisted(String),
    #[error("hash-tree root mismatch (manifest {expected}, recomputed {found})")]
    BadRoot { expected: String, found: String },
    #[error("archive bytes differ from the canonical encoding of its entries")]
    NotCanonical,
    #[error("invalid bundle manifest: {0}")]
    BadManifest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema_version: u32,
    pub driver_id: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub utc_offset_h: f64,
    /// Trip directory names included.
    pub trips: Vec<String>,
    /// Every other entry, sorted by name.
    pub files: Vec<FileHash>,
    pub merkle_root: String,
}

/// Canonical tar encoding: entries sorted by path, fixed metadata.
pub fn encode_tar(entries: &BTreeMap<String, Vec<u8>>) -> Vec<u8> {
    let mut b = tar::Builder::new(Vec::new());
    b.mode(tar::HeaderMode::Deterministic);
    for (path, data) in entries {
        let mut h = tar::Header::new_ustar();
        h.set_size(data.len() as u64);
        h.set_mode(0o644);
        h.set_mtime(0);
        h.set_uid(0);
        h.set_gid(0);
        h.set_entry_type(tar::EntryType::Regular);
        b.append_data(&mut h, path, data.as_slice()).expect("in-memory tar write");
    }
    b.into_inner().expect("in-memory tar finish")
}

pub fn decode_tar(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, BundleError> {
    let mut out = BTreeMap::new();
    let mut a = tar::Archive::new(bytes);
    let entries = a.entries().map_err(|e| BundleError::Archive(e.to_string()))?;
    for e in entries {
        let mut e = e.map_err(|e| BundleError::Archive(e.to_string()))?;
        let path = e
            .path()
            .map_err(|e| BundleError::Archive(e.to_string()))?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::new();
        e.read_to_end(&mut data).map_err(|e| BundleError::Archive(e.to_string()))?;
        out.insert(path, data);
    }
    Ok(out)
}

pub struct StoredTrip {
    pub dir_name: String,
    pub dir: TripDir,
}

fn stored_trips(store_root: &Path, driver_id: &str) -> Result<Vec<StoredTrip>, StoreError> {
    let mut out = Vec::new();
    for p in trip_dirs(store_root)? {
        let dir = TripDir::open(&p)?;
        if dir.manifest.driver_id == driver_id {
            let dir_name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.push(StoredTrip { dir_name, dir });
        }
    }
    Ok(out)
}

fn local_date(unix: f64, utc_offset_h: f64) -> NaiveDate {
    chrono::DateTime::from_timestamp((unix + utc_offset_h * 3600.0).floor() as i64, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// Fused trips of `driver_id` in the store whose local start date lies in
/// `[from, to]`, with the directories they came from. Recordings that
/// started in the range but have not reached stage dbi are an error.
pub fn load_trips(
    store_root: &Path,
    driver_id: &str,
    from: NaiveDate,
    to: NaiveDate,
    utc_offset_h: f64,
) -> Result<Vec<(StoredTrip, Vec<Trip>)>, BundleError> {
    let mut out = Vec::new();
    let mut incomplete = Vec::new();
    for st in stored_trips(store_root, driver_id)? {
        let m = &st.dir.manifest;
        if !m.has(Stage::Dbi) {
            let d = local_date(m.epoch as f64, utc_offset_h);
            if d >= from && d <= to {
                incomplete.push(m.trip_id.clone());
            }
            continue;
        }
        let trips: Vec<Trip> = serde_json::from_slice(&st.dir.output(Stage::Dbi)?).map_err(|e| StoreError::BadJson {
            path: st.dir.path.join(Stage::Dbi.output_file()),
            message: e.to_string(),
        })?;
        let in_range: Vec<Trip> = trips
            .into_iter()
            .filter(|t| {
                let d = trip_date(t, utc_offset_h);
                d >= from && d <= to
            })
            .collect();
        if !in_range.is_empty() {
            out.push((st, in_range));
        }
    }
    if !incomplete.is_empty() {
        return Err(BundleError::IncompleteTrips(incomplete));
    }
    Ok(out)
}

/// Daily, weekly and monthly reports over `[from, to]`.
pub fn all_reports(
    driver_id: &str,
    trips: &[Trip],
    from: NaiveDate,
    to: NaiveDate,
    utc_offset_h: f64,
) -> BTreeMap<&'static str, Vec<DbiReport>> {
    [("day", PeriodKind::Day), ("week", PeriodKind::Week), ("month", PeriodKind::Month)]
        .into_iter()
        .map(|(n, k)| (n, compute_dbi(driver_id, trips, k, from, to, utc_offset_h)))
        .collect()
}

pub fn export_bundle(
    store_root: &Path,
    driver_id: &str,
    from: NaiveDate,
    to: NaiveDate,
    utc_offset_h: f64,
) -> Result<Vec<u8>, BundleError> {
    let loaded = load_trips(store_root, driver_id, from, to, utc_offset_h)?;
    let mut entries: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut all: Vec<Trip> = Vec::new();
    let mut names = Vec::new();
    for (st, trips) in &loaded {
        for f in TRIP_FILES {
            let bytes = if f == MANIFEST {
                store::read(&st.dir.path.join(MANIFEST))?
            } else {
                let expected = st
                    .dir
                    .manifest
                    .output_hash(f)
                    .ok_or_else(|| StoreError::MissingOutput(f.to_string()))?
                    .to_string();
                st.dir.verify_file(f, &expected)?
            };
            entries.insert(format!("trips/{}/{f}", st.dir_name), bytes);
        }
        names.push(st.dir_name.clone());
        all.extend(trips.iter().cloned());
    }
    for (n, reports) in all_reports(driver_id, &all, from, to, utc_offset_h) {
        entries.insert(format!("reports/{n}.json"), to_json_bytes(&reports));
    }
    let files: Vec<FileHash> = entries
        .iter()
        .map(|(name, data)| FileHash {
            name: name.clone(),
            sha256: sha256_hex(data),
        })
        .collect();
    let manifest = BundleManifest {
        schema_version: BUNDLE_SCHEMA,
        driver_id: driver_id.to_string(),
        from,
        to,
        utc_offset_h,
        trips: names,
        merkle_root: merkle_root(&files.iter().map(|f| f.sha256.clone()).collect::<Vec<_>>()),
        files,
    };
    entries.insert(BUNDLE_MANIFEST.to_string(), to_json_bytes(&manifest));
    Ok(encode_tar(&entries))
}

#[derive(Debug)]
pub struct VerifiedBundle {
    pub manifest: BundleManifest,
    pub entries: BTreeMap<String, Vec<u8>>,
}

/// Checks every listed hash, the hash-tree root and the canonical archive
/// encoding.
pub fn verify_bundle(bytes: &[u8]) -> Result<VerifiedBundle, BundleError> {
    let entries = decode_tar(bytes)?;
    let mbytes = entries
        .get(BUNDLE_MANIFEST)
        .ok_or_else(|| BundleError::MissingEntry(BUNDLE_MANIFEST.into()))?;
    let manifest: BundleManifest =
        serde_json::from_slice(mbytes).map_err(|e| BundleError::BadManifest(e.to_string()))?;
    for f in &manifest.files {
        let data = entries.get(&f.name).ok_or_else(|| BundleError::MissingEntry(f.name.clone()))?;
        let found = sha256_hex(data);
        if found != f.sha256 {
            return Err(BundleError::BadHash {
                name: f.name.clone(),
                expected: f.sha256.clone(),
                found,
            });
        }
    }
    for name in entries.keys() {
        if name != BUNDLE_MANIFEST && !manifest.files.iter().any(|f| &f.name == name) {
            return Err(BundleError::Unlisted(name.clone()));
        }
    }
    let root = merkle_root(&manifest.files.iter().map(|f| f.sha256.clone()).collect::<Vec<_>>());
    if root != manifest.merkle_root {
        return Err(BundleError::BadRoot {
            expected: manifest.merkle_root.clone(),
            found: root,
        });
    }
    if encode_tar(&entries) != bytes {
        return Err(BundleError::NotCanonical);
    }
    Ok(VerifiedBundle { manifest, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIndexEntry {
    pub driver_id: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub merkle_root: String,
}

pub const REPORTS_DIR: &str = "reports";

/// Writes a verified bundle into a store: trips as trip directories and
/// reports under `reports/<driver>/<from>_<to>/`. Importing the same bundle
/// again changes nothing.
pub fn import_bundle(bytes: &[u8], store_root: &Path) -> Result<BundleManifest, BundleError> {
    let b = verify_bundle(bytes)?;
    let m = &b.manifest;
    for (name, data) in &b.entries {
        let target: PathBuf = if let Some(rest) = name.strip_prefix("trips/") {
            store_root.join(rest)
        } else if let Some(rest) = name.strip_prefix("reports/") {
            store_root
                .join(REPORTS_DIR)
                .join(&m.driver_id)
                .join(format!("{}_{}", m.from, m.to))
                .join(rest)
        } else {
            continue;
        };
        if !target.starts_with(store_root) || name.contains("..") {
            return Err(BundleError::BadManifest(format!("entry escapes the store: {name}")));
        }
        store::write(&target, data)?;
    }
    let index_path = store_root.join(REPORTS_DIR).join("index.json");
    let mut index: Vec<ReportIndexEntry> = if index_path.exists() {
        read_json(&index_path)?
    } else {
        Vec::new()
    };
    index.retain(|e| !(e.driver_id == m.driver_id && e.from == m.from && e.to == m.to));
    index.push(ReportIndexEntry {
        driver_id: m.driver_id.clone(),
        from: m.from,
        to: m.to,
        merkle_root: m.merkle_root.clone(),
    });
    index.sort_by(|a, b| (&a.driver_id, a.from, a.to).cmp(&(&b.driver_id, b.from, b.to)));
    store::write(&index_path, &to_json_bytes(&index))?;
    Ok(b.manifest)
}
