//! File-backed store for coverage sets and the selections made from them.
//!
//! ```text
//! <root>/runs/<id>/coverage.json     the coverage set, as written
//! <root>/runs/<id>/meta.json         id, hashes, creation time, environment
//! <root>/runs/<id>/mdp.json          the MDP, when supplied
//! <root>/runs/<id>/selections.jsonl  one selection record per line
//! ```
//!
//! Ids are the first 12 hex digits of the content hash plus a sequence
//! number, so saving identical content twice gives two ids with a common
//! prefix. A run directory is assembled under a temporary name and renamed
//! into place.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decimal;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::solver::{CoverageEntry, CoverageSet, EvaluationRecord, MdpRef};

const HASH_PREFIX: usize = 12;
/// Relative tolerance for recognising a query as a grid point.
const ON_GRID_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub id: String,
    /// SHA-256 of `coverage.json`.
    pub content_hash: String,
    pub created_at: String,
    pub environment: MdpRef,
    pub criterion: String,
    pub solver: String,
    /// SHA-256 of the canonical (key-sorted, compact) solver configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub id: String,
    pub coverage_set: String,
    pub grid_index: usize,
    #[serde(with = "decimal")]
    pub param: f64,
    pub note: String,
    pub timestamp: String,
    /// Client-supplied key; repeating a request with the same token returns
    /// the original record instead of appending a new one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

/// Result of looking up a parameter value in a stored coverage set.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyQuery {
    pub index: usize,
    /// False when the query was a grid point, true when the nearest grid
    /// point was substituted.
    pub nearest: bool,
    pub entry: CoverageEntry,
    pub record: EvaluationRecord,
}

/// Canonical JSON hash: object keys sorted, no whitespace.
pub fn config_hash(config: &serde_json::Value) -> String {
    // serde_json's map is ordered by key, so re-serialising a parsed value
    // canonicalises it.
    let canonical = serde_json::to_string(config).expect("JSON values serialise");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn validate_id(id: &str) -> Result<()> {
    let ok = id.split_once('-').is_some_and(|(hash, seq)| {
        hash.len() == HASH_PREFIX
            && hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
            && !seq.is_empty()
            && seq.len() <= 9
            && seq.bytes().all(|b| b.is_ascii_digit())
    });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidId(id.to_string()))
    }
}

/// Index of `value` in `grid` and whether it had to be rounded to the
/// nearest point (midpoints go to the lower index).
pub fn locate(grid: &[f64], value: f64) -> Result<(usize, bool)> {
    let (lo, hi) = match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidRange("empty grid".into())),
    };
    if !value.is_finite() {
        return Err(Error::OutOfRange { value, lo, hi });
    }
    let tol = |x: f64| ON_GRID_TOL * x.abs().max(1.0);
    if let Some(i) = grid.iter().position(|&g| (g - value).abs() <= tol(g)) {
        return Ok((i, false));
    }
    if value < lo || value > hi {
        return Err(Error::OutOfRange { value, lo, hi });
    }
    let upper = grid.iter().position(|&g| g > value).expect("value is below the last point");
    let lower = upper - 1;
    let nearest = if value - grid[lower] <= grid[upper] - value { lower } else { upper };
    Ok((nearest, true))
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        Ok(Self { root, locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(id)
    }

    fn existing_dir(&self, id: &str) -> Result<PathBuf> {
        validate_id(id)?;
        let dir = self.run_dir(id);
        if dir.join("coverage.json").is_file() {
            Ok(dir)
        } else {
            Err(Error::NotFound { what: "coverage set", id: id.to_string() })
        }
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    pub fn save_coverage_set(
        &self,
        set: &CoverageSet,
        mdp: Option<&Mdp>,
        config: Option<&serde_json::Value>,
    ) -> Result<String> {
        let body = set.to_json();
        let content_hash = hex::encode(Sha256::digest(body.as_bytes()));
        let prefix = &content_hash[..HASH_PREFIX];
        let _guard = self.lock_for(prefix);
        let _guard = _guard.lock().unwrap_or_else(|e| e.into_inner());

        let runs = self.root.join("runs");
        let mut seq = 1;
        for entry in fs::read_dir(&runs)? {
            let name = entry?.file_name();
            if let Some(n) = name.to_str().and_then(|n| n.strip_prefix(prefix)).and_then(|r| r.strip_prefix('-')) {
                if let Ok(n) = n.parse::<u64>() {
                    seq = seq.max(n + 1);
                }
            }
        }
        let id = format!("{prefix}-{seq}");
        let meta = RunMeta {
            id: id.clone(),
            content_hash,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            environment: set.mdp_ref.clone(),
            criterion: set.criterion.name().to_string(),
            solver: set.solver.name().to_string(),
            config_hash: config.map(config_hash),
            config: config.cloned(),
        };

        let tmp = runs.join(format!(".tmp-{id}-{}", std::process::id()));
        let result = (|| -> Result<()> {
            fs::create_dir(&tmp).map_err(|e| io_error(e, &tmp))?;
            write_file(&tmp.join("coverage.json"), body.as_bytes())?;
            let mut meta_text = serde_json::to_string_pretty(&meta)?;
            meta_text.push('\n');
            write_file(&tmp.join("meta.json"), meta_text.as_bytes())?;
            if let Some(mdp) = mdp {
                write_file(&tmp.join("mdp.json"), mdp.to_json().as_bytes())?;
            }
            write_file(&tmp.join("selections.jsonl"), b"")?;
            let dest = self.run_dir(&id);
            if dest.exists() {
                return Err(Error::Conflict(dest));
            }
            fs::rename(&tmp, &dest).map_err(|e| io_error(e, &dest))
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result.map(|()| id)
    }

    /// The stored `coverage.json`, byte for byte.
    pub fn load_raw(&self, id: &str) -> Result<String> {
        Ok(fs::read_to_string(self.existing_dir(id)?.join("coverage.json"))?)
    }

    pub fn load(&self, id: &str) -> Result<CoverageSet> {
        CoverageSet::from_json(&self.load_raw(id)?)
    }

    pub fn load_meta(&self, id: &str) -> Result<RunMeta> {
        let text = fs::read_to_string(self.existing_dir(id)?.join("meta.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_mdp(&self, id: &str) -> Result<Option<Mdp>> {
        let path = self.existing_dir(id)?.join("mdp.json");
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(Mdp::from_json(&text)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Ids of all stored coverage sets, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("runs"))? {
            let name = entry?.file_name();
            if let Some(name) = name.to_str() {
                if validate_id(name).is_ok() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// The entry stored for `param`, or for the nearest grid point when
    /// `param` lies between grid points.
    pub fn query_policy(&self, id: &str, param: f64) -> Result<PolicyQuery> {
        let set = self.load(id)?;
        query_set(&set, param)
    }

    pub fn record_selection(&self, id: &str, param: f64, note: &str, token: Option<&str>) -> Result<(SelectionRecord, bool)> {
        let set = self.load(id)?;
        let grid: Vec<f64> = set.entries.iter().map(|e| e.param).collect();
        let index = match locate(&grid, param) {
            Ok((i, false)) => i,
            _ => return Err(Error::OffGrid(param)),
        };
        let lock = self.lock_for(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let existing = self.list_selections(id)?;
        if let Some(token) = token {
            if let Some(prev) = existing.iter().find(|r| r.token.as_deref() == Some(token)) {
                return Ok((prev.clone(), false));
            }
        }
        let record = SelectionRecord {
            id: format!("sel-{}", existing.len() + 1),
            coverage_set: id.to_string(),
            grid_index: index,
            param: grid[index],
            note: note.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            token: token.map(str::to_string),
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        let path = self.run_dir(id).join("selections.jsonl");
        let mut f = OpenOptions::new().append(true).create(true).open(&path).map_err(|e| io_error(e, &path))?;
        f.write_all(line.as_bytes()).map_err(|e| io_error(e, &path))?;
        f.sync_data().map_err(|e| io_error(e, &path))?;
        Ok((record, true))
    }

    pub fn list_selections(&self, id: &str) -> Result<Vec<SelectionRecord>> {
        let path = self.existing_dir(id)?.join("selections.jsonl");
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

pub fn query_set(set: &CoverageSet, param: f64) -> Result<PolicyQuery> {
    let grid: Vec<f64> = set.entries.iter().map(|e| e.param).collect();
    let (index, nearest) = locate(&grid, param)?;
    Ok(PolicyQuery {
        index,
        nearest,
        entry: set.entries[index].clone(),
        record: set.record(index).expect("index is in range"),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_error(e, path))?;
    f.write_all(bytes).map_err(|e| io_error(e, path))?;
    f.sync_all().map_err(|e| io_error(e, path))?;
    Ok(())
}

fn io_error(e: io::Error, path: &Path) -> Error {
    match e.kind() {
        io::ErrorKind::StorageFull => Error::StorageFull(path.to_path_buf()),
        io::ErrorKind::AlreadyExists | io::ErrorKind::DirectoryNotEmpty => Error::Conflict(path.to_path_buf()),
        _ => Error::Io(e),
    }
}
