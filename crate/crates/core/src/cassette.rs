//! Record/replay cassettes for external API calls.
//!
//! A cassette is a JSON-lines file of `(request digest, response)` records
//! (see `docs/cassette_format.md`). In record mode responses are appended as
//! they arrive; in replay mode the file is read once and lookups are served
//! from memory with no network activity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How a backend call is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}, expected live|record|replay"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        };
        f.write_str(s)
    }
}

/// Stable SHA-256 digest of a request payload, lowercase hex.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    let mut hex = String::with_capacity(out.len() * 2);
    for b in out {
        write!(hex, "{b:02x}").unwrap();
    }
    hex
}

#[derive(Debug, Serialize, Deserialize)]
struct CassetteRecord {
    digest: String,
    kind: String,
    response: serde_json::Value,
}

/// An append-only store of recorded responses keyed by `(kind, digest)`.
#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<BTreeMap<(String, String), serde_json::Value>>,
}

impl Cassette {
    /// Opens an existing cassette for replay. A missing file is an error.
    pub fn load(path: &Path) -> Result<Cassette> {
        if !path.exists() {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: "cassette file does not exist".to_string(),
            });
        }
        Self::read(path)
    }

    /// Opens a cassette for recording, preserving any existing entries.
    pub fn open_or_create(path: &Path) -> Result<Cassette> {
        if path.exists() {
            Self::read(path)
        } else {
            Ok(Cassette {
                path: path.to_path_buf(),
                entries: Mutex::new(BTreeMap::new()),
            })
        }
    }

    fn read(path: &Path) -> Result<Cassette> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord = serde_json::from_str(line).map_err(|e| Error::Format {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            entries.insert((record.kind, record.digest), record.response);
        }
        Ok(Cassette {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
        })
    }

    pub fn lookup(&self, kind: &str, digest: &str) -> Option<serde_json::Value> {
        self.entries
            .lock()
            .unwrap()
            .get(&(kind.to_string(), digest.to_string()))
            .cloned()
    }

    /// Appends a new entry; re-recording an existing digest is a no-op.
    pub fn record(&self, kind: &str, digest: &str, response: serde_json::Value) -> Result<()> {
        let mut entries = self.entries.lock().unwrap();
        let key = (kind.to_string(), digest.to_string());
        if entries.contains_key(&key) {
            return Ok(());
        }
        let record = CassetteRecord {
            digest: digest.to_string(),
            kind: kind.to_string(),
            response: response.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("cassette record serializes");
        line.push('\n');
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        file.write_all(line.as_bytes())?;
        entries.insert(key, response);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = digest_bytes(b"hello");
        let b = digest_bytes(b"hello");
        let c = digest_bytes(b"hello!");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        let c = Cassette::open_or_create(&path).unwrap();
        c.record("completion", "abc", serde_json::json!("There are 3 cars.")).unwrap();
        c.record("embedding", "abc", serde_json::json!([[1.0, 0.0]])).unwrap();

        let replay = Cassette::load(&path).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(
            replay.lookup("completion", "abc"),
            Some(serde_json::json!("There are 3 cars."))
        );
        assert_eq!(replay.lookup("completion", "missing"), None);
    }

    #[test]
    fn missing_replay_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Cassette::load(&dir.path().join("nope.jsonl")).is_err());
    }

    #[test]
    fn duplicate_record_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");
        let c = Cassette::open_or_create(&path).unwrap();
        c.record("completion", "d", serde_json::json!("first")).unwrap();
        c.record("completion", "d", serde_json::json!("second")).unwrap();
        assert_eq!(c.lookup("completion", "d"), Some(serde_json::json!("first")));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
