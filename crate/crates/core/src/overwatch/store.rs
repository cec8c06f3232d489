//! Append-only spec log: one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{checksum, VersionedSpec};
use crate::model::DeploymentSpec;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("store {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    version: u64,
    checksum: String,
    spec: DeploymentSpec,
}

#[derive(Debug)]
pub struct SpecStore {
    path: PathBuf,
    file: File,
}

impl SpecStore {
    /// Open or create the store, returning every record it holds.
    ///
    /// A final line without its newline is a write that never completed and
    /// is dropped. Anything else that fails to parse, a checksum mismatch or
    /// a non-increasing version is reported as corruption.
    pub fn open(path: impl AsRef<Path>) -> Result<(SpecStore, Vec<VersionedSpec>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;

        let mut records = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut lineno = 0;
        let mut unterminated = false;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            let complete = line.ends_with('\n');
            let corrupt = |reason: String| StoreError::Corrupt {
                path: path.clone(),
                line: lineno,
                reason,
            };
            let rec: Record = match serde_json::from_str(line.trim_end()) {
                Ok(r) => r,
                Err(_) if !complete => break,
                Err(e) => return Err(corrupt(e.to_string())),
            };
            if checksum(&rec.spec) != rec.checksum {
                return Err(corrupt("checksum mismatch".into()));
            }
            if let Some(prev) = records.last().map(|r: &VersionedSpec| r.version) {
                if rec.version <= prev {
                    return Err(corrupt(format!("version {} after {prev}", rec.version)));
                }
            }
            good_len += n as u64;
            records.push(VersionedSpec {
                version: rec.version,
                checksum: rec.checksum,
                spec: rec.spec,
            });
            if !complete {
                unterminated = true;
                break;
            }
        }
        drop(reader);
        if unterminated {
            // Parsed, but the newline never made it: finish the line.
            file.write_all(b"\n").map_err(io_err)?;
            good_len += 1;
        }
        if file.metadata().map_err(io_err)?.len() > good_len {
            file.set_len(good_len).map_err(io_err)?;
            file.seek(SeekFrom::End(0)).map_err(io_err)?;
        }
        Ok((SpecStore { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably append one record. Returns only after the data is synced.
    pub fn append(&mut self, entry: &VersionedSpec) -> Result<(), StoreError> {
        let rec = serde_json::json!({
            "version": entry.version,
            "checksum": entry.checksum,
            "spec": entry.spec,
        });
        let mut line = rec.to_string();
        line.push('\n');
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(version: u64) -> VersionedSpec {
        let spec = DeploymentSpec::empty("master");
        VersionedSpec {
            version,
            checksum: checksum(&spec),
            spec,
        }
    }

    #[test]
    fn roundtrip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        let (mut store, recs) = SpecStore::open(&path).unwrap();
        assert!(recs.is_empty());
        store.append(&entry(1)).unwrap();
        store.append(&entry(2)).unwrap();
        drop(store);
        let (_, recs) = SpecStore::open(&path).unwrap();
        assert_eq!(recs.iter().map(|r| r.version).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        let (mut store, _) = SpecStore::open(&path).unwrap();
        store.append(&entry(1)).unwrap();
        drop(store);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"version":2,"checks"#).unwrap();
        drop(f);
        let (mut store, recs) = SpecStore::open(&path).unwrap();
        assert_eq!(recs.len(), 1);
        store.append(&entry(2)).unwrap();
        drop(store);
        let (_, recs) = SpecStore::open(&path).unwrap();
        assert_eq!(recs.len(), 2);
    }

    #[test]
    fn checksum_mismatch_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        let mut bad = entry(1);
        bad.checksum = "00".into();
        let (mut store, _) = SpecStore::open(&path).unwrap();
        store.append(&bad).unwrap();
        drop(store);
        assert!(matches!(
            SpecStore::open(&path),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn versions_must_increase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.ndjson");
        let (mut store, _) = SpecStore::open(&path).unwrap();
        store.append(&entry(2)).unwrap();
        store.append(&entry(2)).unwrap();
        drop(store);
        assert!(matches!(
            SpecStore::open(&path),
            Err(StoreError::Corrupt { line: 2, .. })
        ));
    }
}
