//! Overwatch: the public-cloud coordination service.
//!
//! Agents register by cluster name and pull the newest deployment spec.
//! Every publish is validated, assigned the next version, and synced to the
//! store before it is acknowledged. All operations run under one lock, which
//! gives a single total order over registrations, publishes and polls.

pub mod client;
pub mod history;
pub mod protocol;
pub mod server;
pub mod store;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ClusterId, DeploymentSpec, ValidationReport};
pub use store::{SpecStore, StoreError};

/// Hex SHA-256 of the spec's compact canonical serialization.
pub fn checksum(spec: &DeploymentSpec) -> String {
    hex::encode(Sha256::digest(crate::canonical::to_string(spec).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub cluster: ClusterId,
    pub registered_at: u64,
    pub last_acked_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedSpec {
    /// Store-assigned, unrelated to the document's schema version.
    pub version: u64,
    pub checksum: String,
    pub spec: DeploymentSpec,
}

#[derive(Debug, Error)]
pub enum OverwatchError {
    #[error("spec failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("agent `{0}` is not registered")]
    UnregisteredAgent(ClusterId),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Default)]
struct State {
    agents: BTreeMap<ClusterId, AgentRecord>,
    next_seq: u64,
    latest: Option<Arc<VersionedSpec>>,
    store: Option<SpecStore>,
}

#[derive(Debug, Default)]
pub struct Overwatch {
    state: Mutex<State>,
}

impl Overwatch {
    /// A service without persistence.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open the service on a store file, resuming from its newest record.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let (store, mut records) = SpecStore::open(path)?;
        let state = State {
            latest: records.pop().map(Arc::new),
            store: Some(store),
            ..State::default()
        };
        Ok(Overwatch {
            state: Mutex::new(state),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A panic while holding the lock cannot leave State half-updated:
        // every mutation is a single assignment after the fallible work.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Register `cluster`, or return its existing record.
    pub fn register(&self, cluster: &ClusterId) -> AgentRecord {
        let mut st = self.lock();
        if let Some(rec) = st.agents.get(cluster) {
            return rec.clone();
        }
        st.next_seq += 1;
        let rec = AgentRecord {
            cluster: cluster.clone(),
            registered_at: st.next_seq,
            last_acked_version: 0,
        };
        st.agents.insert(cluster.clone(), rec.clone());
        rec
    }

    /// Validate, version and persist `spec`.
    pub fn publish(&self, spec: DeploymentSpec) -> Result<Arc<VersionedSpec>, OverwatchError> {
        let report = spec.validate();
        if !report.is_empty() {
            return Err(OverwatchError::ValidationFailed(report));
        }
        let mut st = self.lock();
        let version = st.latest.as_ref().map_or(0, |v| v.version) + 1;
        let entry = Arc::new(VersionedSpec {
            version,
            checksum: checksum(&spec),
            spec,
        });
        if let Some(store) = st.store.as_mut() {
            store.append(&entry)?;
        }
        st.latest = Some(entry.clone());
        Ok(entry)
    }

    /// The newest spec if it is newer than `have`.
    pub fn poll(&self, cluster: &ClusterId, have: u64) -> Result<Option<Arc<VersionedSpec>>, OverwatchError> {
        let mut st = self.lock();
        let latest = st.latest.clone();
        let rec = st
            .agents
            .get_mut(cluster)
            .ok_or_else(|| OverwatchError::UnregisteredAgent(cluster.clone()))?;
        match latest {
            Some(v) if v.version > have => {
                rec.last_acked_version = rec.last_acked_version.max(v.version);
                Ok(Some(v))
            }
            _ => Ok(None),
        }
    }

    pub fn latest(&self) -> Option<Arc<VersionedSpec>> {
        self.lock().latest.clone()
    }

    pub fn agents(&self) -> Vec<AgentRecord> {
        self.lock().agents.values().cloned().collect()
    }
}
