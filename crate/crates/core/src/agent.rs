//! Online control agent: registers with overwatch, polls for new specs and
//! writes this cluster's converged config whenever the version moves.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::control::{self, ClusterConfig};
use crate::model::ClusterId;
use crate::overwatch::client::{ClientError, OverwatchClient};
use crate::overwatch::VersionedSpec;

const MAX_BACKOFF: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct AgentOptions {
    pub cluster: ClusterId,
    pub overwatch: String,
    pub out_dir: PathBuf,
    pub poll_interval: Duration,
    /// Consecutive failed polls tolerated before giving up.
    pub max_attempts: u32,
    /// Stop once a version at least this high has been applied.
    pub exit_after_version: Option<u64>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("overwatch unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: ClientError },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

/// Write `cfg` into `dir` as `<cluster>.config.json`, replacing any previous
/// file atomically.
pub fn write_config(dir: &Path, cfg: &ClusterConfig) -> Result<PathBuf, AgentError> {
    let path = dir.join(cfg.file_name());
    let tmp = dir.join(format!(".{}.tmp", cfg.file_name()));
    let wrap = |source| AgentError::Write {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(wrap)?;
    fs::write(&tmp, cfg.to_canonical_json()).map_err(wrap)?;
    fs::rename(&tmp, &path).map_err(wrap)?;
    Ok(path)
}

pub struct Agent {
    opts: AgentOptions,
    client: Option<OverwatchClient>,
    have: u64,
}

impl Agent {
    pub fn new(opts: AgentOptions) -> Self {
        Agent {
            opts,
            client: None,
            have: 0,
        }
    }

    /// Newest spec version applied so far.
    pub fn version(&self) -> u64 {
        self.have
    }

    fn client(&mut self) -> Result<&mut OverwatchClient, ClientError> {
        if self.client.is_none() {
            let mut c = OverwatchClient::connect(self.opts.overwatch.as_str())?;
            c.register(&self.opts.cluster)?;
            self.client = Some(c);
        }
        Ok(self.client.as_mut().expect("connected above"))
    }

    fn apply(&mut self, update: &VersionedSpec) -> Result<(), AgentError> {
        match control::converge(&update.spec, &self.opts.cluster) {
            Ok(cfg) => {
                write_config(&self.opts.out_dir, &cfg)?;
            }
            // The spec was valid when published, so this is a spec that
            // does not mention our cluster. Keep the old config.
            Err(e) => eprintln!(
                "agent {}: version {} not applied: {e}",
                self.opts.cluster, update.version
            ),
        }
        self.have = update.version;
        Ok(())
    }

    /// Poll once and apply any update. Returns the applied version, if any.
    pub fn step(&mut self) -> Result<Option<u64>, StepError> {
        let cluster = self.opts.cluster.clone();
        let have = self.have;
        let update = match self.client().and_then(|c| c.poll(&cluster, have)) {
            Ok(u) => u,
            Err(e) => {
                self.client = None;
                return Err(StepError::Client(e));
            }
        };
        match update {
            Some(u) => {
                self.apply(&u).map_err(StepError::Agent)?;
                Ok(Some(u.version))
            }
            None => Ok(None),
        }
    }

    /// Poll until `exit_after_version` is reached, or forever.
    pub fn run(&mut self) -> Result<u64, AgentError> {
        let mut failures = 0u32;
        loop {
            match self.step() {
                Ok(_) => failures = 0,
                Err(StepError::Agent(e)) => return Err(e),
                Err(StepError::Client(e)) => {
                    failures += 1;
                    if failures >= self.opts.max_attempts {
                        return Err(AgentError::Unreachable {
                            attempts: failures,
                            last: e,
                        });
                    }
                    let backoff = Duration::from_millis(100 << failures.min(6)).min(MAX_BACKOFF);
                    eprintln!("agent {}: attempt {failures} failed: {e}; retrying", self.opts.cluster);
                    thread::sleep(backoff);
                    continue;
                }
            }
            if self.opts.exit_after_version.is_some_and(|v| self.have >= v) {
                return Ok(self.have);
            }
            thread::sleep(self.opts.poll_interval);
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Client(ClientError),
    #[error(transparent)]
    Agent(AgentError),
}
