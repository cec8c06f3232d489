use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{Published, Request, Response};
use super::{AgentRecord, VersionedSpec};
use crate::model::{ClusterId, DeploymentSpec};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("overwatch: {0}")]
    Remote(String),
}

/// Blocking client for the overwatch wire protocol.
pub struct OverwatchClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl OverwatchClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        stream.set_nodelay(true)?;
        Ok(OverwatchClient {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    fn call(&mut self, req: &Request) -> Result<Response, ClientError> {
        let mut line = crate::canonical::to_string(req);
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ClientError::Protocol("connection closed".into()));
        }
        let resp: Response =
            serde_json::from_str(&reply).map_err(|e| ClientError::Protocol(format!("bad response: {e}")))?;
        if resp.ok {
            Ok(resp)
        } else {
            Err(ClientError::Remote(
                resp.error.unwrap_or_else(|| "unspecified error".into()),
            ))
        }
    }

    pub fn register(&mut self, cluster: &ClusterId) -> Result<AgentRecord, ClientError> {
        self.call(&Request::Register {
            cluster: cluster.clone(),
        })?
        .record
        .ok_or_else(|| ClientError::Protocol("register response without record".into()))
    }

    pub fn publish(&mut self, spec: &DeploymentSpec) -> Result<Published, ClientError> {
        let spec = serde_json::to_value(spec).map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.call(&Request::Publish { spec })?
            .published
            .ok_or_else(|| ClientError::Protocol("publish response without version".into()))
    }

    pub fn poll(&mut self, cluster: &ClusterId, have: u64) -> Result<Option<VersionedSpec>, ClientError> {
        Ok(self
            .call(&Request::Poll {
                cluster: cluster.clone(),
                have,
            })?
            .update)
    }
}
