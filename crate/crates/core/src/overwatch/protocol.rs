//! Newline-delimited JSON wire protocol.
//!
//! Requests:
//!
//! ```text
//! {"op":"register","cluster":"priv-1"}
//! {"op":"publish","spec":{...deployment spec document...}}
//! {"op":"poll","cluster":"priv-1","have":3}
//! ```
//!
//! Every response carries `"ok"`; failures add `"error"`.

use serde::{Deserialize, Serialize};

use super::{AgentRecord, Overwatch, OverwatchError, VersionedSpec};
use crate::model::{parse_spec, ClusterId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Register { cluster: ClusterId },
    Publish { spec: serde_json::Value },
    Poll { cluster: ClusterId, have: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Published {
    pub version: u64,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<Published>,
    /// Poll result; absent when the agent is up to date.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<VersionedSpec>,
}

impl Response {
    pub fn error(msg: impl Into<String>) -> Self {
        Response {
            ok: false,
            error: Some(msg.into()),
            ..Response::default()
        }
    }

    fn ok() -> Self {
        Response {
            ok: true,
            ..Response::default()
        }
    }
}

impl From<OverwatchError> for Response {
    fn from(e: OverwatchError) -> Self {
        Response::error(e.to_string())
    }
}

/// Execute one request line against the service.
pub fn handle_line(ow: &Overwatch, line: &str) -> Response {
    match serde_json::from_str::<Request>(line) {
        Ok(req) => handle(ow, req),
        Err(e) => Response::error(format!("bad request: {e}")),
    }
}

pub fn handle(ow: &Overwatch, req: Request) -> Response {
    match req {
        Request::Register { cluster } => Response {
            record: Some(ow.register(&cluster)),
            ..Response::ok()
        },
        Request::Publish { spec } => {
            let spec = match parse_spec(spec.to_string().as_bytes()) {
                Ok(s) => s,
                Err(e) => return Response::error(e.to_string()),
            };
            match ow.publish(spec) {
                Ok(v) => Response {
                    published: Some(Published {
                        version: v.version,
                        checksum: v.checksum.clone(),
                    }),
                    ..Response::ok()
                },
                Err(e) => e.into(),
            }
        }
        Request::Poll { cluster, have } => match ow.poll(&cluster, have) {
            Ok(update) => Response {
                update: update.map(|v| (*v).clone()),
                ..Response::ok()
            },
            Err(e) => e.into(),
        },
    }
}
