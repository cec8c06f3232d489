//! Hybrid-cloud management plane for containerized data pipelines.
//!
//! A deployment spec describes clusters (one public-cloud master, any number
//! of private clusters), services and pods, and which pods depend on which
//! services. Every cluster runs a control agent that computes, without
//! talking to its peers, the DNS aliases, gateway routes, tunnels and
//! access-control rules it needs so that pods can reach exactly the services
//! they depend on, wherever those services are hosted.
//!
//! Modules:
//!
//! - [`model`]: the deployment spec, its validation and derived topology.
//! - [`control`]: the per-cluster control agent algorithms.
//! - [`simnet`]: an in-process multi-cluster network that resolves
//!   connections hop by hop, plus an independent reachability oracle.
//! - [`overwatch`]: versioned spec store, agent registry and dispatcher.
//! - [`agent`]: the online agent loop that polls overwatch and converges.
//! - [`cli`]: the command-line front end.

pub mod agent;
pub mod canonical;
pub mod cli;
pub mod control;
pub mod model;
pub mod overwatch;
pub mod simnet;

pub use control::{converge, converge_all, estimate_master_iport, ClusterConfig};
pub use model::{parse_spec, ClusterId, DeploymentSpec, PodId, ServiceId, Topology};
pub use simnet::{oracle_matrix, reachability_matrix, ConnectionTrace, ReachabilityMatrix, SimWorld, Verdict};

/// The bundled hybrid Airflow deployment: scheduler, webserver, broker and
/// database on the master cluster, two workers on a private cluster.
pub const COMPOSER_SPEC: &str = include_str!("../fixtures/composer.json");
