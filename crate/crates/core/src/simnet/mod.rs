//! In-process simulation of the multi-cluster network.
//!
//! A [`SimWorld`] holds the converged configs of every cluster plus the
//! up/down state of each tunnel. [`SimWorld::resolve_connection`] walks one
//! logical connection hop by hop through DNS, access control, forwarding
//! rules, the tunnel and the far side's ingress gateway.
//! [`oracle_matrix`] predicts the same verdicts straight from the spec.

mod matrix;
mod trace;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

pub use matrix::{oracle_matrix, oracle_matrix_with_down, reachability_matrix, MatrixMismatch, ReachabilityMatrix};
pub use trace::{ConnectionTrace, Hop, HopKind, Verdict};

use crate::control::{
    self, alloc, ChannelDescriptor, ChannelKey, ChannelMode, ClusterConfig, ControlError, Endpoint, ForwardTarget, Host,
};
use crate::model::{ClusterId, DeploymentSpec, ModelError, PodId, ServiceId, Topology, ValidationReport};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("no config for cluster `{0}`")]
    MissingClusterConfig(ClusterId),
    #[error("config for `{0}` does not belong to any cluster of the spec")]
    UnexpectedClusterConfig(ClusterId),
    #[error("inconsistent channels: {0}")]
    InconsistentChannels(String),
    #[error("unknown pod `{0}`")]
    UnknownPod(PodId),
    #[error("unknown service `{0}`")]
    UnknownService(ServiceId),
    #[error("unknown channel `{0}`")]
    UnknownChannel(ChannelKey),
    #[error("spec failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownPod(p) => SimError::UnknownPod(p),
            ModelError::UnknownService(s) => SimError::UnknownService(s),
            ModelError::Invalid(report) => SimError::ValidationFailed(report),
            other => SimError::Model(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunnelState {
    Up,
    Down,
}

/// Clusters, their configs and the tunnels between them.
#[derive(Debug, Clone)]
pub struct SimWorld {
    topo: Topology,
    configs: BTreeMap<ClusterId, ClusterConfig>,
    native: BTreeMap<ServiceId, Ipv4Addr>,
    channels: BTreeMap<ChannelKey, ChannelDescriptor>,
    tunnels: BTreeMap<ChannelKey, TunnelState>,
}

impl SimWorld {
    /// Assemble a world from a spec and one config per cluster. All tunnels
    /// start up.
    pub fn build(spec: &DeploymentSpec, configs: BTreeMap<ClusterId, ClusterConfig>) -> Result<Self, SimError> {
        let topo = Topology::new(spec)?;
        for (c, _) in topo.clusters() {
            if !configs.contains_key(c) {
                return Err(SimError::MissingClusterConfig(c.clone()));
            }
        }
        for (c, cfg) in &configs {
            if !topo.has_cluster(c.as_str()) || cfg.cluster != *c {
                return Err(SimError::UnexpectedClusterConfig(c.clone()));
            }
        }
        let native = alloc::native_addresses(&topo)?;

        let master = topo.master().clone();
        let mut channels = BTreeMap::new();
        for (c, cfg) in &configs {
            for ch in &cfg.channels {
                if ch.private_cluster != *c || *c == master {
                    return Err(SimError::InconsistentChannels(format!("{} declared by {c}", ch.key())));
                }
                if channels.insert(ch.key(), ch.clone()).is_some() {
                    return Err(SimError::InconsistentChannels(format!("{} declared twice", ch.key())));
                }
            }
        }

        for ch in channels.values() {
            let (near, far) = match ch.mode {
                ChannelMode::LocalFwd => (&ch.private_cluster, &master),
                ChannelMode::RemoteFwd => (&master, &ch.private_cluster),
            };
            if ch.listen.host.gateway_cluster() != Some(near) || ch.target.host.gateway_cluster() != Some(far) {
                return Err(SimError::InconsistentChannels(format!(
                    "{} does not span {near} -> {far}",
                    ch.key()
                )));
            }
            let enters = configs[near]
                .forward_for(&ch.listen)
                .is_some_and(|r| r.target == ForwardTarget::Channel(ch.key()));
            if !enters {
                return Err(SimError::InconsistentChannels(format!(
                    "{} listens on {} but {near} routes nothing into it",
                    ch.key(),
                    ch.listen
                )));
            }
            // The far end must be an ingress route on the far cluster.
            if configs[far].forward_for(&ch.target).is_none() {
                return Err(SimError::InconsistentChannels(format!(
                    "{} targets {} but {far} has no route for it",
                    ch.key(),
                    ch.target
                )));
            }
        }

        for (c, cfg) in &configs {
            for rule in &cfg.forwards {
                let ForwardTarget::Channel(key) = &rule.target else {
                    continue;
                };
                let expected = if *c == master {
                    ChannelMode::RemoteFwd
                } else {
                    ChannelMode::LocalFwd
                };
                let ok =
                    key.mode == expected && channels.contains_key(key) && (*c == master || key.private_cluster == *c);
                if !ok {
                    return Err(SimError::InconsistentChannels(format!(
                        "{c} routes into unknown channel {key}"
                    )));
                }
            }
        }

        let tunnels = channels.keys().map(|k| (k.clone(), TunnelState::Up)).collect();
        Ok(SimWorld {
            topo,
            configs,
            native,
            channels,
            tunnels,
        })
    }

    /// Converge every cluster and build the world from the result.
    pub fn converged(spec: &DeploymentSpec) -> Result<Self, SimError> {
        Self::build(spec, control::converge_all(spec)?)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn config(&self, c: &ClusterId) -> Option<&ClusterConfig> {
        self.configs.get(c)
    }

    pub fn configs(&self) -> &BTreeMap<ClusterId, ClusterConfig> {
        &self.configs
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelDescriptor> {
        self.channels.values()
    }

    pub fn tunnels(&self) -> &BTreeMap<ChannelKey, TunnelState> {
        &self.tunnels
    }

    pub fn tunnel_state(&self, key: &ChannelKey) -> Option<TunnelState> {
        self.tunnels.get(key).copied()
    }

    pub fn set_tunnel_state(&mut self, key: &ChannelKey, state: TunnelState) -> Result<(), SimError> {
        match self.tunnels.get_mut(key) {
            Some(s) => {
                *s = state;
                Ok(())
            }
            None => Err(SimError::UnknownChannel(key.clone())),
        }
    }

    pub(crate) fn native_address(&self, s: &ServiceId) -> Ipv4Addr {
        self.native[s]
    }

    /// Native service at `addr:port` in cluster `c`, if any.
    pub(crate) fn native_service_at(&self, c: &ClusterId, ep: &Endpoint) -> Option<&ServiceId> {
        let Host::Vip(addr) = ep.host else { return None };
        self.topo
            .services()
            .find(|(s, info)| info.host == *c && info.port == ep.port && self.native[*s] == addr)
            .map(|(s, _)| s)
    }

    pub(crate) fn channel(&self, key: &ChannelKey) -> Option<&ChannelDescriptor> {
        self.channels.get(key)
    }

    pub fn resolve_connection(&self, src: &PodId, dst: &ServiceId) -> Result<ConnectionTrace, SimError> {
        trace::resolve(self, src, dst)
    }
}
