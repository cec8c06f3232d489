//! Control agent: computes one cluster's configuration from the full spec.
//!
//! Every agent sees the same spec and runs the same deterministic steps, so
//! the configs of different clusters agree with each other without any
//! agent-to-agent communication. For each service, in name order:
//!
//! 1. [`ConfigBuilder::add_dns_entry`] binds a dummy address for services
//!    hosted elsewhere.
//! 2. [`ConfigBuilder::reserve_route`] reserves an egress port (external
//!    service) or ingress port (native service) and installs the matching
//!    forwarding rule.
//! 3. [`ConfigBuilder::set_access_control`] installs default-deny plus the
//!    allow rules for local consumers and, when needed, the ingress gateway.
//!
//! Private clusters then build their tunnels to the master with
//! [`ConfigBuilder::create_channels`]; the master links its egress routes to
//! the remote-forward listeners the private agents open. A remote-forward
//! listener sits on the master's egress port for the service, which the
//! private agent replays the same way it replays master ingress ports.

pub mod alloc;
pub mod config;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

pub use config::{
    AclAction, AclRule, AclSource, ChannelDescriptor, ChannelKey, ChannelMode, ClusterConfig, Endpoint, ForwardRule,
    ForwardTarget, Host, VirtualIp,
};

use crate::model::{ClusterId, DeploymentSpec, ModelError, ServiceId, Topology, ValidationReport};
use alloc::{AliasAllocator, PortAllocator};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("spec failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("unknown cluster `{0}`")]
    UnknownCluster(ClusterId),
    #[error("unknown service `{0}`")]
    UnknownService(ServiceId),
    #[error("service `{0}` is not hosted on the master cluster")]
    NotMasterHosted(ServiceId),
    #[error("alias address range exhausted")]
    AliasRangeExhausted,
    #[error("native service address range exhausted")]
    NativeRangeExhausted,
    #[error("port window exhausted on {gateway}")]
    PortWindowExhausted { gateway: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl From<ModelError> for ControlError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invalid(report) => ControlError::ValidationFailed(report),
            ModelError::UnknownService(s) => ControlError::UnknownService(s),
            ModelError::UnknownCluster(c) => ControlError::UnknownCluster(c),
            other => ControlError::Precondition(other.to_string()),
        }
    }
}

/// Port the master's ingress gateway reserves for master-hosted `s`,
/// computed by replaying the master's ingress allocator.
pub fn estimate_master_iport(topo: &Topology, s: &ServiceId) -> Result<u16, ControlError> {
    let master = topo.master();
    if topo.host_cluster(s.as_str())? != master {
        return Err(ControlError::NotMasterHosted(s.clone()));
    }
    let mut ingress = PortAllocator::new(format!("igw:{master}"));
    for (name, info) in topo.services() {
        if info.host == *master {
            let port = ingress.allot()?;
            if name == s {
                return Ok(port);
            }
        }
    }
    unreachable!("master-hosted service appears in the service list")
}

/// Port of the master-side listener of the remote-forward channel for
/// privately hosted `s`: the egress port the master reserves for `s`,
/// computed by replaying the master's egress allocator.
pub fn remote_listener_port(topo: &Topology, s: &ServiceId) -> Result<u16, ControlError> {
    let master = topo.master();
    let host = topo.host_cluster(s.as_str())?;
    if host == master || !topo.consumed_externally(s.as_str())? {
        return Err(ControlError::Precondition(format!(
            "`{s}` has no remote-forward channel"
        )));
    }
    let mut egress = PortAllocator::new(format!("egw:{master}"));
    for (name, info) in topo.services() {
        if info.host != *master {
            let port = egress.allot()?;
            if name == s {
                return Ok(port);
            }
        }
    }
    unreachable!("privately hosted service appears in the service list")
}

/// Incrementally builds one cluster's [`ClusterConfig`].
#[derive(Debug)]
pub struct ConfigBuilder<'a> {
    topo: &'a Topology,
    cfg: ClusterConfig,
    native: BTreeMap<ServiceId, Ipv4Addr>,
    aliases: AliasAllocator,
    egress: PortAllocator,
    ingress: PortAllocator,
}

impl<'a> ConfigBuilder<'a> {
    pub fn new(topo: &'a Topology, cluster: &ClusterId) -> Result<Self, ControlError> {
        if !topo.has_cluster(cluster.as_str()) {
            return Err(ControlError::UnknownCluster(cluster.clone()));
        }
        Ok(ConfigBuilder {
            topo,
            cfg: ClusterConfig::empty(cluster.clone(), topo.version()),
            native: alloc::native_addresses(topo)?,
            aliases: AliasAllocator::default(),
            egress: PortAllocator::new(format!("egw:{cluster}")),
            ingress: PortAllocator::new(format!("igw:{cluster}")),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn finish(self) -> ClusterConfig {
        self.cfg
    }

    fn cluster(&self) -> &ClusterId {
        &self.cfg.cluster
    }

    fn is_native(&self, s: &ServiceId) -> Result<bool, ControlError> {
        Ok(self.topo.host_cluster(s.as_str())? == self.cluster())
    }

    /// Address pods of this cluster use for `s`: the native address or the
    /// dummy alias.
    fn service_address(&self, s: &ServiceId) -> Result<Ipv4Addr, ControlError> {
        if self.is_native(s)? {
            Ok(self.native[s])
        } else {
            self.cfg
                .dns
                .get(s)
                .map(|v| v.address())
                .ok_or_else(|| ControlError::Precondition(format!("no dns entry for external service `{s}`")))
        }
    }

    pub fn add_dns_entry(&mut self, s: &ServiceId) -> Result<(), ControlError> {
        if !self.is_native(s)? && !self.cfg.dns.contains_key(s) {
            let vip = self.aliases.allot()?;
            self.cfg.dns.insert(s.clone(), vip);
        }
        Ok(())
    }

    pub fn reserve_route(&mut self, s: &ServiceId) -> Result<(), ControlError> {
        let port = self.topo.service(s.as_str())?.port;
        let address = self.service_address(s)?;
        let cluster = self.cluster().clone();
        let rule = if self.is_native(s)? {
            let iport = self.ingress.allot()?;
            self.cfg.iport.insert(s.clone(), iport);
            ForwardRule {
                matches: Endpoint::ingress(&cluster, iport),
                target: ForwardTarget::Endpoint(Endpoint::vip(address, port)),
            }
        } else {
            let eport = self.egress.allot()?;
            self.cfg.eport.insert(s.clone(), eport);
            ForwardRule {
                matches: Endpoint::vip(address, port),
                target: ForwardTarget::Endpoint(Endpoint::egress(&cluster, eport)),
            }
        };
        self.cfg.forwards.push(rule);
        Ok(())
    }

    pub fn set_access_control(&mut self, s: &ServiceId) -> Result<(), ControlError> {
        let info = self.topo.service(s.as_str())?;
        let cluster = self.cluster().clone();
        let native = self.is_native(s)?;
        let dst = if native {
            Endpoint::vip(self.native[s], info.port)
        } else {
            let eport = self
                .cfg
                .eport
                .get(s)
                .copied()
                .ok_or_else(|| ControlError::Precondition(format!("no egress port reserved for `{s}`")))?;
            Endpoint::egress(&cluster, eport)
        };

        self.cfg.default_deny.push(s.clone());
        for pod in &info.consumers {
            if self.topo.pod(pod.as_str())?.cluster == cluster {
                self.cfg
                    .acls
                    .push(AclRule::allow(AclSource::Pod(pod.clone()), dst.clone()));
            }
        }
        if native && self.topo.consumed_externally(s.as_str())? {
            self.cfg
                .acls
                .push(AclRule::allow(AclSource::IngressGateway(cluster), dst));
        }
        Ok(())
    }

    pub fn create_channels(&mut self, s: &ServiceId) -> Result<(), ControlError> {
        let master = self.topo.master().clone();
        let cluster = self.cluster().clone();
        if cluster == master {
            return Err(ControlError::Precondition(
                "the master cluster opens no channels".into(),
            ));
        }
        let host = self.topo.host_cluster(s.as_str())?;
        if *host == master {
            if !self.topo.consumed_in(s.as_str(), &cluster)? {
                return Ok(());
            }
            let eport = self
                .cfg
                .eport
                .get(s)
                .copied()
                .ok_or_else(|| ControlError::Precondition(format!("no egress port reserved for `{s}`")))?;
            let channel = ChannelDescriptor {
                mode: ChannelMode::LocalFwd,
                private_cluster: cluster.clone(),
                service: s.clone(),
                listen: Endpoint::egress(&cluster, eport),
                target: Endpoint::ingress(&master, estimate_master_iport(self.topo, s)?),
            };
            self.cfg.forwards.push(ForwardRule {
                matches: Endpoint::egress(&cluster, eport),
                target: ForwardTarget::Channel(channel.key()),
            });
            self.cfg.channels.push(channel);
        } else if *host == cluster && self.topo.consumed_externally(s.as_str())? {
            let iport = self
                .cfg
                .iport
                .get(s)
                .copied()
                .ok_or_else(|| ControlError::Precondition(format!("no ingress port reserved for `{s}`")))?;
            self.cfg.channels.push(ChannelDescriptor {
                mode: ChannelMode::RemoteFwd,
                private_cluster: cluster.clone(),
                service: s.clone(),
                listen: Endpoint::egress(&master, remote_listener_port(self.topo, s)?),
                target: Endpoint::ingress(&cluster, iport),
            });
        }
        Ok(())
    }

    /// Master only: send egress traffic for privately hosted services into
    /// the remote-forward channel the hosting agent opens.
    pub fn link_remote_listeners(&mut self) -> Result<(), ControlError> {
        let master = self.topo.master().clone();
        if *self.cluster() != master {
            return Err(ControlError::Precondition(
                "only the master links remote listeners".into(),
            ));
        }
        let topo = self.topo;
        for (s, info) in topo.services() {
            if info.host == master || !topo.consumed_externally(s.as_str())? {
                continue;
            }
            let eport = self.cfg.eport[s];
            self.cfg.forwards.push(ForwardRule {
                matches: Endpoint::egress(&master, eport),
                target: ForwardTarget::Channel(ChannelKey::new(ChannelMode::RemoteFwd, &info.host, s)),
            });
        }
        Ok(())
    }
}

/// Compute the configuration of `cluster` on a validated topology.
pub fn converge_topology(topo: &Topology, cluster: &ClusterId) -> Result<ClusterConfig, ControlError> {
    let mut b = ConfigBuilder::new(topo, cluster)?;
    let services: Vec<ServiceId> = topo.services().map(|(s, _)| s.clone()).collect();
    for s in &services {
        b.add_dns_entry(s)?;
        b.reserve_route(s)?;
        b.set_access_control(s)?;
    }
    if topo.is_master(cluster) {
        b.link_remote_listeners()?;
    } else {
        for s in &services {
            b.create_channels(s)?;
        }
    }
    Ok(b.finish())
}

/// Compute the configuration of `cluster`. A pure function of its inputs.
pub fn converge(spec: &DeploymentSpec, cluster: &ClusterId) -> Result<ClusterConfig, ControlError> {
    converge_topology(&Topology::new(spec)?, cluster)
}

/// Configurations for every cluster of the spec.
pub fn converge_all(spec: &DeploymentSpec) -> Result<BTreeMap<ClusterId, ClusterConfig>, ControlError> {
    let topo = Topology::new(spec)?;
    topo.clusters()
        .map(|(c, _)| converge_topology(&topo, c).map(|cfg| (c.clone(), cfg)))
        .collect()
}
