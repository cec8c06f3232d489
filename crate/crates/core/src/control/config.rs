//! Output types of a control agent: one [`ClusterConfig`] per cluster.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use super::alloc;
use crate::model::{ClusterId, PodId, ServiceId};

/// Dummy address bound to a service hosted in another cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VirtualIp(Ipv4Addr);

impl VirtualIp {
    pub(crate) fn new_unchecked(addr: Ipv4Addr) -> Self {
        VirtualIp(addr)
    }

    pub fn address(self) -> Ipv4Addr {
        self.0
    }

    /// Inside the alias range and not a `.0` or `.255` address.
    pub fn is_valid(self) -> bool {
        alloc::in_alias_range(self.0)
    }
}

impl fmt::Display for VirtualIp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParseNameError(pub String);

impl fmt::Display for ParseNameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot parse `{}`", self.0)
    }
}

impl std::error::Error for ParseNameError {}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

/// Something that can send or receive traffic.
///
/// Written as `vip:<addr>`, `igw:<cluster>`, `egw:<cluster>` or `pod:<pod>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Host {
    /// A service address, native or alias.
    Vip(Ipv4Addr),
    IngressGateway(ClusterId),
    EgressGateway(ClusterId),
    Pod(PodId),
}

impl Host {
    /// The cluster a gateway belongs to.
    pub fn gateway_cluster(&self) -> Option<&ClusterId> {
        match self {
            Host::IngressGateway(c) | Host::EgressGateway(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_gateway(&self) -> bool {
        self.gateway_cluster().is_some()
    }
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Host::Vip(a) => write!(f, "vip:{a}"),
            Host::IngressGateway(c) => write!(f, "igw:{c}"),
            Host::EgressGateway(c) => write!(f, "egw:{c}"),
            Host::Pod(p) => write!(f, "pod:{p}"),
        }
    }
}

impl FromStr for Host {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNameError(s.to_owned());
        let (kind, name) = s.split_once(':').ok_or_else(err)?;
        if name.is_empty() {
            return Err(err());
        }
        Ok(match kind {
            "vip" => Host::Vip(name.parse().map_err(|_| err())?),
            "igw" => Host::IngressGateway(name.into()),
            "egw" => Host::EgressGateway(name.into()),
            "pod" => Host::Pod(name.into()),
            _ => return Err(err()),
        })
    }
}

string_serde!(Host);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub host: Host,
    pub port: u16,
}

impl Endpoint {
    pub fn new(host: Host, port: u16) -> Self {
        Endpoint { host, port }
    }

    pub fn vip(addr: Ipv4Addr, port: u16) -> Self {
        Endpoint::new(Host::Vip(addr), port)
    }

    pub fn ingress(cluster: &ClusterId, port: u16) -> Self {
        Endpoint::new(Host::IngressGateway(cluster.clone()), port)
    }

    pub fn egress(cluster: &ClusterId, port: u16) -> Self {
        Endpoint::new(Host::EgressGateway(cluster.clone()), port)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Listener on the private side, far end at the master.
    LocalFwd,
    /// Listener at the master, far end on the private side.
    RemoteFwd,
}

impl ChannelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::LocalFwd => "local_fwd",
            ChannelMode::RemoteFwd => "remote_fwd",
        }
    }
}

/// Identifies a tunnel channel: `<mode>:<private cluster>:<service>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelKey {
    pub mode: ChannelMode,
    pub private_cluster: ClusterId,
    pub service: ServiceId,
}

impl ChannelKey {
    pub fn new(mode: ChannelMode, private_cluster: &ClusterId, service: &ServiceId) -> Self {
        ChannelKey {
            mode,
            private_cluster: private_cluster.clone(),
            service: service.clone(),
        }
    }
}

impl fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.mode.as_str(), self.private_cluster, self.service)
    }
}

impl FromStr for ChannelKey {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNameError(s.to_owned());
        let mut parts = s.split(':');
        let (Some(mode), Some(cluster), Some(service), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(err());
        };
        let mode = match mode {
            "local_fwd" => ChannelMode::LocalFwd,
            "remote_fwd" => ChannelMode::RemoteFwd,
            _ => return Err(err()),
        };
        if cluster.is_empty() || service.is_empty() {
            return Err(err());
        }
        Ok(ChannelKey {
            mode,
            private_cluster: cluster.into(),
            service: service.into(),
        })
    }
}

string_serde!(ChannelKey);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardTarget {
    Endpoint(Endpoint),
    Channel(ChannelKey),
}

impl fmt::Display for ForwardTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForwardTarget::Endpoint(e) => e.fmt(f),
            ForwardTarget::Channel(k) => write!(f, "channel:{k}"),
        }
    }
}

/// Traffic arriving at `matches` is sent on to `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardRule {
    #[serde(rename = "match")]
    pub matches: Endpoint,
    pub target: ForwardTarget,
}

impl fmt::Display for ForwardRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.matches, self.target)
    }
}

/// Source of an access-control rule: `pod:<pod>` or `igw:<cluster>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AclSource {
    Pod(PodId),
    IngressGateway(ClusterId),
}

impl fmt::Display for AclSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AclSource::Pod(p) => write!(f, "pod:{p}"),
            AclSource::IngressGateway(c) => write!(f, "igw:{c}"),
        }
    }
}

impl FromStr for AclSource {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Host>()? {
            Host::Pod(p) => Ok(AclSource::Pod(p)),
            Host::IngressGateway(c) => Ok(AclSource::IngressGateway(c)),
            _ => Err(ParseNameError(s.to_owned())),
        }
    }
}

string_serde!(AclSource);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AclAction {
    Allow,
}

/// Only allow rules exist; anything not allowed is denied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclRule {
    pub src: AclSource,
    pub dst: Endpoint,
    pub action: AclAction,
}

impl AclRule {
    pub fn allow(src: AclSource, dst: Endpoint) -> Self {
        AclRule {
            src,
            dst,
            action: AclAction::Allow,
        }
    }
}

impl fmt::Display for AclRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "allow {} -> {}", self.src, self.dst)
    }
}

/// A port-forwarding tunnel between a private cluster and the master.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDescriptor {
    pub mode: ChannelMode,
    pub private_cluster: ClusterId,
    pub service: ServiceId,
    pub listen: Endpoint,
    pub target: Endpoint,
}

impl ChannelDescriptor {
    pub fn key(&self) -> ChannelKey {
        ChannelKey::new(self.mode, &self.private_cluster, &self.service)
    }
}

impl fmt::Display for ChannelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} => {}", self.key(), self.listen, self.target)
    }
}

/// Everything one control agent installs in its cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub cluster: ClusterId,
    pub spec_version: u32,
    /// Dummy DNS entries for services hosted elsewhere.
    pub dns: BTreeMap<ServiceId, VirtualIp>,
    pub eport: BTreeMap<ServiceId, u16>,
    pub iport: BTreeMap<ServiceId, u16>,
    /// Services with default-deny installed, in processing order.
    pub default_deny: Vec<ServiceId>,
    pub forwards: Vec<ForwardRule>,
    pub acls: Vec<AclRule>,
    pub channels: Vec<ChannelDescriptor>,
}

impl ClusterConfig {
    pub fn empty(cluster: ClusterId, spec_version: u32) -> Self {
        ClusterConfig {
            cluster,
            spec_version,
            dns: BTreeMap::new(),
            eport: BTreeMap::new(),
            iport: BTreeMap::new(),
            default_deny: Vec::new(),
            forwards: Vec::new(),
            acls: Vec::new(),
            channels: Vec::new(),
        }
    }

    /// Canonical serialization, the format of `<cluster>.config.json`.
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn file_name(&self) -> String {
        format!("{}.config.json", self.cluster)
    }

    pub fn forward_for(&self, endpoint: &Endpoint) -> Option<&ForwardRule> {
        self.forwards.iter().find(|r| r.matches == *endpoint)
    }

    pub fn allows(&self, src: &AclSource, dst: &Endpoint) -> bool {
        self.acls
            .iter()
            .any(|a| a.action == AclAction::Allow && a.src == *src && a.dst == *dst)
    }

    pub fn channel(&self, key: &ChannelKey) -> Option<&ChannelDescriptor> {
        self.channels.iter().find(|c| c.key() == *key)
    }
}
