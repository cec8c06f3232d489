//! Deployment spec: clusters, services, pods, and the pod → service
//! dependency edges, with validation and the derived topology the control
//! agents work from.
//!
//! Dependencies are a plain edge set: pod `p` depends on service `s` iff
//! `s ∈ p.needs`. Every pod belongs to exactly one cluster, so the pods of a
//! cluster form that cluster's partition. All pods backing a service must
//! live in one cluster, the service's host cluster.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum identifier length (one DNS label).
pub const MAX_IDENT_LEN: usize = 63;

/// The only document schema version understood by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Returns true if `s` matches `[a-z0-9]([a-z0-9-]*[a-z0-9])?` and is at most
/// 63 characters long.
pub fn is_dns_label(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.is_empty() || bytes.len() > MAX_IDENT_LEN {
        return false;
    }
    let alnum = |b: &u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    alnum(&bytes[0]) && alnum(&bytes[bytes.len() - 1]) && bytes.iter().all(|b| alnum(b) || *b == b'-')
}

macro_rules! ident {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Self {
                Self(name.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            /// Whether the name follows the DNS-label grammar.
            pub fn is_well_formed(&self) -> bool {
                is_dns_label(&self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl PartialEq<str> for $name {
            fn eq(&self, other: &str) -> bool {
                self.0 == other
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

ident!(
    /// Name of a pod.
    PodId
);
ident!(
    /// Name of a service.
    ServiceId
);
ident!(
    /// Name of a cluster.
    ClusterId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterRole {
    Master,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDecl {
    #[serde(rename = "name")]
    pub id: ClusterId,
    pub role: ClusterRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDecl {
    #[serde(rename = "name")]
    pub id: ServiceId,
    pub port: u16,
    pub backing_pods: BTreeSet<PodId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodDecl {
    #[serde(rename = "name")]
    pub id: PodId,
    pub cluster: ClusterId,
    pub needs: BTreeSet<ServiceId>,
}

/// The full deployment: every cluster, service and pod, and the dependency
/// edges between pods and services.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSpec {
    pub version: u32,
    pub clusters: Vec<ClusterDecl>,
    pub services: Vec<ServiceDecl>,
    pub pods: Vec<PodDecl>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at line {line} column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown service `{0}`")]
    UnknownService(ServiceId),
    #[error("unknown pod `{0}`")]
    UnknownPod(PodId),
    #[error("unknown cluster `{0}`")]
    UnknownCluster(ClusterId),
    #[error("service `{0}` has no backing pods in this spec")]
    Unhosted(ServiceId),
    #[error("invalid deployment spec:\n{0}")]
    Invalid(ValidationReport),
}

/// Parse a deployment spec document.
///
/// Structural problems (unknown keys, missing fields, wrong types, a version
/// other than 1, or not exactly one master cluster) are schema errors.
/// Cross-reference problems are left to [`DeploymentSpec::validate`].
pub fn parse_spec(bytes: &[u8]) -> Result<DeploymentSpec, ParseError> {
    let spec: DeploymentSpec = serde_json::from_slice(bytes).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => ParseError::Schema(e.to_string()),
            Category::Syntax | Category::Eof | Category::Io => ParseError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })?;
    if spec.version != SCHEMA_VERSION {
        return Err(ParseError::Schema(format!(
            "version must equal {SCHEMA_VERSION}, got {}",
            spec.version
        )));
    }
    let masters = spec.clusters.iter().filter(|c| c.role == ClusterRole::Master).count();
    if masters != 1 {
        return Err(ParseError::Schema(format!(
            "exactly one cluster must have role master, found {masters}"
        )));
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnsupportedVersion,
    InvalidIdentifier,
    DuplicateCluster,
    DuplicateService,
    DuplicatePod,
    MasterCount,
    InvalidPort,
    EmptyBackingPods,
    UnknownBackingPod,
    UnknownCluster,
    UnknownService,
    ServiceSplitAcrossPartitions,
    PrivateToPrivateDependency,
}

impl ViolationKind {
    pub fn code(self) -> &'static str {
        match self {
            Self::UnsupportedVersion => "unsupported-version",
            Self::InvalidIdentifier => "invalid-identifier",
            Self::DuplicateCluster => "duplicate-cluster",
            Self::DuplicateService => "duplicate-service",
            Self::DuplicatePod => "duplicate-pod",
            Self::MasterCount => "master-count",
            Self::InvalidPort => "invalid-port",
            Self::EmptyBackingPods => "empty-backing-pods",
            Self::UnknownBackingPod => "unknown-backing-pod",
            Self::UnknownCluster => "unknown-cluster",
            Self::UnknownService => "unknown-service",
            Self::ServiceSplitAcrossPartitions => "service-split-across-partitions",
            Self::PrivateToPrivateDependency => "private-to-private-dependency",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One violated invariant. `subject` is the offending identifier; `detail`
/// names whatever else is involved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.subject)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Every violation found in a spec, sorted by identifier. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport(pub Vec<Violation>);

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn contains(&self, kind: ViolationKind, subject: &str) -> bool {
        self.0.iter().any(|v| v.kind == kind && v.subject == subject)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            dups.insert(n);
        }
    }
    dups
}

impl DeploymentSpec {
    /// A spec with a single master cluster and nothing else.
    pub fn empty(master: impl Into<ClusterId>) -> Self {
        DeploymentSpec {
            version: SCHEMA_VERSION,
            clusters: vec![ClusterDecl {
                id: master.into(),
                role: ClusterRole::Master,
            }],
            services: Vec::new(),
            pods: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        parse_spec(text.as_bytes())
    }

    /// Canonical JSON document for this spec.
    pub fn to_json(&self) -> String {
        crate::canonical::to_pretty(self)
    }

    pub fn cluster(&self, id: &str) -> Option<&ClusterDecl> {
        self.clusters.iter().find(|c| c.id == *id)
    }

    pub fn service(&self, id: &str) -> Option<&ServiceDecl> {
        self.services.iter().find(|s| s.id == *id)
    }

    pub fn pod(&self, id: &str) -> Option<&PodDecl> {
        self.pods.iter().find(|p| p.id == *id)
    }

    pub fn master(&self) -> Option<&ClusterId> {
        self.clusters
            .iter()
            .find(|c| c.role == ClusterRole::Master)
            .map(|c| &c.id)
    }

    /// The cluster holding `s`'s backing pods. On an invalid spec this is the
    /// cluster of the lexicographically first known backing pod.
    pub fn host_cluster(&self, s: &str) -> Result<ClusterId, ModelError> {
        let svc = self.service(s).ok_or_else(|| ModelError::UnknownService(s.into()))?;
        svc.backing_pods
            .iter()
            .find_map(|p| self.pod(p.as_str()).map(|p| p.cluster.clone()))
            .ok_or_else(|| ModelError::Unhosted(svc.id.clone()))
    }

    /// The pods that need `s`. Backing pods are not included unless they
    /// list `s` themselves.
    pub fn consumers(&self, s: &str) -> Result<BTreeSet<PodId>, ModelError> {
        if self.service(s).is_none() {
            return Err(ModelError::UnknownService(s.into()));
        }
        Ok(self
            .pods
            .iter()
            .filter(|p| p.needs.contains(s))
            .map(|p| p.id.clone())
            .collect())
    }

    /// Check every invariant of the spec and report all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let mut push = |kind, subject: &str, detail: String| {
            out.push(Violation {
                subject: subject.to_owned(),
                kind,
                detail,
            });
        };

        if self.version != SCHEMA_VERSION {
            push(
                ViolationKind::UnsupportedVersion,
                "version",
                format!("expected {SCHEMA_VERSION}, got {}", self.version),
            );
        }

        let names = self
            .clusters
            .iter()
            .map(|c| ("cluster", c.id.as_str()))
            .chain(self.services.iter().map(|s| ("service", s.id.as_str())))
            .chain(self.pods.iter().map(|p| ("pod", p.id.as_str())));
        for (what, name) in names {
            if !is_dns_label(name) {
                push(ViolationKind::InvalidIdentifier, name, what.to_owned());
            }
        }

        for d in duplicates(self.clusters.iter().map(|c| c.id.as_str())) {
            push(ViolationKind::DuplicateCluster, d, String::new());
        }
        for d in duplicates(self.services.iter().map(|s| s.id.as_str())) {
            push(ViolationKind::DuplicateService, d, String::new());
        }
        for d in duplicates(self.pods.iter().map(|p| p.id.as_str())) {
            push(ViolationKind::DuplicatePod, d, String::new());
        }

        let masters: Vec<&str> = self
            .clusters
            .iter()
            .filter(|c| c.role == ClusterRole::Master)
            .map(|c| c.id.as_str())
            .collect();
        if masters.len() != 1 {
            push(
                ViolationKind::MasterCount,
                "clusters",
                format!("expected exactly one master, found {}", masters.len()),
            );
        }

        let roles: BTreeMap<&str, ClusterRole> = self.clusters.iter().map(|c| (c.id.as_str(), c.role)).collect();
        let pod_cluster: BTreeMap<&str, &str> = self.pods.iter().map(|p| (p.id.as_str(), p.cluster.as_str())).collect();
        let service_names: BTreeSet<&str> = self.services.iter().map(|s| s.id.as_str()).collect();

        // Host of each service whose known backing pods agree on a cluster.
        let mut hosts: BTreeMap<&str, &str> = BTreeMap::new();
        for svc in &self.services {
            if svc.port == 0 {
                push(
                    ViolationKind::InvalidPort,
                    svc.id.as_str(),
                    "port must be 1-65535".into(),
                );
            }
            if svc.backing_pods.is_empty() {
                push(ViolationKind::EmptyBackingPods, svc.id.as_str(), String::new());
            }
            let mut clusters = BTreeSet::new();
            for pod in &svc.backing_pods {
                match pod_cluster.get(pod.as_str()) {
                    Some(c) => {
                        clusters.insert(*c);
                    }
                    None => push(ViolationKind::UnknownBackingPod, svc.id.as_str(), pod.to_string()),
                }
            }
            match clusters.len() {
                0 => {}
                1 => {
                    hosts.insert(svc.id.as_str(), clusters.into_iter().next().unwrap());
                }
                _ => push(
                    ViolationKind::ServiceSplitAcrossPartitions,
                    svc.id.as_str(),
                    format!(
                        "backing pods in {}",
                        clusters.into_iter().collect::<Vec<_>>().join(", ")
                    ),
                ),
            }
        }

        for pod in &self.pods {
            let role = roles.get(pod.cluster.as_str()).copied();
            if role.is_none() {
                push(ViolationKind::UnknownCluster, pod.id.as_str(), pod.cluster.to_string());
            }
            for need in &pod.needs {
                if !service_names.contains(need.as_str()) {
                    push(ViolationKind::UnknownService, pod.id.as_str(), need.to_string());
                    continue;
                }
                let Some(host) = hosts.get(need.as_str()) else { continue };
                let host_role = roles.get(host).copied();
                if role == Some(ClusterRole::Private)
                    && host_role == Some(ClusterRole::Private)
                    && *host != pod.cluster.as_str()
                {
                    push(
                        ViolationKind::PrivateToPrivateDependency,
                        pod.id.as_str(),
                        format!("{} on {} needs {} hosted on {}", pod.id, pod.cluster, need, host),
                    );
                }
            }
        }

        out.sort();
        ValidationReport(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceInfo {
    pub port: u16,
    pub host: ClusterId,
    pub backing: BTreeSet<PodId>,
    pub consumers: BTreeSet<PodId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodInfo {
    pub cluster: ClusterId,
    pub needs: BTreeSet<ServiceId>,
}

/// Indexed view of a valid spec. Construction fails unless
/// [`DeploymentSpec::validate`] returns an empty report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    version: u32,
    master: ClusterId,
    clusters: BTreeMap<ClusterId, ClusterRole>,
    services: BTreeMap<ServiceId, ServiceInfo>,
    pods: BTreeMap<PodId, PodInfo>,
}

impl Topology {
    pub fn new(spec: &DeploymentSpec) -> Result<Self, ModelError> {
        let report = spec.validate();
        if !report.is_empty() {
            return Err(ModelError::Invalid(report));
        }
        let master = spec.master().expect("validated spec has a master").clone();
        let clusters = spec.clusters.iter().map(|c| (c.id.clone(), c.role)).collect();
        let pods: BTreeMap<PodId, PodInfo> = spec
            .pods
            .iter()
            .map(|p| {
                (
                    p.id.clone(),
                    PodInfo {
                        cluster: p.cluster.clone(),
                        needs: p.needs.clone(),
                    },
                )
            })
            .collect();
        let services = spec
            .services
            .iter()
            .map(|s| {
                let first = s.backing_pods.iter().next().expect("validated service has pods");
                let info = ServiceInfo {
                    port: s.port,
                    host: pods[first].cluster.clone(),
                    backing: s.backing_pods.clone(),
                    consumers: pods
                        .iter()
                        .filter(|(_, p)| p.needs.contains(&s.id))
                        .map(|(id, _)| id.clone())
                        .collect(),
                };
                (s.id.clone(), info)
            })
            .collect();
        Ok(Topology {
            version: spec.version,
            master,
            clusters,
            services,
            pods,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn master(&self) -> &ClusterId {
        &self.master
    }

    pub fn is_master(&self, c: &ClusterId) -> bool {
        *c == self.master
    }

    pub fn clusters(&self) -> impl Iterator<Item = (&ClusterId, ClusterRole)> {
        self.clusters.iter().map(|(c, r)| (c, *r))
    }

    pub fn has_cluster(&self, c: &str) -> bool {
        self.clusters.contains_key(c)
    }

    /// Services in lexicographic order.
    pub fn services(&self) -> impl Iterator<Item = (&ServiceId, &ServiceInfo)> {
        self.services.iter()
    }

    /// Pods in lexicographic order.
    pub fn pods(&self) -> impl Iterator<Item = (&PodId, &PodInfo)> {
        self.pods.iter()
    }

    pub fn service(&self, s: &str) -> Result<&ServiceInfo, ModelError> {
        self.services.get(s).ok_or_else(|| ModelError::UnknownService(s.into()))
    }

    pub fn pod(&self, p: &str) -> Result<&PodInfo, ModelError> {
        self.pods.get(p).ok_or_else(|| ModelError::UnknownPod(p.into()))
    }

    pub fn host_cluster(&self, s: &str) -> Result<&ClusterId, ModelError> {
        self.service(s).map(|i| &i.host)
    }

    pub fn consumers(&self, s: &str) -> Result<&BTreeSet<PodId>, ModelError> {
        self.service(s).map(|i| &i.consumers)
    }

    /// Whether some consumer of `s` lives outside `s`'s host cluster.
    pub fn consumed_externally(&self, s: &str) -> Result<bool, ModelError> {
        let info = self.service(s)?;
        Ok(info.consumers.iter().any(|p| self.pods[p].cluster != info.host))
    }

    /// Whether some pod in cluster `c` needs `s`.
    pub fn consumed_in(&self, s: &str, c: &ClusterId) -> Result<bool, ModelError> {
        let info = self.service(s)?;
        Ok(info.consumers.iter().any(|p| self.pods[p].cluster == *c))
    }
}
