use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use super::{SimError, SimWorld, Verdict};
use crate::control::{ChannelKey, ChannelMode};
use crate::model::{ClusterRole, DeploymentSpec, ModelError, PodId, ServiceId};

/// A verdict for every (pod, service) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReachabilityMatrix {
    entries: BTreeMap<(PodId, ServiceId), Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixMismatch {
    pub pod: PodId,
    pub service: ServiceId,
    pub left: Option<Verdict>,
    pub right: Option<Verdict>,
}

impl fmt::Display for MatrixMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<Verdict>| v.map_or("missing", Verdict::as_str);
        write!(
            f,
            "{}/{}: {} != {}",
            self.pod,
            self.service,
            show(self.left),
            show(self.right)
        )
    }
}

impl ReachabilityMatrix {
    pub fn insert(&mut self, pod: PodId, service: ServiceId, verdict: Verdict) {
        self.entries.insert((pod, service), verdict);
    }

    pub fn get(&self, pod: &str, service: &str) -> Option<Verdict> {
        self.entries.get(&(PodId::from(pod), ServiceId::from(service))).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PodId, &ServiceId, Verdict)> {
        self.entries.iter().map(|((p, s), v)| (p, s, *v))
    }

    /// Pairs whose verdicts differ, including pairs present on one side only.
    pub fn diff(&self, other: &ReachabilityMatrix) -> Vec<MatrixMismatch> {
        let keys: BTreeSet<_> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .filter_map(|k| {
                let (left, right) = (self.entries.get(k).copied(), other.entries.get(k).copied());
                (left != right).then(|| MatrixMismatch {
                    pod: k.0.clone(),
                    service: k.1.clone(),
                    left,
                    right,
                })
            })
            .collect()
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_pretty(self)
    }
}

impl Serialize for ReachabilityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for ((p, svc), v) in &self.entries {
            map.serialize_entry(&format!("{p}/{svc}"), v)?;
        }
        map.end()
    }
}

/// Resolve every (pod, service) pair in the world.
pub fn reachability_matrix(world: &SimWorld) -> ReachabilityMatrix {
    let topo = world.topology();
    let mut m = ReachabilityMatrix::default();
    for (p, _) in topo.pods() {
        for (s, _) in topo.services() {
            let trace = world
                .resolve_connection(p, s)
                .expect("pods and services come from the world");
            m.insert(p.clone(), s.clone(), trace.verdict);
        }
    }
    m
}

/// Expected verdicts computed from the spec alone, with every tunnel up.
pub fn oracle_matrix(spec: &DeploymentSpec) -> Result<ReachabilityMatrix, SimError> {
    oracle_matrix_with_down(spec, &BTreeSet::new())
}

/// Expected verdicts computed from the spec alone, with the listed tunnels
/// down.
///
/// A pod reaches a service iff it declares the dependency and either both
/// sit in one cluster or one of the two clusters is the master; the tunnel
/// for a cross-cluster pair is named after the private end.
pub fn oracle_matrix_with_down(
    spec: &DeploymentSpec,
    down: &BTreeSet<ChannelKey>,
) -> Result<ReachabilityMatrix, SimError> {
    let report = spec.validate();
    if !report.is_empty() {
        return Err(ModelError::Invalid(report).into());
    }
    let master = spec
        .clusters
        .iter()
        .find(|c| c.role == ClusterRole::Master)
        .map(|c| &c.id)
        .expect("valid spec has a master");
    let cluster_of: BTreeMap<&PodId, &_> = spec.pods.iter().map(|p| (&p.id, &p.cluster)).collect();

    let mut m = ReachabilityMatrix::default();
    for pod in &spec.pods {
        let here = &pod.cluster;
        for svc in &spec.services {
            let host = cluster_of[svc.backing_pods.iter().next().expect("valid service has pods")];
            let verdict = if !pod.needs.contains(&svc.id) {
                Verdict::DeniedAcl
            } else if host == here {
                Verdict::Delivered
            } else if host == master || here == master {
                let key = if host == master {
                    ChannelKey::new(ChannelMode::LocalFwd, here, &svc.id)
                } else {
                    ChannelKey::new(ChannelMode::RemoteFwd, host, &svc.id)
                };
                if down.contains(&key) {
                    Verdict::TunnelDown
                } else {
                    Verdict::Delivered
                }
            } else {
                Verdict::NoRoute
            };
            m.insert(pod.id.clone(), svc.id.clone(), verdict);
        }
    }
    Ok(m)
}
