#![allow(dead_code)]

pub mod history;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use hybridplane::model::{ClusterDecl, ClusterRole, DeploymentSpec, PodDecl, ServiceDecl};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> DeploymentSpec {
    let bytes = std::fs::read(fixture(name)).unwrap();
    hybridplane::parse_spec(&bytes).unwrap()
}

const WORDS: &[&str] = &[
    "api", "db", "queue", "cache", "auth", "log", "web", "etl", "kv", "ml", "zk", "blob",
];

fn name(rng: &mut StdRng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = format!("{}-{}", WORDS.choose(rng).unwrap(), rng.random_range(0..100));
        if taken.insert(n.clone()) {
            return n;
        }
    }
}

/// A random valid spec with at most 4 clusters, 20 pods and 10 services.
/// Names are drawn at random so emission order differs from name order.
pub fn random_valid_spec(seed: u64) -> DeploymentSpec {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_clusters = rng.random_range(1..=4);
    let n_pods = rng.random_range(0..=20);
    let mut n_services = rng.random_range(0..=10);
    if n_pods == 0 {
        n_services = 0;
    }

    let mut clusters = vec![ClusterDecl {
        id: "hub".into(),
        role: ClusterRole::Master,
    }];
    for i in 1..n_clusters {
        clusters.push(ClusterDecl {
            id: format!("site-{i}").into(),
            role: ClusterRole::Private,
        });
    }
    clusters.shuffle(&mut rng);

    let mut taken = BTreeSet::new();
    let mut pods: Vec<PodDecl> = (0..n_pods)
        .map(|_| PodDecl {
            id: name(&mut rng, &mut taken).into(),
            cluster: clusters.choose(&mut rng).unwrap().id.clone(),
            needs: BTreeSet::new(),
        })
        .collect();

    let mut taken = BTreeSet::new();
    let mut services = Vec::new();
    for _ in 0..n_services {
        let anchor = pods.choose(&mut rng).unwrap();
        let host = anchor.cluster.clone();
        let mut backing: BTreeSet<_> = [anchor.id.clone()].into();
        for p in pods.iter().filter(|p| p.cluster == host) {
            if rng.random_bool(0.3) {
                backing.insert(p.id.clone());
            }
        }
        services.push(ServiceDecl {
            id: name(&mut rng, &mut taken).into(),
            port: rng.random_range(1..=65535),
            backing_pods: backing,
        });
    }

    let role: BTreeMap<_, _> = clusters.iter().map(|c| (c.id.clone(), c.role)).collect();
    let density = rng.random_range(0.1..0.7);
    // Dependency edges: anything except private → other private.
    let cluster_of: BTreeMap<_, _> = pods.iter().map(|p| (p.id.clone(), p.cluster.clone())).collect();
    for pod in &mut pods {
        for svc in &services {
            let host = &cluster_of[svc.backing_pods.iter().next().unwrap()];
            let p2p = role[&pod.cluster] == ClusterRole::Private
                && role[host] == ClusterRole::Private
                && *host != pod.cluster;
            if !p2p && rng.random_bool(density) {
                pod.needs.insert(svc.id.clone());
            }
        }
    }
    services.shuffle(&mut rng);
    DeploymentSpec {
        version: 1,
        clusters,
        services,
        pods,
    }
}

/// A random spec that is usually invalid: a valid one with up to three
/// random defects applied. Sometimes no defect is applied.
pub fn random_spec(seed: u64) -> DeploymentSpec {
    let mut spec = random_valid_spec(seed);
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..rng.random_range(0..=3) {
        mutate(&mut spec, &mut rng);
    }
    spec
}

fn mutate(spec: &mut DeploymentSpec, rng: &mut StdRng) {
    const BAD_NAMES: &[&str] = &["Bad", "-lead", "trail-", "", "under_score", "dot.ted"];
    let long = "a".repeat(64);
    let bad = |rng: &mut StdRng| -> String {
        if rng.random_bool(0.2) {
            long.clone()
        } else {
            BAD_NAMES.choose(rng).unwrap().to_string()
        }
    };
    let np = spec.pods.len();
    let ns = spec.services.len();
    let nc = spec.clusters.len();
    match rng.random_range(0..12) {
        0 => spec.version = rng.random_range(2..5),
        1 => {
            let i = rng.random_range(0..nc);
            spec.clusters[i].id = bad(rng).into();
        }
        2 if np > 0 => {
            let i = rng.random_range(0..np);
            spec.pods[i].id = bad(rng).into();
        }
        3 if ns > 0 => {
            let i = rng.random_range(0..ns);
            spec.services[i].id = bad(rng).into();
        }
        4 => {
            let c = spec.clusters.choose(rng).unwrap().clone();
            spec.clusters.push(c);
        }
        5 if ns > 0 => {
            let s = spec.services.choose(rng).unwrap().clone();
            spec.services.push(s);
        }
        6 if np > 0 => {
            let mut p = spec.pods.choose(rng).unwrap().clone();
            p.needs.clear();
            spec.pods.push(p);
        }
        7 => {
            let i = rng.random_range(0..nc);
            spec.clusters[i].role = match spec.clusters[i].role {
                ClusterRole::Master => ClusterRole::Private,
                ClusterRole::Private => ClusterRole::Master,
            };
        }
        8 if ns > 0 => {
            let i = rng.random_range(0..ns);
            if rng.random_bool(0.5) {
                spec.services[i].port = 0;
            } else {
                spec.services[i].backing_pods.clear();
            }
        }
        9 if ns > 0 => {
            let i = rng.random_range(0..ns);
            spec.services[i].backing_pods.insert("ghost-pod".into());
        }
        10 if np > 0 => {
            let i = rng.random_range(0..np);
            if rng.random_bool(0.5) {
                spec.pods[i].cluster = "nowhere".into();
            } else {
                spec.pods[i].needs.insert("ghost-svc".into());
            }
        }
        // Move a pod to another cluster: may split a service or create a
        // private-to-private edge.
        _ if np > 0 => {
            let i = rng.random_range(0..np);
            spec.pods[i].cluster = spec.clusters.choose(rng).unwrap().id.clone();
        }
        _ => spec.version = 0,
    }
}

fn label_ok(s: &str) -> bool {
    let b = s.as_bytes();
    let inner = |c: &u8| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == b'-';
    !b.is_empty() && b.len() <= 63 && b.iter().all(inner) && b[0] != b'-' && b[b.len() - 1] != b'-'
}

fn all_distinct<'a>(names: impl Iterator<Item = &'a str>) -> bool {
    let mut v: Vec<&str> = names.collect();
    let n = v.len();
    v.sort_unstable();
    v.dedup();
    v.len() == n
}

/// Re-derives every spec invariant from the raw fields.
pub fn independently_valid(spec: &DeploymentSpec) -> bool {
    if spec.version != 1 {
        return false;
    }
    let cluster_names = spec.clusters.iter().map(|c| c.id.as_str());
    let service_names = spec.services.iter().map(|s| s.id.as_str());
    let pod_names = spec.pods.iter().map(|p| p.id.as_str());
    if !cluster_names
        .clone()
        .chain(service_names.clone())
        .chain(pod_names.clone())
        .all(label_ok)
    {
        return false;
    }
    if !all_distinct(cluster_names) || !all_distinct(service_names) || !all_distinct(pod_names) {
        return false;
    }
    if spec.clusters.iter().filter(|c| c.role == ClusterRole::Master).count() != 1 {
        return false;
    }
    let role_of = |c: &str| spec.clusters.iter().find(|d| d.id.as_str() == c).map(|d| d.role);
    let cluster_of = |p: &str| {
        spec.pods
            .iter()
            .find(|d| d.id.as_str() == p)
            .map(|d| d.cluster.as_str())
    };
    let mut host = BTreeMap::new();
    for s in &spec.services {
        if s.port == 0 || s.backing_pods.is_empty() {
            return false;
        }
        let mut where_: Option<&str> = None;
        for b in &s.backing_pods {
            let Some(c) = cluster_of(b.as_str()) else { return false };
            if where_.is_some_and(|w| w != c) {
                return false;
            }
            where_ = Some(c);
        }
        host.insert(s.id.as_str(), where_.unwrap());
    }
    for p in &spec.pods {
        let Some(mine) = role_of(p.cluster.as_str()) else {
            return false;
        };
        for s in &p.needs {
            let Some(h) = host.get(s.as_str()) else { return false };
            // A backing pod may sit in a cluster that does not exist; that
            // pod is reported on its own, so treat the host as unknown.
            let theirs = role_of(h);
            if mine == ClusterRole::Private && theirs == Some(ClusterRole::Private) && *h != p.cluster.as_str() {
                return false;
            }
        }
    }
    true
}

/// Expected verdict for every (pod, service) pair, keyed by names, with the
/// named tunnels (`<mode>:<private>:<service>`) down. Derived from the raw
/// spec only.
pub fn expected_matrix(spec: &DeploymentSpec, down: &BTreeSet<String>) -> BTreeMap<(String, String), &'static str> {
    let master = spec
        .clusters
        .iter()
        .find(|c| c.role == ClusterRole::Master)
        .unwrap()
        .id
        .as_str();
    let cluster_of: BTreeMap<&str, &str> = spec.pods.iter().map(|p| (p.id.as_str(), p.cluster.as_str())).collect();
    let mut out = BTreeMap::new();
    for p in &spec.pods {
        for s in &spec.services {
            let host = cluster_of[s.backing_pods.first().unwrap().as_str()];
            let here = p.cluster.as_str();
            let v = if !p.needs.contains(&s.id) {
                "denied_acl"
            } else if host == here {
                "delivered"
            } else if host == master {
                if down.contains(&format!("local_fwd:{here}:{}", s.id)) {
                    "tunnel_down"
                } else {
                    "delivered"
                }
            } else if here == master {
                if down.contains(&format!("remote_fwd:{host}:{}", s.id)) {
                    "tunnel_down"
                } else {
                    "delivered"
                }
            } else {
                "no_route"
            };
            out.insert((p.id.to_string(), s.id.to_string()), v);
        }
    }
    out
}

/// The same shape as [`expected_matrix`], read off a computed matrix.
pub fn matrix_by_name(m: &hybridplane::ReachabilityMatrix) -> BTreeMap<(String, String), &'static str> {
    m.iter()
        .map(|(p, s, v)| ((p.to_string(), s.to_string()), v.as_str()))
        .collect()
}

/// The corpus of seeds used for the random-spec criteria.
pub fn corpus(n: u64) -> impl Iterator<Item = (u64, DeploymentSpec)> {
    (0..n).map(|i| {
        let seed = 0x5eed_0000 + i;
        (seed, random_valid_spec(seed))
    })
}
