use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use hybridplane::model::ClusterId;
use hybridplane::overwatch::client::{ClientError, OverwatchClient};
use hybridplane::overwatch::history::{Event, Operation, Outcome};
use hybridplane::DeploymentSpec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const CLUSTERS: &[&str] = &["master", "priv-1", "priv-2"];

/// Run `clients` threads against the server at `addr`, each issuing `ops`
/// random register/publish/poll calls, and record every call with logical
/// invocation and return times.
pub fn record(addr: SocketAddr, clients: usize, ops: usize, seed: u64) -> Vec<Event> {
    let clock = AtomicU64::new(0);
    let invalid = super::load_fixture("split-service.json");
    let mut events: Vec<Event> = thread::scope(|scope| {
        let handles: Vec<_> = (0..clients)
            .map(|id| {
                let clock = &clock;
                let invalid = &invalid;
                scope.spawn(move || {
                    let mut rng = StdRng::seed_from_u64(seed.wrapping_add(id as u64));
                    let mut conn = OverwatchClient::connect(addr).unwrap();
                    let mut have = 0u64;
                    let mut out = Vec::with_capacity(ops);
                    for _ in 0..ops {
                        let cluster: ClusterId = CLUSTERS[rng.random_range(0..CLUSTERS.len())].into();
                        let (op, spec): (Operation, Option<DeploymentSpec>) = match rng.random_range(0..10) {
                            0..=2 => (
                                Operation::Register {
                                    cluster: cluster.clone(),
                                },
                                None,
                            ),
                            3..=4 => {
                                let valid = rng.random_bool(0.8);
                                let spec = if valid {
                                    super::random_valid_spec(rng.random())
                                } else {
                                    invalid.clone()
                                };
                                (Operation::Publish { valid }, Some(spec))
                            }
                            _ => (
                                Operation::Poll {
                                    cluster: cluster.clone(),
                                    have,
                                },
                                None,
                            ),
                        };
                        let invoked = clock.fetch_add(1, Ordering::SeqCst);
                        let outcome = match &op {
                            Operation::Register { cluster } => {
                                let r = conn.register(cluster).unwrap();
                                assert_eq!(r.cluster, *cluster);
                                Outcome::Registered {
                                    registered_at: r.registered_at,
                                    last_acked_version: r.last_acked_version,
                                }
                            }
                            Operation::Publish { .. } => match conn.publish(spec.as_ref().unwrap()) {
                                Ok(p) => Outcome::Published { version: p.version },
                                Err(ClientError::Remote(_)) => Outcome::Rejected,
                                Err(e) => panic!("publish: {e}"),
                            },
                            Operation::Poll { cluster, have: h } => match conn.poll(cluster, *h) {
                                Ok(u) => {
                                    if let Some(u) = &u {
                                        assert_eq!(u.checksum, hybridplane::overwatch::checksum(&u.spec));
                                        have = u.version;
                                    }
                                    Outcome::Polled {
                                        version: u.map(|u| u.version),
                                    }
                                }
                                Err(ClientError::Remote(m)) if m.contains("not registered") => Outcome::Unregistered,
                                Err(e) => panic!("poll: {e}"),
                            },
                        };
                        let returned = clock.fetch_add(1, Ordering::SeqCst);
                        out.push(Event {
                            client: id,
                            invoked,
                            returned,
                            op,
                            outcome,
                        });
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    events.sort_by_key(|e| e.invoked);
    events
}
