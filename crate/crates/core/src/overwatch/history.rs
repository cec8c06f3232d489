//! Linearizability auditor for recorded overwatch histories.
//!
//! A history is a set of completed calls, each with the logical time it was
//! invoked and the time its response came back. The history is linearizable
//! if the calls can be put in one sequential order that respects real-time
//! precedence and in which a sequential model of the service produces every
//! recorded response. The search is the usual depth-first one, memoizing
//! (linearized set, model state) pairs already shown to be dead ends.

use std::collections::{BTreeMap, HashSet};

use crate::model::ClusterId;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operation {
    Register {
        cluster: ClusterId,
    },
    /// `valid` says whether the published spec passes validation.
    Publish {
        valid: bool,
    },
    Poll {
        cluster: ClusterId,
        have: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Outcome {
    Registered {
        registered_at: u64,
        last_acked_version: u64,
    },
    Published {
        version: u64,
    },
    Rejected,
    Polled {
        version: Option<u64>,
    },
    Unregistered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub client: usize,
    pub invoked: u64,
    pub returned: u64,
    pub op: Operation,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct Model {
    version: u64,
    next_seq: u64,
    /// cluster → (registered_at, last_acked_version)
    agents: BTreeMap<ClusterId, (u64, u64)>,
}

impl Model {
    fn apply(&self, op: &Operation) -> (Model, Outcome) {
        let mut next = self.clone();
        let outcome = match op {
            Operation::Register { cluster } => {
                if !next.agents.contains_key(cluster) {
                    next.next_seq += 1;
                    next.agents.insert(cluster.clone(), (next.next_seq, 0));
                }
                let (at, acked) = next.agents[cluster];
                Outcome::Registered {
                    registered_at: at,
                    last_acked_version: acked,
                }
            }
            Operation::Publish { valid: false } => Outcome::Rejected,
            Operation::Publish { valid: true } => {
                next.version += 1;
                Outcome::Published { version: next.version }
            }
            Operation::Poll { cluster, have } => match next.agents.get_mut(cluster) {
                None => Outcome::Unregistered,
                Some((_, acked)) => {
                    if next.version > *have {
                        *acked = (*acked).max(next.version);
                        Outcome::Polled {
                            version: Some(next.version),
                        }
                    } else {
                        Outcome::Polled { version: None }
                    }
                }
            },
        };
        (next, outcome)
    }
}

struct Search<'a> {
    events: &'a [Event],
    done: Vec<bool>,
    order: Vec<usize>,
    dead: HashSet<(Vec<bool>, Model)>,
}

impl Search<'_> {
    fn run(&mut self, state: Model) -> bool {
        if self.order.len() == self.events.len() {
            return true;
        }
        if self.dead.contains(&(self.done.clone(), state.clone())) {
            return false;
        }
        // Only calls invoked before every pending call's response may go next.
        let horizon = self
            .events
            .iter()
            .zip(&self.done)
            .filter(|(_, d)| !**d)
            .map(|(e, _)| e.returned)
            .min()
            .unwrap_or(u64::MAX);
        for i in 0..self.events.len() {
            if self.done[i] || self.events[i].invoked > horizon {
                continue;
            }
            let (next, outcome) = state.apply(&self.events[i].op);
            if outcome != self.events[i].outcome {
                continue;
            }
            self.done[i] = true;
            self.order.push(i);
            if self.run(next) {
                return true;
            }
            self.order.pop();
            self.done[i] = false;
        }
        self.dead.insert((self.done.clone(), state));
        false
    }
}

/// Find a legal sequential order for `events`, returned as indices into
/// `events`, or `None` if there is none.
pub fn linearize(events: &[Event]) -> Option<Vec<usize>> {
    let mut search = Search {
        events,
        done: vec![false; events.len()],
        order: Vec::new(),
        dead: HashSet::new(),
    };
    search.run(Model::default()).then_some(search.order)
}
