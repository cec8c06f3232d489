//! Deterministic address and port allocation.
//!
//! Allocation is sequential in service-name order, so the value handed to a
//! service equals its rank in the sorted list of services the allocator is
//! used for. Any agent can therefore replay another agent's allocator from
//! the spec alone.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use super::config::VirtualIp;
use super::ControlError;
use crate::model::{ServiceId, Topology};

/// First gateway port handed out.
pub const PORT_BASE: u16 = 15000;
/// Number of ports available per gateway.
pub const PORT_WINDOW: u16 = 10000;

/// Dummy aliases come from 198.18.0.0/15.
pub const ALIAS_NETWORK: Ipv4Addr = Ipv4Addr::new(198, 18, 0, 0);
const ALIAS_BLOCKS: u32 = 512;

/// Native service addresses come from 10.96.0.0/16.
pub const NATIVE_NETWORK: Ipv4Addr = Ipv4Addr::new(10, 96, 0, 0);
const NATIVE_BLOCKS: u32 = 256;

/// Usable hosts per /24: `.1` through `.254`.
const HOSTS_PER_BLOCK: u32 = 254;

/// Number of aliases the alias range can hold.
pub const ALIAS_CAPACITY: u32 = ALIAS_BLOCKS * HOSTS_PER_BLOCK;

fn nth_host(network: Ipv4Addr, blocks: u32, n: u32) -> Option<Ipv4Addr> {
    let block = n / HOSTS_PER_BLOCK;
    if block >= blocks {
        return None;
    }
    let offset = block * 256 + n % HOSTS_PER_BLOCK + 1;
    Some(Ipv4Addr::from(u32::from(network) + offset))
}

pub(crate) fn in_alias_range(addr: Ipv4Addr) -> bool {
    let base = u32::from(ALIAS_NETWORK);
    let a = u32::from(addr);
    let last = addr.octets()[3];
    a >= base && a < base + ALIAS_BLOCKS * 256 && last != 0 && last != 255
}

#[derive(Debug, Clone)]
pub struct PortAllocator {
    gateway: String,
    next: u16,
}

impl PortAllocator {
    pub fn new(gateway: impl Into<String>) -> Self {
        PortAllocator {
            gateway: gateway.into(),
            next: 0,
        }
    }

    pub fn allot(&mut self) -> Result<u16, ControlError> {
        if self.next >= PORT_WINDOW {
            return Err(ControlError::PortWindowExhausted {
                gateway: self.gateway.clone(),
            });
        }
        let port = PORT_BASE + self.next;
        self.next += 1;
        Ok(port)
    }

    /// Ports handed out so far.
    pub fn used(&self) -> u16 {
        self.next
    }
}

#[derive(Debug, Clone, Default)]
pub struct AliasAllocator {
    next: u32,
}

impl AliasAllocator {
    pub fn allot(&mut self) -> Result<VirtualIp, ControlError> {
        let addr = nth_host(ALIAS_NETWORK, ALIAS_BLOCKS, self.next).ok_or(ControlError::AliasRangeExhausted)?;
        self.next += 1;
        Ok(VirtualIp::new_unchecked(addr))
    }
}

/// Native service addresses, by rank over every service in the spec.
pub fn native_addresses(topo: &Topology) -> Result<BTreeMap<ServiceId, Ipv4Addr>, ControlError> {
    topo.services()
        .enumerate()
        .map(|(rank, (s, _))| {
            nth_host(NATIVE_NETWORK, NATIVE_BLOCKS, rank as u32)
                .map(|a| (s.clone(), a))
                .ok_or(ControlError::NativeRangeExhausted)
        })
        .collect()
}
