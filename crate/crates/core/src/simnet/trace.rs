use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SimError, SimWorld, TunnelState};
use crate::control::{AclSource, Endpoint, ForwardTarget};
use crate::model::{ClusterId, PodId, ServiceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopKind {
    DnsResolve,
    /// Pod sends straight to a native service address.
    PodEgress,
    ForwardRule,
    AclCheck,
    ChannelTransit,
    IngressForward,
    Deliver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub kind: HopKind,
    pub location: ClusterId,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Delivered,
    DeniedAcl,
    NoRoute,
    TunnelDown,
    UnresolvedName,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Delivered => "delivered",
            Verdict::DeniedAcl => "denied_acl",
            Verdict::NoRoute => "no_route",
            Verdict::TunnelDown => "tunnel_down",
            Verdict::UnresolvedName => "unresolved_name",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every hop one attempted connection took, and how it ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionTrace {
    pub src: PodId,
    pub dst: ServiceId,
    pub verdict: Verdict,
    pub hops: Vec<Hop>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered_to: Option<PodId>,
}

impl ConnectionTrace {
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_pretty(self)
    }

    pub fn kinds(&self) -> Vec<HopKind> {
        self.hops.iter().map(|h| h.kind).collect()
    }
}

struct Tracer {
    src: PodId,
    dst: ServiceId,
    hops: Vec<Hop>,
}

impl Tracer {
    fn hop(&mut self, kind: HopKind, location: &ClusterId, detail: String) {
        self.hops.push(Hop {
            kind,
            location: location.clone(),
            detail,
        });
    }

    fn end(self, verdict: Verdict) -> ConnectionTrace {
        ConnectionTrace {
            src: self.src,
            dst: self.dst,
            verdict,
            hops: self.hops,
            delivered_to: None,
        }
    }

    /// Hand the connection to a backing pod of the native service at `ep`.
    fn deliver(mut self, world: &SimWorld, cluster: &ClusterId, ep: &Endpoint) -> ConnectionTrace {
        let Some(service) = world.native_service_at(cluster, ep) else {
            return self.end(Verdict::NoRoute);
        };
        if *service != self.dst {
            return self.end(Verdict::NoRoute);
        }
        let pod = world
            .topology()
            .service(service.as_str())
            .ok()
            .and_then(|info| info.backing.iter().next().cloned())
            .expect("valid service has a backing pod");
        self.hop(HopKind::Deliver, cluster, format!("pod:{pod}"));
        let mut trace = self.end(Verdict::Delivered);
        trace.delivered_to = Some(pod);
        trace
    }
}

pub(super) fn resolve(world: &SimWorld, src: &PodId, dst: &ServiceId) -> Result<ConnectionTrace, SimError> {
    let topo = world.topology();
    let pod = topo.pod(src.as_str())?;
    let info = topo.service(dst.as_str())?;
    let here = &pod.cluster;
    let cfg = world.config(here).expect("world has a config per cluster");
    let mut t = Tracer {
        src: src.clone(),
        dst: dst.clone(),
        hops: Vec::new(),
    };

    let addr = if info.host == *here {
        world.native_address(dst)
    } else {
        match cfg.dns.get(dst) {
            Some(vip) => vip.address(),
            None => {
                t.hop(HopKind::DnsResolve, here, format!("{dst} -> no entry"));
                return Ok(t.end(Verdict::UnresolvedName));
            }
        }
    };
    t.hop(HopKind::DnsResolve, here, format!("{dst} -> {addr}"));

    let resolved = Endpoint::vip(addr, info.port);
    let first_rule = cfg.forward_for(&resolved);
    let first_hop = match first_rule.map(|r| &r.target) {
        Some(ForwardTarget::Endpoint(e)) => e.clone(),
        _ => resolved.clone(),
    };

    let src_acl = AclSource::Pod(src.clone());
    if !cfg.allows(&src_acl, &first_hop) {
        t.hop(HopKind::AclCheck, here, format!("{src_acl} -> {first_hop} denied"));
        return Ok(t.end(Verdict::DeniedAcl));
    }
    t.hop(HopKind::AclCheck, here, format!("{src_acl} -> {first_hop} allowed"));

    let Some(rule) = first_rule else {
        // No rule: the pod talks to a native service directly.
        if world.native_service_at(here, &resolved).is_none() {
            return Ok(t.end(Verdict::NoRoute));
        }
        t.hop(HopKind::PodEgress, here, format!("{src_acl} -> {resolved}"));
        return Ok(t.deliver(world, here, &resolved));
    };

    let key = match &rule.target {
        ForwardTarget::Channel(key) => key.clone(),
        ForwardTarget::Endpoint(gateway) => {
            t.hop(HopKind::ForwardRule, here, rule.to_string());
            match cfg.forward_for(gateway).map(|r| &r.target) {
                Some(ForwardTarget::Channel(key)) => key.clone(),
                _ => return Ok(t.end(Verdict::NoRoute)),
            }
        }
    };

    let Some(channel) = world.channel(&key) else {
        return Ok(t.end(Verdict::NoRoute));
    };
    if world.tunnel_state(&key) == Some(TunnelState::Down) {
        t.hop(HopKind::ChannelTransit, here, format!("{key} down"));
        return Ok(t.end(Verdict::TunnelDown));
    }
    t.hop(
        HopKind::ChannelTransit,
        here,
        format!("{key} {} -> {}", channel.listen, channel.target),
    );

    let Some(far) = channel.target.host.gateway_cluster() else {
        return Ok(t.end(Verdict::NoRoute));
    };
    let far_cfg = world.config(far).expect("world has a config per cluster");
    let service_ep = match far_cfg.forward_for(&channel.target) {
        Some(r) => match &r.target {
            ForwardTarget::Endpoint(e) => {
                t.hop(HopKind::IngressForward, far, r.to_string());
                e.clone()
            }
            ForwardTarget::Channel(_) => return Ok(t.end(Verdict::NoRoute)),
        },
        None => return Ok(t.end(Verdict::NoRoute)),
    };

    let igw = AclSource::IngressGateway(far.clone());
    if !far_cfg.allows(&igw, &service_ep) {
        t.hop(HopKind::AclCheck, far, format!("{igw} -> {service_ep} denied"));
        return Ok(t.end(Verdict::DeniedAcl));
    }
    t.hop(HopKind::AclCheck, far, format!("{igw} -> {service_ep} allowed"));
    Ok(t.deliver(world, far, &service_ep))
}
