//! Public resolution: Tier-0, then a Tier-1 registry, then the Tier-2
//! registrar, then NAPTR selection and rewrite.
//!
//! Each hop goes over the simulated network and gets one retry. Only
//! public records are visible here.

use std::collections::BTreeMap;
use std::fmt;

use crate::e164::{country_code_of, parse_number, EnumDomain, E164Number};
use crate::ids::RegistryId;
use crate::naptr::{resolve_record_set, NaptrRecordSet, Requester, Resolution, ServiceSelector};
use crate::registrar::{decode_records, ANONYMOUS};
use crate::sim::TIER0;
use crate::topology::{Topology, TopologyError};
use crate::wire::{ErrorCode, Frame, FrameKind};

/// Actor id used for resolver traffic.
pub const RESOLVER: &str = "resolver";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Tier0,
    Tier1,
    Tier2,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Tier0 => "tier0",
            Tier::Tier1 => "tier1",
            Tier::Tier2 => "tier2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub tier: Tier,
    pub to: String,
    /// `None` when the target never answered.
    pub exchange: Option<u64>,
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub hops: Vec<Hop>,
}

impl Trace {
    pub fn exchange_ids(&self) -> Vec<u64> {
        self.hops.iter().filter_map(|h| h.exchange).collect()
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, h) in self.hops.iter().enumerate() {
            let xid = h.exchange.map_or("-".to_string(), |x| x.to_string());
            writeln!(f, "{} {} {} xid={} {}", i + 1, h.tier, h.to, xid, h.status)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveOutcome {
    pub number: E164Number,
    pub domain: EnumDomain,
    pub registry: RegistryId,
    pub registrar: String,
    pub resolution: Resolution,
    pub trace: Trace,
}

impl ResolveOutcome {
    pub fn uris(&self) -> &[String] {
        &self.resolution.uris
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveError {
    pub code: ErrorCode,
    pub detail: String,
    pub trace: Trace,
}

impl fmt::Display for ResolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

impl std::error::Error for ResolveError {}

/// Which Tier-1 registries to ask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    /// Whatever Tier-0 lists, in order.
    Discover,
    /// Only this registry, skipping Tier-0.
    Via(RegistryId),
}

/// Resolves `raw` for `sel` and logs the outcome as a `resolve` event.
pub fn resolve(topo: &mut Topology, raw: &str, sel: &ServiceSelector) -> Result<ResolveOutcome, ResolveError> {
    resolve_with(topo, raw, sel, &Route::Discover)
}

pub fn resolve_with(
    topo: &mut Topology,
    raw: &str,
    sel: &ServiceSelector,
    route: &Route,
) -> Result<ResolveOutcome, ResolveError> {
    topo.begin_step();
    let mut trace = Trace::default();
    let result = run(topo, raw, sel, route, &mut trace);
    let digits = parse_number(raw, None).map(|n| n.full_digits().to_string()).unwrap_or_else(|_| raw.to_string());
    let mut fields = vec![
        ("event".to_string(), "resolve".to_string()),
        ("number".into(), digits),
        ("service".into(), sel.to_string()),
        ("hops".into(), trace.exchange_ids().iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
    ];
    if let Route::Via(r) = route {
        fields.push(("via".into(), r.to_string()));
    }
    match &result {
        Ok(out) => {
            fields.push(("uris".into(), out.resolution.uris.join(" ")));
            fields.push(("status".into(), "ok".into()));
        }
        Err(e) => {
            fields.push(("status".into(), "err".into()));
            fields.push(("code".into(), e.code.to_string()));
            fields.push(("detail".into(), e.detail.clone()));
        }
    }
    let step = topo.step();
    topo.log.push(step, "event", fields);
    result.map_err(|e| ResolveError { code: e.code, detail: e.detail, trace })
}

fn run(
    topo: &mut Topology,
    raw: &str,
    sel: &ServiceSelector,
    route: &Route,
    trace: &mut Trace,
) -> Result<ResolveOutcome, TopologyError> {
    let number = parse_number(raw, None).map_err(|e| TopologyError::new(ErrorCode::InvalidNumber, e))?;
    let domain = number.to_domain(&topo.config().apex().map_err(|e| TopologyError::new(ErrorCode::BadRequest, e))?);
    let cc = country_code_of(&number, topo.country_codes())
        .map_err(|e| TopologyError::new(ErrorCode::UnknownCountryCode, e))?;

    let registries: Vec<RegistryId> = match route {
        Route::Via(r) => vec![r.clone()],
        Route::Discover => {
            let req = Frame::new(FrameKind::Discover).with("number", &cc);
            let resp = hop(topo, trace, Tier::Tier0, TIER0, req)?;
            resp.get("registries")
                .unwrap_or_default()
                .split(',')
                .filter(|s| !s.is_empty())
                .map(RegistryId::from)
                .collect()
        }
    };

    let mut found = None;
    let mut last = TopologyError::new(ErrorCode::NoDelegation, &number);
    for reg in registries {
        let req = Frame::new(FrameKind::Lookup).with("number", number.full_digits());
        match hop(topo, trace, Tier::Tier1, reg.as_str(), req) {
            Ok(resp) => {
                let registrar = resp.get("registrar").unwrap_or_default().to_string();
                found = Some((reg, registrar));
                break;
            }
            // A definite "no such number" outranks a timeout elsewhere.
            Err(e) if e.code == ErrorCode::NoDelegation || last.code != ErrorCode::NoDelegation => last = e,
            Err(_) => {}
        }
    }
    let (registry, registrar) = found.ok_or(last)?;

    let req = Frame::new(FrameKind::Get)
        .with("number", number.full_digits())
        .with("actor", ANONYMOUS)
        .with("service", sel);
    let resp = hop(topo, trace, Tier::Tier2, &registrar, req)?;
    let records = decode_records(resp.get("records").unwrap_or_default())
        .map_err(|e| TopologyError::new(ErrorCode::InvalidRecord, e))?;
    let set = NaptrRecordSet::with_records(number.clone(), records);
    let resolution = resolve_record_set(&set, sel, Requester::Public);
    Ok(ResolveOutcome { number, domain, registry, registrar, resolution, trace: trace.clone() })
}

fn hop(topo: &mut Topology, trace: &mut Trace, tier: Tier, to: &str, req: Frame) -> Result<Frame, TopologyError> {
    match topo.call_raw(RESOLVER, to, req, 1) {
        Ok((resp, xid)) => {
            let status = match resp.error_code() {
                Some((code, _)) => code.to_string(),
                None => "ok".to_string(),
            };
            trace.hops.push(Hop { tier, to: to.to_string(), exchange: Some(xid), status });
            match resp.error_code() {
                Some((code, detail)) => Err(TopologyError::new(code, detail)),
                None => Ok(resp),
            }
        }
        Err(e) => {
            trace.hops.push(Hop { tier, to: to.to_string(), exchange: None, status: e.code.to_string() });
            Err(e)
        }
    }
}

/// Resolves every service at once, grouping URIs by service in selection
/// order.
pub fn resolve_all(topo: &mut Topology, raw: &str) -> Result<BTreeMap<String, Vec<String>>, ResolveError> {
    let out = resolve(topo, raw, &ServiceSelector::Any)?;
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (rec, uri) in &out.resolution.resolved {
        grouped.entry(rec.service.clone()).or_default().push(uri.clone());
    }
    Ok(grouped)
}
