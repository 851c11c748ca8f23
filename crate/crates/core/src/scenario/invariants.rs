//! Cross-actor checks over a finished run. Each check names the log
//! records that break it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::e164::E164Number;
use crate::naptr::{NaptrRecord, ServiceSelector};
use crate::registrar::{is_valid_history, TransferState};
use crate::resolver::{resolve_with, Route};
use crate::scenario::config::Multiplicity;
use crate::scenario::log::EventLog;
use crate::topology::Topology;
use crate::wire::FrameKind;

pub const SINGLE_STORE: &str = "single-store";
pub const TRANSFER_CONSERVATION: &str = "transfer-conservation";
pub const ACCESS_SOUNDNESS: &str = "access-soundness";
pub const SERIAL_MONOTONICITY: &str = "serial-monotonicity";
pub const BILLING_CONSERVATION: &str = "billing-conservation";
pub const MODEL_TRANSPARENCY: &str = "model-transparency";
pub const REPLICA_CONVERGENCE: &str = "replica-convergence";
pub const PEERING_INERTNESS: &str = "peering-inertness";
pub const TRANSFER_MONOTONICITY: &str = "transfer-monotonicity";
pub const DISCONNECT_SAFETY: &str = "disconnect-safety";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    /// Log record ids that witness the failure.
    pub counterexamples: Vec<u64>,
    pub details: Vec<String>,
}

impl InvariantResult {
    fn from_findings(name: &'static str, findings: Vec<(u64, String)>) -> Self {
        let mut counterexamples: Vec<u64> = findings.iter().map(|(id, _)| *id).collect();
        counterexamples.sort_unstable();
        counterexamples.dedup();
        Self {
            name,
            passed: findings.is_empty(),
            counterexamples,
            details: findings.into_iter().map(|(_, d)| d).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantReport {
    pub results: Vec<InvariantResult>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &InvariantResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            if r.passed {
                writeln!(f, "PASS {}", r.name)?;
            } else {
                let ids: Vec<_> = r.counterexamples.iter().map(u64::to_string).collect();
                writeln!(f, "FAIL {} events=[{}]", r.name, ids.join(","))?;
                for d in &r.details {
                    writeln!(f, "  {d}")?;
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the whole suite. The topology itself is left untouched;
/// resolution probes run on a copy.
pub fn assert_invariants(topo: &Topology) -> InvariantReport {
    InvariantReport {
        results: vec![
            single_store(topo),
            transfer_conservation(topo),
            access_soundness(topo),
            serial_monotonicity(topo),
            billing_conservation(topo),
            model_transparency(topo),
            replica_convergence(topo),
            peering_inertness(topo),
            transfer_monotonicity(topo),
            disconnect_safety(topo),
        ],
    }
}

/// Id of the latest event record about `n`, or of the last record at all.
fn witness(log: &EventLog, n: &E164Number) -> u64 {
    log.records()
        .iter()
        .rev()
        .find(|r| r.kind == "event" && r.get("number") == Some(n.full_digits()))
        .map_or(log.last_id(), |r| r.id)
}

pub fn single_store(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    let mut holders: BTreeMap<&E164Number, Vec<&str>> = BTreeMap::new();
    for r in topo.registrars.values() {
        let numbers: BTreeSet<_> = r.customers.keys().chain(r.records.keys()).collect();
        for n in numbers {
            holders.entry(n).or_default().push(r.id.as_str());
        }
    }
    for (n, regs) in &holders {
        if regs.len() > 1 {
            findings.push((witness(&topo.log, n), format!("{n} held by {}", regs.join(", "))));
        }
    }
    for s in topo.subscriptions.values().filter(|s| s.enum_active) {
        let serving = s.serving_registrar.as_ref().map(|r| r.as_str()).unwrap_or_default();
        if holders.get(&s.number).is_some_and(|h| h != &vec![serving]) {
            findings.push((witness(&topo.log, &s.number), format!("{} held away from {serving}", s.number)));
        }
        let owned = topo
            .registries
            .values()
            .filter_map(|r| r.delegations.get(&s.number).filter(|d| d.owning_registry == r.id))
            .collect::<Vec<_>>();
        match owned.as_slice() {
            [d] if d.registrar.as_str() == serving => {}
            [d] => findings.push((
                witness(&topo.log, &s.number),
                format!("{} delegated to {} but served by {serving}", s.number, d.registrar),
            )),
            other => findings.push((
                witness(&topo.log, &s.number),
                format!("{} has {} owning delegations", s.number, other.len()),
            )),
        }
    }
    InvariantResult::from_findings(SINGLE_STORE, findings)
}

/// Sorted zone lines: order-insensitive multiset comparison.
fn multiset(records: &[NaptrRecord]) -> Vec<String> {
    let mut lines: Vec<_> = records.iter().map(|r| format!("{} {}", r.visibility.as_str(), r.zone_line())).collect();
    lines.sort();
    lines
}

fn transfer_event(log: &EventLog, id: &str) -> u64 {
    log.records()
        .iter()
        .rev()
        .find(|r| r.kind == "transfer" && r.get("transfer") == Some(id))
        .map_or(log.last_id(), |r| r.id)
}

pub fn transfer_conservation(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    for t in topo.transfers() {
        if t.state != TransferState::Complete {
            continue;
        }
        let got = multiset(&t.migrated_records.records);
        let expected = if t.warnings.is_empty() {
            topo.transfer_baselines.get(&t.id).map(|b| multiset(&b.records)).unwrap_or_default()
        } else {
            Vec::new()
        };
        if got != expected {
            findings.push((
                transfer_event(&topo.log, t.id.as_str()),
                format!("{}: migrated {} record(s), expected {}", t.id, got.len(), expected.len()),
            ));
        }
    }
    InvariantResult::from_findings(TRANSFER_CONSERVATION, findings)
}

#[derive(Debug, Default)]
struct OracleNumber {
    user: Option<String>,
    tsp: Option<String>,
    registrar: Option<String>,
    /// grant id -> (grantee, write allowed, scope)
    grants: BTreeMap<String, (String, bool, String)>,
}

/// Replays the log with its own bookkeeping and checks every write against
/// who could legitimately make it at that moment.
pub fn access_soundness(topo: &Topology) -> InvariantResult {
    let cfg = topo.config();
    let implicit_tsp = cfg.tsp_is_registrar();
    let network: BTreeSet<String> =
        cfg.policy.network_related_services.iter().map(|s| s.to_ascii_lowercase()).collect();
    let mut numbers: BTreeMap<String, OracleNumber> = BTreeMap::new();
    let mut grant_numbers: BTreeMap<String, String> = BTreeMap::new();
    let mut findings = Vec::new();

    for rec in topo.log.records() {
        let number = rec.get("number").unwrap_or_default().to_string();
        match (rec.kind.as_str(), rec.get("event")) {
            ("event", Some(kind)) if rec.is_ok() => match kind {
                "assign" => {
                    let e = numbers.entry(number).or_default();
                    *e = OracleNumber {
                        user: rec.get("user").map(str::to_string),
                        tsp: rec.get("tsp").map(str::to_string),
                        ..OracleNumber::default()
                    };
                }
                "subscribe" => {
                    numbers.entry(number).or_default().registrar = rec.get("registrar").map(str::to_string);
                }
                "grant" => {
                    let rights = rec.get("rights").unwrap_or_default();
                    let writes = rights.split(['+', ',']).any(|r| r == "provision" || r == "change");
                    let id = rec.get("grant").unwrap_or_default().to_string();
                    let entry = (
                        rec.get("grantee").unwrap_or_default().to_string(),
                        writes,
                        rec.get("scope").unwrap_or("*").to_string(),
                    );
                    numbers.entry(number.clone()).or_default().grants.insert(id.clone(), entry);
                    grant_numbers.insert(id, number);
                }
                "revoke" => {
                    let id = rec.get("grant").unwrap_or_default();
                    if let Some(n) = grant_numbers.remove(id) {
                        numbers.entry(n).or_default().grants.remove(id);
                    }
                }
                "disconnect" => {
                    let e = numbers.entry(number).or_default();
                    e.registrar = None;
                    e.grants.clear();
                    if rec.get("kind") == Some("telephone") {
                        e.user = None;
                        e.tsp = None;
                    }
                }
                _ => {}
            },
            ("transfer", _) if rec.get("state") == Some("Complete") => {
                let e = numbers.entry(number).or_default();
                e.registrar = rec.get("to").map(str::to_string);
                e.grants.clear();
            }
            ("write", _) => {
                let actor = rec.get("actor").unwrap_or_default();
                let service = rec.get("service").unwrap_or_default();
                let state = numbers.get(&number);
                let allowed = state.is_some_and(|s| {
                    s.user.as_deref() == Some(actor)
                        || s.registrar.as_deref() == Some(actor)
                        || s.grants.values().any(|(grantee, writes, scope)| {
                            grantee == actor && *writes && (scope == "*" || scope.eq_ignore_ascii_case(service))
                        })
                        || (implicit_tsp
                            && s.tsp.as_deref() == Some(actor)
                            && network.contains(&service.to_ascii_lowercase()))
                });
                if !allowed {
                    findings.push((rec.id, format!("{actor} wrote {service} on +{number}")));
                }
            }
            _ => {}
        }
    }
    InvariantResult::from_findings(ACCESS_SOUNDNESS, findings)
}

pub fn serial_monotonicity(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    for r in topo.registries.values() {
        for (n, serials) in &r.serial_history {
            if serials.windows(2).any(|w| w[1] <= w[0]) {
                findings.push((witness(&topo.log, n), format!("{} at {}: serials {serials:?}", n, r.id)));
            }
        }
    }
    InvariantResult::from_findings(SERIAL_MONOTONICITY, findings)
}

/// Each registry billed exactly one flat fee per accepted registration or
/// forward change, and the log agrees with its ledger.
pub fn billing_conservation(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    for r in topo.registries.values() {
        let billable = topo
            .log
            .of_kind("frame")
            .filter(|f| f.get("to") == Some(r.id.as_str()) && f.is_ok() && f.get("rollback").is_none())
            .filter(|f| matches!(f.get("req"), Some(k) if k == FrameKind::Register.as_str() || k == FrameKind::Change.as_str()))
            .count();
        let ledger: f64 = r.billing_ledger.iter().map(|e| e.amount).sum();
        let logged: f64 = topo
            .log
            .of_kind("charge")
            .filter(|c| c.get("payee") == Some(r.id.as_str()))
            .filter_map(|c| c.get("amount")?.parse::<f64>().ok())
            .sum();
        let expected = billable as f64 * r.flat_fee;
        if (ledger - expected).abs() > 1e-9 || (logged - ledger).abs() > 1e-9 {
            findings.push((
                topo.log.last_id(),
                format!("{}: ledger {ledger}, logged {logged}, expected {expected}", r.id),
            ));
        }
        if r.billing_ledger.iter().any(|e| e.amount < 0.0) {
            findings.push((topo.log.last_id(), format!("{}: negative charge", r.id)));
        }
    }
    InvariantResult::from_findings(BILLING_CONSERVATION, findings)
}

/// Resolving through any registry that serves a number gives the same
/// answer as the ordinary route.
pub fn model_transparency(topo: &Topology) -> InvariantResult {
    let mut probe = topo.clone();
    let mut findings = Vec::new();
    let numbers: Vec<_> = topo.subscriptions.values().filter(|s| s.enum_active).map(|s| s.number.clone()).collect();
    for n in numbers {
        let raw = n.to_plus_form();
        let baseline = outcome(resolve_with(&mut probe, &raw, &ServiceSelector::Any, &Route::Discover));
        for reg in topo.registries.values().filter(|r| r.serves(&n)) {
            let via = outcome(resolve_with(&mut probe, &raw, &ServiceSelector::Any, &Route::Via(reg.id.clone())));
            if via != baseline {
                findings.push((
                    witness(&topo.log, &n),
                    format!("{n}: {baseline} by discovery, {via} via {}", reg.id),
                ));
            }
        }
    }
    InvariantResult::from_findings(MODEL_TRANSPARENCY, findings)
}

fn outcome(r: Result<crate::resolver::ResolveOutcome, crate::resolver::ResolveError>) -> String {
    match r {
        Ok(o) => format!("[{}]", o.resolution.uris.join(" ")),
        Err(e) => e.code.to_string(),
    }
}

/// Every replica matches its owner, and no replica outlives a removal.
pub fn replica_convergence(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    for owner in topo.registries.values() {
        for (n, d) in owner.delegations.iter().filter(|(_, d)| d.owning_registry == owner.id) {
            for peer in topo.registries.values().filter(|p| p.id != owner.id && p.serves(n)) {
                match peer.delegations.get(n) {
                    Some(r) if r.registrar == d.registrar && r.serial == d.serial => {}
                    Some(r) => findings.push((
                        witness(&topo.log, n),
                        format!("{n}: {} has {}@{}, owner {} has {}@{}", peer.id, r.registrar, r.serial, owner.id, d.registrar, d.serial),
                    )),
                    None => findings.push((witness(&topo.log, n), format!("{n}: no replica at {}", peer.id))),
                }
            }
        }
    }
    for r in topo.registries.values() {
        for (n, d) in r.delegations.iter().filter(|(_, d)| d.owning_registry != r.id) {
            let live = topo
                .registries
                .get(&d.owning_registry)
                .and_then(|o| o.delegations.get(n))
                .is_some_and(|od| od.owning_registry == d.owning_registry);
            if !live {
                findings.push((
                    witness(&topo.log, n),
                    format!("{n}: {} keeps a replica its owner {} no longer has", r.id, d.owning_registry),
                ));
            }
        }
    }
    InvariantResult::from_findings(REPLICA_CONVERGENCE, findings)
}

/// With one registry, peering must not exist at all.
pub fn peering_inertness(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    if topo.config().multiplicity() == Multiplicity::Single {
        for r in topo.registries.values().filter(|r| !r.peers.is_empty()) {
            findings.push((topo.log.last_id(), format!("{} has peers", r.id)));
        }
        for rec in topo.log.records() {
            let peer_frame = match rec.kind.as_str() {
                "frame" => rec.get("req") == Some(FrameKind::PeerUpdate.as_str()),
                "deliver" | "drop" => rec.get("msg") == Some(FrameKind::PeerUpdate.as_str()),
                _ => false,
            };
            if peer_frame {
                findings.push((rec.id, "peer update in a single-registry model".into()));
            }
        }
    }
    InvariantResult::from_findings(PEERING_INERTNESS, findings)
}

pub fn transfer_monotonicity(topo: &Topology) -> InvariantResult {
    let mut histories: BTreeMap<String, Vec<(u64, TransferState)>> = BTreeMap::new();
    let mut findings = Vec::new();
    for rec in topo.log.of_kind("transfer") {
        let id = rec.get("transfer").unwrap_or_default().to_string();
        match rec.get("state").unwrap_or_default().parse::<TransferState>() {
            Ok(s) => histories.entry(id).or_default().push((rec.id, s)),
            Err(e) => findings.push((rec.id, e)),
        }
    }
    for (id, h) in histories {
        let states: Vec<_> = h.iter().map(|(_, s)| *s).collect();
        if !is_valid_history(&states) {
            findings.push((h.last().map_or(0, |(i, _)| *i), format!("{id}: {states:?}")));
        }
    }
    InvariantResult::from_findings(TRANSFER_MONOTONICITY, findings)
}

/// A number without ENUM service leaves nothing behind anywhere.
pub fn disconnect_safety(topo: &Topology) -> InvariantResult {
    let mut findings = Vec::new();
    for s in topo.subscriptions.values().filter(|s| !s.enum_active) {
        let n = &s.number;
        for r in topo.registrars.values() {
            if r.customers.contains_key(n) || r.records.contains_key(n) {
                findings.push((witness(&topo.log, n), format!("{n}: still held by {}", r.id)));
            }
        }
        for r in topo.registries.values() {
            if r.delegations.contains_key(n) {
                findings.push((witness(&topo.log, n), format!("{n}: still delegated at {}", r.id)));
            }
        }
        if !s.is_consistent() {
            findings.push((witness(&topo.log, n), format!("{n}: inconsistent subscription")));
        }
    }
    InvariantResult::from_findings(DISCONNECT_SAFETY, findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::{FaultSpec, ScenarioConfig, CANONICAL_EVENTS};
    use crate::scenario::run_events;
    use crate::scenario::script::parse_script;

    fn run(cfg: ScenarioConfig) -> Topology {
        let mut t = Topology::build(cfg).unwrap();
        run_events(&mut t, &parse_script(CANONICAL_EVENTS).unwrap());
        t
    }

    #[test]
    fn clean_canonical_runs_pass() {
        for model in 1..=6 {
            let t = run(ScenarioConfig::builtin(model).unwrap());
            let report = assert_invariants(&t);
            assert!(report.all_passed(), "model {model}\n{report}");
        }
    }

    #[test]
    fn planted_write_is_caught() {
        let mut t = run(ScenarioConfig::builtin(1).unwrap());
        let rec: NaptrRecord = "1 1 \"u\" \"E2U+sip\" \"!^.*$!sip:evil@x!\" .".parse().unwrap();
        let id = t.inject_unchecked_write("ASP-Y", "+1-315-443-4473", rec).unwrap();
        let report = assert_invariants(&t);
        let access = report.get(ACCESS_SOUNDNESS).unwrap();
        assert!(!access.passed);
        assert_eq!(access.counterexamples, vec![id]);
    }

    #[test]
    fn lost_peer_updates_break_convergence() {
        let mut cfg = ScenarioConfig::builtin(4).unwrap();
        cfg.faults.push(FaultSpec { actor: "R2".into(), from: 1, to: 30 });
        let t = run(cfg);
        let report = assert_invariants(&t);
        assert!(!report.get(REPLICA_CONVERGENCE).unwrap().passed, "{report}");
    }
}
