//! Scripted runs over a topology, and what can be read off them afterwards.

pub mod config;
pub mod invariants;
pub mod log;
pub mod script;
pub mod valueflow;

use thiserror::Error;

use crate::resolver::resolve;
use crate::topology::{Topology, TopologyError};
use crate::wire::ErrorCode;

use self::log::EventLog;
use self::script::{Event, ScriptLine};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("run incomplete: {0}")]
    RunIncomplete(String),
}

/// Runs every line in order, then settles the network. Failures are logged
/// against the event and the run carries on.
pub fn run_events<'a>(topo: &'a mut Topology, lines: &[ScriptLine]) -> &'a EventLog {
    for line in lines {
        let step = topo.step();
        topo.log.push(step, "script", [("line", line.line.to_string()), ("text", line.text.clone())]);
        // Outcomes are in the log already.
        let _ = apply_event(topo, &line.event);
    }
    topo.settle();
    &topo.log
}

/// Applies one event. On success returns a one-line summary; failures are
/// already in the log and come back as (code, detail).
pub fn apply_event(topo: &mut Topology, event: &Event) -> Result<String, (ErrorCode, String)> {
    let cfg = topo.config().clone();
    let a = |s: &str| cfg.resolve_alias(s).to_string();
    let e = |e: TopologyError| (e.code, e.detail);
    match event {
        Event::Assign { user, number, tsp } => {
            let s = topo.assign(user, number, &a(tsp)).map_err(e)?;
            Ok(format!("assigned {} to {} token={}", s.number, s.user, s.token))
        }
        Event::Subscribe { user, number, registrar, proof, via } => {
            let via = via.as_deref().map(a);
            let s = topo.subscribe(user, number, &a(registrar), proof, via.as_deref()).map_err(e)?;
            Ok(format!("{} subscribed at {}", s.number, a(registrar)))
        }
        Event::Provision { actor, number, record } => {
            let set = topo.provision(&a(actor), number, vec![record.clone()]).map_err(e)?;
            Ok(format!("{} now has {} record(s)", set.number, set.len()))
        }
        Event::Grant { user, number, grantee, rights, scope } => {
            let g = topo.grant(user, number, &a(grantee), rights.clone(), scope.clone()).map_err(e)?;
            Ok(format!("grant {} to {} ({} on {})", g.id, g.grantee, g.rights, g.scope))
        }
        Event::Revoke { user, grant } => {
            topo.revoke(user, grant).map_err(e)?;
            Ok(format!("revoked {grant}"))
        }
        Event::Transfer { user, number, registrar, until } => {
            let t = topo.transfer(user, number, &a(registrar), *until).map_err(e)?;
            Ok(format!("transfer {} {}", t.id, t.state))
        }
        Event::Resume { transfer } => {
            let t = topo.resume(transfer, None).map_err(e)?;
            Ok(format!("transfer {} {}", t.id, t.state))
        }
        Event::Dispute { registrar, transfer, reason } => {
            let t = topo.dispute(&a(registrar), transfer, reason).map_err(e)?;
            Ok(format!("transfer {} {}", t.id, t.state))
        }
        Event::Disconnect { user, number, kind } => {
            let s = topo.disconnect(user, number, *kind).map_err(e)?;
            Ok(format!("{} disconnected ({kind})", s.number))
        }
        Event::Resolve { number, service } => {
            let out = resolve(topo, number, service).map_err(|r| (r.code, r.detail))?;
            Ok(out.uris().join("\n"))
        }
        Event::Get { actor, number, service } => {
            let actor = a(actor);
            let actor = (actor != crate::registrar::ANONYMOUS).then_some(actor);
            let set = topo.get(actor.as_deref(), number, service).map_err(e)?;
            Ok(crate::registrar::encode_records(&set.records))
        }
        Event::Cooperate { payer, tsp, approach } => {
            topo.cooperate(&a(payer), &a(tsp), approach).map_err(e)?;
            Ok(format!("{} pays {} ({approach})", a(payer), a(tsp)))
        }
    }
}

/// One `resolve` event as logged: number digits, selector, and either the
/// URIs or the error code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveLine {
    pub number: String,
    pub service: String,
    pub outcome: Result<Vec<String>, String>,
}

impl std::fmt::Display for ResolveLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.outcome {
            Ok(uris) => write!(f, "+{} {} -> [{}]", self.number, self.service, uris.join(", ")),
            Err(code) => write!(f, "+{} {} -> {}", self.number, self.service, code),
        }
    }
}

/// Every resolve made through the ordinary route, in log order.
pub fn resolve_lines(log: &EventLog) -> Vec<ResolveLine> {
    log.of_kind("event")
        .filter(|r| r.get("event") == Some("resolve") && r.get("via").is_none())
        .map(|r| ResolveLine {
            number: r.get("number").unwrap_or_default().to_string(),
            service: r.get("service").unwrap_or_default().to_string(),
            outcome: if r.is_ok() {
                Ok(r.get("uris").unwrap_or_default().split_whitespace().map(str::to_string).collect())
            } else {
                Err(r.get("code").unwrap_or("?").to_string())
            },
        })
        .collect()
}
