//! Event scripts: one `step <kind> <args>` per line, `#` starts a comment.
//!
//! ```text
//! step assign U1 +1-315-443-4473 TSP-A
//! step subscribe U1 +1-315-443-4473 REG1 confirm
//! step provision U1 +1-315-443-4473 public 100 10 "u" "E2U+sip" "!^.*$!sip:a@b!" .
//! step grant U1 +1-315-443-4473 ASP-X provision E2U+mailto
//! step transfer U1 +1-315-443-4473 REG2 until=OldNotified
//! step resolve +1-315-443-4473 E2U+sip
//! ```

use std::fmt;

use thiserror::Error;

use crate::naptr::{NaptrRecord, ServiceSelector};
use crate::registrar::{decode_record_line, DisconnectKind, Rights, TransferState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proof {
    /// The registrar vouches for the user itself.
    Auto,
    /// The assigning TSP confirms the user holds the number.
    Confirm,
    /// The user presents the token issued with the number.
    Token(String),
}

impl fmt::Display for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proof::Auto => f.write_str("auto"),
            Proof::Confirm => f.write_str("confirm"),
            Proof::Token(t) => write!(f, "token={t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Assign { user: String, number: String, tsp: String },
    Subscribe { user: String, number: String, registrar: String, proof: Proof, via: Option<String> },
    Provision { actor: String, number: String, record: NaptrRecord },
    Grant { user: String, number: String, grantee: String, rights: Rights, scope: ServiceSelector },
    Revoke { user: String, grant: String },
    Transfer { user: String, number: String, registrar: String, until: Option<TransferState> },
    Resume { transfer: String },
    Dispute { registrar: String, transfer: String, reason: String },
    Disconnect { user: String, number: String, kind: DisconnectKind },
    Resolve { number: String, service: ServiceSelector },
    Get { actor: String, number: String, service: ServiceSelector },
    Cooperate { payer: String, tsp: String, approach: String },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Assign { .. } => "assign",
            Event::Subscribe { .. } => "subscribe",
            Event::Provision { .. } => "provision",
            Event::Grant { .. } => "grant",
            Event::Revoke { .. } => "revoke",
            Event::Transfer { .. } => "transfer",
            Event::Resume { .. } => "resume",
            Event::Dispute { .. } => "dispute",
            Event::Disconnect { .. } => "disconnect",
            Event::Resolve { .. } => "resolve",
            Event::Get { .. } => "get",
            Event::Cooperate { .. } => "cooperate",
        }
    }
}

/// A parsed line, keeping its source text for the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub line: usize,
    pub text: String,
    pub event: Event,
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let event = parse_event(trimmed).map_err(|message| ScriptError { line: i + 1, message })?;
        out.push(ScriptLine { line: i + 1, text: trimmed.to_string(), event });
    }
    Ok(out)
}

/// Parses one line, with or without the leading `step`.
pub fn parse_event(line: &str) -> Result<Event, String> {
    let line = line.strip_prefix("step ").unwrap_or(line).trim_start();
    let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim();
    if kind == "provision" {
        return parse_provision(rest);
    }
    let args: Vec<&str> = rest.split_whitespace().collect();
    let need = |n: usize, usage: &str| {
        if args.len() < n {
            Err(format!("{kind} expects {usage}"))
        } else {
            Ok(())
        }
    };
    let s = |i: usize| args[i].to_string();
    let selector = |a: Option<&&str>| -> Result<ServiceSelector, String> {
        a.map_or(Ok(ServiceSelector::Any), |s| s.parse().map_err(|e| format!("{e}")))
    };
    match kind {
        "assign" => {
            need(3, "<user> <number> <tsp>")?;
            Ok(Event::Assign { user: s(0), number: s(1), tsp: s(2) })
        }
        "subscribe" => {
            need(3, "<user> <number> <registrar> [auto|confirm|token=<t>] [via=<asp>]")?;
            let mut proof = Proof::Auto;
            let mut via = None;
            for extra in &args[3..] {
                match *extra {
                    "auto" => proof = Proof::Auto,
                    "confirm" => proof = Proof::Confirm,
                    t if t.starts_with("token=") => proof = Proof::Token(t["token=".len()..].to_string()),
                    v if v.starts_with("via=") => via = Some(v["via=".len()..].to_string()),
                    other => return Err(format!("unknown subscribe option {other:?}")),
                }
            }
            Ok(Event::Subscribe { user: s(0), number: s(1), registrar: s(2), proof, via })
        }
        "grant" => {
            need(5, "<user> <number> <grantee> <rights> <scope>")?;
            Ok(Event::Grant {
                user: s(0),
                number: s(1),
                grantee: s(2),
                rights: args[3].parse()?,
                scope: selector(args.get(4))?,
            })
        }
        "revoke" => {
            need(2, "<user> <grant-id>")?;
            Ok(Event::Revoke { user: s(0), grant: s(1) })
        }
        "transfer" => {
            need(3, "<user> <number> <new-registrar> [until=<state>]")?;
            let until = match args.get(3) {
                Some(u) => Some(
                    u.strip_prefix("until=")
                        .ok_or_else(|| format!("unknown transfer option {u:?}"))?
                        .parse()?,
                ),
                None => None,
            };
            Ok(Event::Transfer { user: s(0), number: s(1), registrar: s(2), until })
        }
        "resume" => {
            need(1, "<transfer-id>")?;
            Ok(Event::Resume { transfer: s(0) })
        }
        "dispute" => {
            need(2, "<old-registrar> <transfer-id> [reason]")?;
            Ok(Event::Dispute { registrar: s(0), transfer: s(1), reason: args[2..].join(" ") })
        }
        "disconnect" => {
            need(3, "<user> <number> enum|telephone")?;
            Ok(Event::Disconnect { user: s(0), number: s(1), kind: args[2].parse()? })
        }
        "resolve" => {
            need(1, "<number> [service]")?;
            Ok(Event::Resolve { number: s(0), service: selector(args.get(1))? })
        }
        "get" => {
            need(2, "<actor> <number> [service]")?;
            Ok(Event::Get { actor: s(0), number: s(1), service: selector(args.get(2))? })
        }
        "cooperate" => {
            need(3, "<payer> <tsp> <approach>")?;
            Ok(Event::Cooperate { payer: s(0), tsp: s(1), approach: s(2) })
        }
        other => Err(format!("unknown event {other:?}")),
    }
}

fn parse_provision(rest: &str) -> Result<Event, String> {
    let mut it = rest.splitn(3, char::is_whitespace);
    let (Some(actor), Some(number), Some(record)) = (it.next(), it.next(), it.next()) else {
        return Err("provision expects <actor> <number> [public|restricted] <zone line>".into());
    };
    let record = decode_record_line(record).map_err(|e| e.to_string())?;
    Ok(Event::Provision { actor: actor.into(), number: number.into(), record })
}
