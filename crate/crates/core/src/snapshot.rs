//! On-disk state for a topology, so separate CLI invocations can continue
//! one run.
//!
//! A snapshot directory holds:
//!
//! | file | contents |
//! |---|---|
//! | `scenario.toml` | the configuration the topology was built from |
//! | `registry.snap` | delegations, tombstones, serial history and billing of every registry |
//! | `registrar-<id>.snap` | customers, records, grants, transfers and notices of one registrar |
//! | `subscriptions.snap` | number assignments and ENUM status |
//! | `network.snap` | logical clock, RNG position, queued messages, id counters |
//! | `events.log` | the run log |
//!
//! Every `.snap` line is a `type=<t>;key=value...` record using the wire
//! escaping. Files are written to a temporary name and renamed into place.
//! A `.lock` file keeps two processes out of the same directory.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::e164::E164Number;
use crate::ids::{GrantId, PartyId, RegistrarId, RegistryId, TransferId};
use crate::naptr::{NaptrRecordSet, ServiceSelector};
use crate::registrar::{
    decode_record_line, AuthorizationGrant, Customer, Rights, Subscription, TransferRecord, TransferState,
};
use crate::registry::{ChargeCause, Delegation, LedgerEntry};
use crate::scenario::config::{ConfigError, ScenarioConfig};
use crate::scenario::log::EventLog;
use crate::sim::{Delivery, Envelope, Network, NetworkState};
use crate::topology::Topology;
use crate::wire::{escape, unescape, Frame};

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const REGISTRY_FILE: &str = "registry.snap";
pub const SUBSCRIPTIONS_FILE: &str = "subscriptions.snap";
pub const NETWORK_FILE: &str = "network.snap";
pub const EVENTS_FILE: &str = "events.log";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{0} is locked by another process")]
    Locked(PathBuf),
    #[error("no snapshot in {0}")]
    Missing(PathBuf),
    #[error("scenario: {0}")]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io { path: path.to_path_buf(), source }
}

pub fn registrar_file(id: &str) -> String {
    format!("registrar-{id}.snap")
}

/// Held while a process works on a snapshot directory.
#[derive(Debug)]
pub struct SnapshotLock {
    path: PathBuf,
}

impl SnapshotLock {
    pub fn acquire(dir: &Path) -> Result<Self, SnapshotError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(SnapshotError::Locked(dir.to_path_buf())),
            Err(e) => Err(SnapshotError::Io { path, source: e }),
        }
    }
}

impl Drop for SnapshotLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn exists(dir: &Path) -> bool {
    dir.join(SCENARIO_FILE).is_file()
}

// ---- line format ----

struct Line {
    kind: String,
    fields: Vec<(String, String)>,
}

fn line(kind: &str, fields: &[(&str, String)]) -> String {
    let mut out = format!("type={}", escape(kind));
    for (k, v) in fields {
        out.push(';');
        out.push_str(&escape(k));
        out.push('=');
        out.push_str(&escape(v));
    }
    out.push('\n');
    out
}

struct Reader<'a> {
    file: &'a str,
    line: usize,
}

impl Reader<'_> {
    fn err(&self, message: impl std::fmt::Display) -> SnapshotError {
        SnapshotError::Parse { file: self.file.to_string(), line: self.line, message: message.to_string() }
    }

    fn parse(&self, text: &str) -> Result<Line, SnapshotError> {
        let mut fields = Vec::new();
        for part in text.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| self.err(format!("expected key=value, got {part:?}")))?;
            fields.push((unescape(k).map_err(|e| self.err(e))?, unescape(v).map_err(|e| self.err(e))?));
        }
        if fields.first().map(|(k, _)| k.as_str()) != Some("type") {
            return Err(self.err("line must start with type="));
        }
        let kind = fields.remove(0).1;
        Ok(Line { kind, fields })
    }

    fn get<'l>(&self, l: &'l Line, key: &str) -> Result<&'l str, SnapshotError> {
        l.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.err(format!("{} record lacks {key}", l.kind)))
    }

    fn num<T: std::str::FromStr>(&self, l: &Line, key: &str) -> Result<T, SnapshotError> {
        self.get(l, key)?.parse().map_err(|_| self.err(format!("bad {key}")))
    }

    fn number(&self, l: &Line, key: &str) -> Result<E164Number, SnapshotError> {
        E164Number::from_digits(self.get(l, key)?).map_err(|e| self.err(e))
    }

    fn opt(&self, l: &Line, key: &str) -> Result<Option<String>, SnapshotError> {
        Ok(Some(self.get(l, key)?).filter(|v| *v != "-").map(str::to_string))
    }
}

/// Calls `f` on every non-blank line of `text`, with a reader positioned
/// for error reporting.
fn each_line(
    file: &str,
    text: &str,
    mut f: impl FnMut(&Reader<'_>, Line) -> Result<(), SnapshotError>,
) -> Result<(), SnapshotError> {
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let r = Reader { file, line: i + 1 };
        let l = r.parse(raw)?;
        f(&r, l)?;
    }
    Ok(())
}

fn dash(v: Option<&impl ToString>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

// ---- save ----

fn registry_text(topo: &Topology) -> String {
    let mut out = String::new();
    for r in topo.registries.values() {
        let id = r.id.to_string();
        out += &line("registry", &[("id", id.clone()), ("clock", r.clock.to_string())]);
        for d in r.delegations.values() {
            out += &line(
                "delegation",
                &[
                    ("registry", id.clone()),
                    ("number", d.number.full_digits().into()),
                    ("registrar", d.registrar.to_string()),
                    ("owner", d.owning_registry.to_string()),
                    ("serial", d.serial.to_string()),
                    ("updated_at", d.updated_at.to_string()),
                ],
            );
        }
        for (n, s) in &r.tombstones {
            out += &line(
                "tombstone",
                &[("registry", id.clone()), ("number", n.full_digits().into()), ("serial", s.to_string())],
            );
        }
        for (n, serials) in &r.serial_history {
            let s: Vec<_> = serials.iter().map(u64::to_string).collect();
            out += &line(
                "history",
                &[("registry", id.clone()), ("number", n.full_digits().into()), ("serials", s.join(","))],
            );
        }
        for e in &r.billing_ledger {
            out += &line(
                "charge",
                &[
                    ("registry", id.clone()),
                    ("payer", e.payer.to_string()),
                    ("amount", e.amount.to_string()),
                    ("number", e.number.full_digits().into()),
                    ("cause", e.cause.as_str().into()),
                ],
            );
        }
    }
    out
}

fn registrar_text(r: &crate::registrar::Registrar) -> String {
    let mut out = line("registrar", &[("id", r.id.to_string())]);
    for (n, c) in &r.customers {
        out += &line(
            "customer",
            &[("number", n.full_digits().into()), ("user", c.user.to_string()), ("tsp", c.tsp.to_string())],
        );
    }
    for (n, set) in &r.records {
        for rec in &set.records {
            let text = format!("{} {}", rec.visibility.as_str(), rec.zone_line());
            out += &line("record", &[("number", n.full_digits().into()), ("line", text)]);
        }
    }
    for g in r.grants.values() {
        out += &line(
            "grant",
            &[
                ("id", g.id.to_string()),
                ("number", g.number.full_digits().into()),
                ("grantor", g.grantor.to_string()),
                ("grantee", g.grantee.to_string()),
                ("rights", g.rights.to_string()),
                ("scope", g.scope.to_string()),
            ],
        );
    }
    for t in r.transfers.values() {
        let history: Vec<_> = t.history.iter().map(|s| s.as_str()).collect();
        out += &line(
            "transfer",
            &[
                ("id", t.id.to_string()),
                ("number", t.number.full_digits().into()),
                ("user", t.user.to_string()),
                ("from", t.from_registrar.to_string()),
                ("to", t.to_registrar.to_string()),
                ("history", history.join(",")),
                ("reason", dash(t.dispute_reason.as_ref())),
            ],
        );
        for rec in &t.migrated_records.records {
            let text = format!("{} {}", rec.visibility.as_str(), rec.zone_line());
            out += &line("staged", &[("id", t.id.to_string()), ("line", text)]);
        }
        for w in &t.warnings {
            out += &line("warning", &[("id", t.id.to_string()), ("text", w.clone())]);
        }
    }
    for (n, to) in &r.notices {
        out += &line("notice", &[("number", n.full_digits().into()), ("registrar", to.to_string())]);
    }
    out
}

fn subscriptions_text(topo: &Topology) -> String {
    let mut out = String::new();
    for s in topo.subscriptions.values() {
        out += &line(
            "subscription",
            &[
                ("number", s.number.full_digits().into()),
                ("user", s.user.to_string()),
                ("tsp", s.tsp.to_string()),
                ("enum", s.enum_active.to_string()),
                ("phone", s.phone_active.to_string()),
                ("registrar", dash(s.serving_registrar.as_ref())),
                ("token", if s.token.is_empty() { "-".into() } else { s.token.clone() }),
                ("via", dash(s.via.as_ref())),
            ],
        );
    }
    out
}

fn network_text(topo: &Topology) -> String {
    let st = topo.net.state();
    let mut out = line(
        "network",
        &[
            ("seed", st.seed.to_string()),
            ("step", st.step.to_string()),
            ("rng_word_pos", st.rng_word_pos.to_string()),
            ("next_envelope", st.next_envelope.to_string()),
            ("next_exchange", st.next_exchange.to_string()),
            ("next_grant", topo.next_grant.to_string()),
            ("next_transfer", topo.next_transfer.to_string()),
            ("settled", topo.settled.to_string()),
        ],
    );
    for e in &st.pending {
        let delivery = match e.delivery {
            Delivery::Durable => "durable",
            Delivery::BestEffort => "best_effort",
        };
        out += &line(
            "pending",
            &[
                ("id", e.id.to_string()),
                ("from", e.from.clone()),
                ("to", e.to.clone()),
                ("delivery", delivery.into()),
                ("sent_at", e.sent_at.to_string()),
                ("frame", e.frame.to_text()),
            ],
        );
    }
    for (id, set) in &topo.transfer_baselines {
        out += &line("baseline", &[("id", id.to_string()), ("number", set.number.full_digits().into())]);
        for rec in &set.records {
            let text = format!("{} {}", rec.visibility.as_str(), rec.zone_line());
            out += &line("baseline_record", &[("id", id.to_string()), ("line", text)]);
        }
    }
    out
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, SnapshotError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    Ok(tmp)
}

/// Writes every file to a temporary name first, then renames them all into
/// place. Registrar files left over from actors no longer present are
/// removed.
pub fn save(topo: &Topology, dir: &Path) -> Result<(), SnapshotError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = vec![
        (SCENARIO_FILE.to_string(), topo.config().to_toml()),
        (REGISTRY_FILE.to_string(), registry_text(topo)),
        (SUBSCRIPTIONS_FILE.to_string(), subscriptions_text(topo)),
        (NETWORK_FILE.to_string(), network_text(topo)),
        (EVENTS_FILE.to_string(), topo.log.render()),
    ];
    for r in topo.registrars.values() {
        files.push((registrar_file(r.id.as_str()), registrar_text(r)));
    }
    let mut staged = Vec::new();
    for (name, contents) in &files {
        staged.push((write_atomic(dir, name, contents)?, dir.join(name)));
    }
    for (tmp, target) in staged {
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
    }
    let keep: Vec<_> = files.iter().map(|(n, _)| n.clone()).collect();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let name = entry.map_err(io_err(dir))?.file_name().to_string_lossy().to_string();
        if name.starts_with("registrar-") && name.ends_with(".snap") && !keep.contains(&name) {
            let _ = fs::remove_file(dir.join(&name));
        }
    }
    Ok(())
}

// ---- load ----

fn read(dir: &Path, name: &str) -> Result<String, SnapshotError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(io_err(&path))
}

fn load_registries(topo: &mut Topology, text: &str) -> Result<(), SnapshotError> {
    for r in topo.registries.values_mut() {
        r.delegations.clear();
        r.tombstones.clear();
        r.serial_history.clear();
        r.billing_ledger.clear();
    }
    each_line(REGISTRY_FILE, text, |rd, l| {
        let reg_key = if l.kind == "registry" { "id" } else { "registry" };
        let id = RegistryId::from(rd.get(&l, reg_key)?);
        let reg = topo.registries.get_mut(&id).ok_or_else(|| rd.err(format!("unknown registry {id}")))?;
        match l.kind.as_str() {
            "registry" => reg.clock = rd.num(&l, "clock")?,
            "delegation" => {
                let d = Delegation {
                    number: rd.number(&l, "number")?,
                    registrar: rd.get(&l, "registrar")?.into(),
                    owning_registry: rd.get(&l, "owner")?.into(),
                    serial: rd.num(&l, "serial")?,
                    updated_at: rd.num(&l, "updated_at")?,
                };
                reg.delegations.insert(d.number.clone(), d);
            }
            "tombstone" => {
                reg.tombstones.insert(rd.number(&l, "number")?, rd.num(&l, "serial")?);
            }
            "history" => {
                let serials = rd
                    .get(&l, "serials")?
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| rd.err("bad serial")))
                    .collect::<Result<Vec<u64>, _>>()?;
                reg.serial_history.insert(rd.number(&l, "number")?, serials);
            }
            "charge" => {
                let cause = match rd.get(&l, "cause")? {
                    "registration" => ChargeCause::Registration,
                    "transfer" => ChargeCause::Transfer,
                    other => return Err(rd.err(format!("unknown charge cause {other:?}"))),
                };
                reg.billing_ledger.push(LedgerEntry {
                    payer: rd.get(&l, "payer")?.into(),
                    amount: rd.num(&l, "amount")?,
                    number: rd.number(&l, "number")?,
                    cause,
                });
            }
            other => return Err(rd.err(format!("unexpected {other} record"))),
        }
        Ok(())
    })
}

fn load_registrar(topo: &mut Topology, id: &RegistrarId, file: &str, text: &str) -> Result<(), SnapshotError> {
    let reg = topo.registrars.get_mut(id).expect("caller checked");
    reg.customers.clear();
    reg.records.clear();
    reg.grants.clear();
    reg.transfers.clear();
    reg.notices.clear();
    each_line(file, text, |rd, l| {
        match l.kind.as_str() {
            "registrar" => {
                if rd.get(&l, "id")? != id.as_str() {
                    return Err(rd.err("registrar id does not match the file name"));
                }
            }
            "customer" => {
                let c = Customer { user: rd.get(&l, "user")?.into(), tsp: rd.get(&l, "tsp")?.into() };
                reg.customers.insert(rd.number(&l, "number")?, c);
            }
            "record" => {
                let n = rd.number(&l, "number")?;
                let rec = decode_record_line(rd.get(&l, "line")?).map_err(|e| rd.err(e))?;
                reg.records.entry(n.clone()).or_insert_with(|| NaptrRecordSet::new(n)).records.push(rec);
            }
            "grant" => {
                let g = AuthorizationGrant {
                    id: GrantId::from(rd.get(&l, "id")?),
                    grantor: rd.get(&l, "grantor")?.into(),
                    grantee: rd.get(&l, "grantee")?.into(),
                    rights: rd.get(&l, "rights")?.parse::<Rights>().map_err(|e| rd.err(e))?,
                    scope: rd.get(&l, "scope")?.parse::<ServiceSelector>().map_err(|e| rd.err(e))?,
                    number: rd.number(&l, "number")?,
                };
                reg.grants.insert(g.id.clone(), g);
            }
            "transfer" => {
                let history = rd
                    .get(&l, "history")?
                    .split(',')
                    .map(|s| s.parse::<TransferState>().map_err(|e| rd.err(e)))
                    .collect::<Result<Vec<_>, _>>()?;
                let number = rd.number(&l, "number")?;
                let t = TransferRecord {
                    id: TransferId::from(rd.get(&l, "id")?),
                    number: number.clone(),
                    user: rd.get(&l, "user")?.into(),
                    from_registrar: rd.get(&l, "from")?.into(),
                    to_registrar: rd.get(&l, "to")?.into(),
                    state: *history.last().ok_or_else(|| rd.err("empty transfer history"))?,
                    migrated_records: NaptrRecordSet::new(number),
                    history,
                    warnings: Vec::new(),
                    dispute_reason: rd.opt(&l, "reason")?,
                };
                reg.transfers.insert(t.id.clone(), t);
            }
            "staged" | "warning" => {
                let tid = TransferId::from(rd.get(&l, "id")?);
                let t = reg.transfers.get_mut(&tid).ok_or_else(|| rd.err(format!("{tid} not declared yet")))?;
                if l.kind == "staged" {
                    let rec = decode_record_line(rd.get(&l, "line")?).map_err(|e| rd.err(e))?;
                    t.migrated_records.records.push(rec);
                } else {
                    t.warnings.push(rd.get(&l, "text")?.to_string());
                }
            }
            "notice" => reg.notices.push((rd.number(&l, "number")?, PartyId::from(rd.get(&l, "registrar")?))),
            other => return Err(rd.err(format!("unexpected {other} record"))),
        }
        Ok(())
    })
}

fn load_subscriptions(topo: &mut Topology, text: &str) -> Result<(), SnapshotError> {
    topo.subscriptions.clear();
    each_line(SUBSCRIPTIONS_FILE, text, |rd, l| {
        if l.kind != "subscription" {
            return Err(rd.err(format!("unexpected {} record", l.kind)));
        }
        let s = Subscription {
            number: rd.number(&l, "number")?,
            user: rd.get(&l, "user")?.into(),
            tsp: rd.get(&l, "tsp")?.into(),
            enum_active: rd.num(&l, "enum")?,
            phone_active: rd.num(&l, "phone")?,
            serving_registrar: rd.opt(&l, "registrar")?.map(PartyId::from),
            token: rd.opt(&l, "token")?.unwrap_or_default(),
            via: rd.opt(&l, "via")?.map(PartyId::from),
        };
        topo.subscriptions.insert(s.number.clone(), s);
        Ok(())
    })
}

fn load_network(topo: &mut Topology, text: &str) -> Result<(), SnapshotError> {
    let mut state: Option<NetworkState> = None;
    let mut baselines = std::collections::BTreeMap::new();
    each_line(NETWORK_FILE, text, |rd, l| {
        match l.kind.as_str() {
            "network" => {
                state = Some(NetworkState {
                    seed: rd.num(&l, "seed")?,
                    step: rd.num(&l, "step")?,
                    rng_word_pos: rd.num(&l, "rng_word_pos")?,
                    next_envelope: rd.num(&l, "next_envelope")?,
                    next_exchange: rd.num(&l, "next_exchange")?,
                    pending: Vec::new(),
                });
                topo.next_grant = rd.num(&l, "next_grant")?;
                topo.next_transfer = rd.num(&l, "next_transfer")?;
                topo.settled = rd.num(&l, "settled")?;
            }
            "pending" => {
                let st = state.as_mut().ok_or_else(|| rd.err("pending before network"))?;
                let delivery = match rd.get(&l, "delivery")? {
                    "durable" => Delivery::Durable,
                    "best_effort" => Delivery::BestEffort,
                    other => return Err(rd.err(format!("unknown delivery {other:?}"))),
                };
                st.pending.push(Envelope {
                    id: rd.num(&l, "id")?,
                    from: rd.get(&l, "from")?.into(),
                    to: rd.get(&l, "to")?.into(),
                    frame: Frame::parse_text(rd.get(&l, "frame")?).map_err(|e| rd.err(e))?,
                    delivery,
                    sent_at: rd.num(&l, "sent_at")?,
                });
            }
            "baseline" => {
                let id = TransferId::from(rd.get(&l, "id")?);
                baselines.insert(id, NaptrRecordSet::new(rd.number(&l, "number")?));
            }
            "baseline_record" => {
                let id = TransferId::from(rd.get(&l, "id")?);
                let set = baselines.get_mut(&id).ok_or_else(|| rd.err(format!("{id} not declared yet")))?;
                set.records.push(decode_record_line(rd.get(&l, "line")?).map_err(|e| rd.err(e))?);
            }
            other => return Err(rd.err(format!("unexpected {other} record"))),
        }
        Ok(())
    })?;
    let state = state.ok_or_else(|| SnapshotError::Parse {
        file: NETWORK_FILE.into(),
        line: 1,
        message: "missing network record".into(),
    })?;
    topo.net = Network::restore(state, topo.config().faults());
    topo.transfer_baselines = baselines;
    Ok(())
}

/// Rebuilds a topology from `dir`.
pub fn load(dir: &Path) -> Result<Topology, SnapshotError> {
    if !exists(dir) {
        return Err(SnapshotError::Missing(dir.to_path_buf()));
    }
    let cfg = ScenarioConfig::from_toml(&read(dir, SCENARIO_FILE)?)?;
    let mut topo = Topology::build(cfg)?;
    load_registries(&mut topo, &read(dir, REGISTRY_FILE)?)?;
    let ids: Vec<_> = topo.registrars.keys().cloned().collect();
    for id in ids {
        let file = registrar_file(id.as_str());
        let text = read(dir, &file)?;
        load_registrar(&mut topo, &id, &file, &text)?;
    }
    load_subscriptions(&mut topo, &read(dir, SUBSCRIPTIONS_FILE)?)?;
    load_network(&mut topo, &read(dir, NETWORK_FILE)?)?;
    topo.log = EventLog::parse(&read(dir, EVENTS_FILE)?).map_err(|(line, e)| SnapshotError::Parse {
        file: EVENTS_FILE.into(),
        line,
        message: e.to_string(),
    })?;
    topo.rebuild_indexes();
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::CANONICAL_EVENTS;
    use crate::scenario::invariants::assert_invariants;
    use crate::scenario::run_events;
    use crate::scenario::script::parse_script;

    fn run(model: u8) -> Topology {
        let mut t = Topology::build(ScenarioConfig::builtin(model).unwrap()).unwrap();
        run_events(&mut t, &parse_script(CANONICAL_EVENTS).unwrap());
        t
    }

    #[test]
    fn round_trip_preserves_state() {
        for model in [1, 5] {
            let t = run(model);
            let dir = tempfile::tempdir().unwrap();
            save(&t, dir.path()).unwrap();
            let back = load(dir.path()).unwrap();
            assert_eq!(back.canonical_state(), t.canonical_state());
            assert_eq!(back.log, t.log);
            assert_eq!(back.net.state(), t.net.state());
            assert!(assert_invariants(&back).all_passed());
        }
    }

    #[test]
    fn corrupt_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        save(&run(3), dir.path()).unwrap();
        let path = dir.path().join(SUBSCRIPTIONS_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("garbage\n");
        let line = text.lines().count();
        fs::write(&path, text).unwrap();
        match load(dir.path()) {
            Err(SnapshotError::Parse { file, line: l, .. }) => {
                assert_eq!(file, SUBSCRIPTIONS_FILE);
                assert_eq!(l, line);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let held = SnapshotLock::acquire(dir.path()).unwrap();
        assert!(matches!(SnapshotLock::acquire(dir.path()), Err(SnapshotError::Locked(_))));
        drop(held);
        assert!(SnapshotLock::acquire(dir.path()).is_ok());
    }
}
