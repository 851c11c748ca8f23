//! Tier-0 discovery and the Tier-1 registry.
//!
//! A registry maps each number it serves to the registrar authoritative for
//! it. When several registries serve the same country code they replicate
//! each other's delegations: the owning registry pushes a [`PeerUpdate`]
//! carrying a per-number serial, and receivers keep whichever copy has the
//! highest serial.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::e164::{ApexConfig, E164Number};
use crate::ids::{PartyId, RegistrarId, RegistryId};
use crate::wire::{ErrorCode, Frame, FrameKind, WireError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("no registry serves {0}")]
    UnknownCountryCode(String),
    #[error("no delegation for {0}")]
    NoDelegation(E164Number),
    #[error("{registry} is not authoritative for {number}")]
    NotAuthoritative { registry: RegistryId, number: E164Number },
    #[error("registrar {0} is not accredited")]
    UnaccreditedRegistrar(RegistrarId),
    #[error("delegation for {number} points to {actual}, not {claimed}")]
    StaleOldRegistrar {
        number: E164Number,
        claimed: RegistrarId,
        actual: RegistrarId,
    },
    #[error("{0} is not a configured peer")]
    UnknownPeer(RegistryId),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl RegistryError {
    pub fn code(&self) -> ErrorCode {
        match self {
            RegistryError::UnknownCountryCode(_) => ErrorCode::UnknownCountryCode,
            RegistryError::NoDelegation(_) => ErrorCode::NoDelegation,
            RegistryError::NotAuthoritative { .. } => ErrorCode::NotAuthoritative,
            RegistryError::UnaccreditedRegistrar(_) => ErrorCode::UnaccreditedRegistrar,
            RegistryError::StaleOldRegistrar { .. } => ErrorCode::StaleOldRegistrar,
            RegistryError::UnknownPeer(_) => ErrorCode::UnknownPeer,
            RegistryError::BadRequest(_) => ErrorCode::BadRequest,
        }
    }
}

impl From<WireError> for RegistryError {
    fn from(e: WireError) -> Self {
        RegistryError::BadRequest(e.to_string())
    }
}

/// Country-code prefix to registry pointers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Tier0Table {
    entries: BTreeMap<String, Vec<RegistryId>>,
    apex: ApexConfig,
}

impl Tier0Table {
    pub fn new(apex: ApexConfig) -> Self {
        Self { entries: BTreeMap::new(), apex }
    }

    pub fn insert(&mut self, prefix: &str, registries: Vec<RegistryId>) {
        self.entries.insert(prefix.to_string(), registries);
    }

    pub fn with(mut self, prefix: &str, registries: &[&str]) -> Self {
        self.insert(prefix, registries.iter().map(|r| RegistryId::from(*r)).collect());
        self
    }

    pub fn apex(&self) -> &ApexConfig {
        &self.apex
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<RegistryId>> {
        &self.entries
    }

    /// Prefixes that point at `registry`.
    pub fn prefixes_for(&self, registry: &RegistryId) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, regs)| regs.contains(registry))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

/// Registries for the longest prefix of `digits` (a country code or a
/// complete number) present in the table, in table order.
pub fn tier0_discover(digits: &str, table: &Tier0Table) -> Result<Vec<RegistryId>, RegistryError> {
    table
        .entries
        .iter()
        .filter(|(p, regs)| digits.starts_with(p.as_str()) && !regs.is_empty())
        .max_by_key(|(p, _)| p.len())
        .map(|(_, regs)| regs.clone())
        .ok_or_else(|| RegistryError::UnknownCountryCode(digits.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Delegation {
    pub number: E164Number,
    pub registrar: RegistrarId,
    pub owning_registry: RegistryId,
    pub serial: u64,
    pub updated_at: u64,
}

impl Delegation {
    pub fn write_fields(&self, frame: &mut Frame) {
        frame.push("number", self.number.full_digits());
        frame.push("registrar", &self.registrar);
        frame.push("owner", &self.owning_registry);
        frame.push("serial", self.serial);
        frame.push("updated_at", self.updated_at);
    }

    pub fn from_fields(frame: &Frame) -> Result<Self, RegistryError> {
        let number = parse_digits(frame.require("number")?)?;
        let serial = frame
            .require("serial")?
            .parse()
            .map_err(|_| RegistryError::BadRequest("serial".into()))?;
        let updated_at = frame
            .get("updated_at")
            .unwrap_or("0")
            .parse()
            .map_err(|_| RegistryError::BadRequest("updated_at".into()))?;
        Ok(Self {
            number,
            registrar: frame.require("registrar")?.into(),
            owning_registry: frame.require("owner")?.into(),
            serial,
            updated_at,
        })
    }

    /// `number|registrar|owner|serial`
    pub fn snapshot_line(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.number.full_digits(),
            self.registrar,
            self.owning_registry,
            self.serial
        )
    }
}

fn parse_digits(s: &str) -> Result<E164Number, RegistryError> {
    E164Number::from_digits(s).map_err(|e| RegistryError::BadRequest(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateKind {
    Created,
    Changed,
    Removed,
}

impl UpdateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateKind::Created => "created",
            UpdateKind::Changed => "changed",
            UpdateKind::Removed => "removed",
        }
    }
}

impl FromStr for UpdateKind {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "created" => Ok(UpdateKind::Created),
            "changed" => Ok(UpdateKind::Changed),
            "removed" => Ok(UpdateKind::Removed),
            other => Err(RegistryError::BadRequest(format!("update kind {other:?}"))),
        }
    }
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PeerUpdate {
    pub delegation: Delegation,
    pub kind: UpdateKind,
}

impl PeerUpdate {
    pub fn to_frame(&self) -> Frame {
        let mut f = Frame::new(FrameKind::PeerUpdate).with("update", self.kind);
        self.delegation.write_fields(&mut f);
        f
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, RegistryError> {
        Ok(Self {
            kind: frame.require("update")?.parse()?,
            delegation: Delegation::from_fields(frame)?,
        })
    }
}

/// Informational message telling a registrar that a number it served moved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notice {
    pub to: RegistrarId,
    pub number: E164Number,
    pub new_registrar: RegistrarId,
    pub serial: u64,
}

impl Notice {
    pub fn to_frame(&self, from: &RegistryId) -> Frame {
        Frame::new(FrameKind::Notice)
            .with("from", from)
            .with("number", self.number.full_digits())
            .with("registrar", &self.new_registrar)
            .with("serial", self.serial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeCause {
    Registration,
    Transfer,
}

impl ChargeCause {
    pub fn as_str(self) -> &'static str {
        match self {
            ChargeCause::Registration => "registration",
            ChargeCause::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub payer: RegistrarId,
    pub amount: f64,
    pub number: E164Number,
    pub cause: ChargeCause,
}

/// Messages a registry wants sent once the current request completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outbound {
    Peer { to: RegistryId, update: PeerUpdate },
    Notice(Notice),
}

#[derive(Debug, Clone)]
pub struct RegistryState {
    pub id: RegistryId,
    pub served_prefixes: Vec<String>,
    pub accredited: BTreeSet<RegistrarId>,
    pub peers: Vec<RegistryId>,
    pub flat_fee: f64,
    pub delegations: BTreeMap<E164Number, Delegation>,
    /// Serial of the removal for numbers whose delegation was withdrawn.
    pub tombstones: BTreeMap<E164Number, u64>,
    pub billing_ledger: Vec<LedgerEntry>,
    /// Every serial this registry applied, per number, in order.
    pub serial_history: BTreeMap<E164Number, Vec<u64>>,
    pub outbox: Vec<Outbound>,
    pub clock: u64,
}

impl RegistryState {
    pub fn new(id: impl Into<RegistryId>, flat_fee: f64) -> Self {
        Self {
            id: id.into(),
            served_prefixes: Vec::new(),
            accredited: BTreeSet::new(),
            peers: Vec::new(),
            flat_fee,
            delegations: BTreeMap::new(),
            tombstones: BTreeMap::new(),
            billing_ledger: Vec::new(),
            serial_history: BTreeMap::new(),
            outbox: Vec::new(),
            clock: 0,
        }
    }

    pub fn serving(mut self, prefixes: &[&str]) -> Self {
        self.served_prefixes = prefixes.iter().map(|p| p.to_string()).collect();
        self
    }

    pub fn accrediting(mut self, registrars: &[&str]) -> Self {
        self.accredited = registrars.iter().map(|r| PartyId::from(*r)).collect();
        self
    }

    pub fn peering(mut self, peers: &[&str]) -> Self {
        self.peers = peers.iter().map(|p| RegistryId::from(*p)).collect();
        self
    }

    pub fn serves(&self, number: &E164Number) -> bool {
        self.served_prefixes
            .iter()
            .any(|p| number.full_digits().starts_with(p.as_str()))
    }

    /// Highest serial this registry has seen for `number`, live or removed.
    pub fn known_serial(&self, number: &E164Number) -> u64 {
        let live = self.delegations.get(number).map_or(0, |d| d.serial);
        live.max(self.tombstones.get(number).copied().unwrap_or(0))
    }

    pub fn take_outbox(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbox)
    }

    pub fn ledger_total(&self) -> f64 {
        self.billing_ledger.iter().map(|e| e.amount).sum()
    }

    fn record_serial(&mut self, number: &E164Number, serial: u64) {
        self.serial_history.entry(number.clone()).or_default().push(serial);
    }

    fn broadcast(&mut self, delegation: &Delegation, kind: UpdateKind) {
        for peer in self.peers.clone() {
            self.outbox.push(Outbound::Peer {
                to: peer,
                update: PeerUpdate { delegation: delegation.clone(), kind },
            });
        }
    }

    fn charge(&mut self, payer: &RegistrarId, number: &E164Number, cause: ChargeCause) {
        self.billing_ledger.push(LedgerEntry {
            payer: payer.clone(),
            amount: self.flat_fee,
            number: number.clone(),
            cause,
        });
    }

    fn owned(&self, number: &E164Number) -> Result<&Delegation, RegistryError> {
        let d = self
            .delegations
            .get(number)
            .ok_or_else(|| RegistryError::NoDelegation(number.clone()))?;
        if d.owning_registry != self.id {
            return Err(RegistryError::NotAuthoritative {
                registry: self.id.clone(),
                number: number.clone(),
            });
        }
        Ok(d)
    }

    /// Creates or replaces the delegation for `number`, charging `payer` one
    /// flat fee.
    pub fn register_delegation(
        &mut self,
        number: &E164Number,
        registrar: &RegistrarId,
        payer: &RegistrarId,
    ) -> Result<Delegation, RegistryError> {
        if !self.accredited.contains(registrar) {
            return Err(RegistryError::UnaccreditedRegistrar(registrar.clone()));
        }
        let not_authoritative = || RegistryError::NotAuthoritative {
            registry: self.id.clone(),
            number: number.clone(),
        };
        if !self.serves(number) {
            return Err(not_authoritative());
        }
        let kind = match self.delegations.get(number) {
            Some(d) if d.owning_registry != self.id => return Err(not_authoritative()),
            Some(_) => UpdateKind::Changed,
            None => UpdateKind::Created,
        };
        let delegation = Delegation {
            number: number.clone(),
            registrar: registrar.clone(),
            owning_registry: self.id.clone(),
            serial: self.known_serial(number) + 1,
            updated_at: self.clock,
        };
        self.tombstones.remove(number);
        self.delegations.insert(number.clone(), delegation.clone());
        self.record_serial(number, delegation.serial);
        self.charge(payer, number, ChargeCause::Registration);
        self.broadcast(&delegation, kind);
        Ok(delegation)
    }

    pub fn lookup_delegation(&self, number: &E164Number) -> Result<&Delegation, RegistryError> {
        self.delegations
            .get(number)
            .ok_or_else(|| RegistryError::NoDelegation(number.clone()))
    }

    fn repoint(
        &mut self,
        number: &E164Number,
        new_registrar: &RegistrarId,
        old_registrar: &RegistrarId,
        fee: bool,
    ) -> Result<Delegation, RegistryError> {
        let current = self.owned(number)?.clone();
        if &current.registrar != old_registrar {
            return Err(RegistryError::StaleOldRegistrar {
                number: number.clone(),
                claimed: old_registrar.clone(),
                actual: current.registrar,
            });
        }
        if !self.accredited.contains(new_registrar) {
            return Err(RegistryError::UnaccreditedRegistrar(new_registrar.clone()));
        }
        let delegation = Delegation {
            registrar: new_registrar.clone(),
            serial: current.serial + 1,
            updated_at: self.clock,
            ..current
        };
        self.delegations.insert(number.clone(), delegation.clone());
        self.record_serial(number, delegation.serial);
        if fee {
            self.charge(new_registrar, number, ChargeCause::Transfer);
        }
        self.outbox.push(Outbound::Notice(Notice {
            to: old_registrar.clone(),
            number: number.clone(),
            new_registrar: new_registrar.clone(),
            serial: delegation.serial,
        }));
        self.broadcast(&delegation, UpdateKind::Changed);
        Ok(delegation)
    }

    /// Points `number` at `new_registrar`, charging it the flat fee and
    /// queueing a notice for `old_registrar`.
    pub fn notify_registrar_change(
        &mut self,
        number: &E164Number,
        new_registrar: &RegistrarId,
        old_registrar: &RegistrarId,
    ) -> Result<Delegation, RegistryError> {
        self.repoint(number, new_registrar, old_registrar, true)
    }

    /// Undoes a registrar change after a dispute. Not billed.
    pub fn rollback_registrar_change(
        &mut self,
        number: &E164Number,
        restore_to: &RegistrarId,
        current: &RegistrarId,
    ) -> Result<Delegation, RegistryError> {
        self.repoint(number, restore_to, current, false)
    }

    /// Withdraws the delegation. Only the current registrar may do this.
    pub fn remove_delegation(
        &mut self,
        number: &E164Number,
        registrar: &RegistrarId,
    ) -> Result<Delegation, RegistryError> {
        let current = self.owned(number)?.clone();
        if &current.registrar != registrar {
            return Err(RegistryError::StaleOldRegistrar {
                number: number.clone(),
                claimed: registrar.clone(),
                actual: current.registrar,
            });
        }
        let removed = Delegation {
            serial: current.serial + 1,
            updated_at: self.clock,
            ..current
        };
        self.delegations.remove(number);
        self.tombstones.insert(number.clone(), removed.serial);
        self.record_serial(number, removed.serial);
        self.broadcast(&removed, UpdateKind::Removed);
        Ok(removed)
    }

    /// Applies updates pushed by peers; anything not newer than the local
    /// copy is ignored. Returns how many were applied.
    pub fn peer_sync(&mut self, updates: &[PeerUpdate]) -> Result<usize, RegistryError> {
        if let Some(u) = updates
            .iter()
            .find(|u| !self.peers.contains(&u.delegation.owning_registry))
        {
            return Err(RegistryError::UnknownPeer(u.delegation.owning_registry.clone()));
        }
        let mut applied = 0;
        for u in updates {
            let d = &u.delegation;
            if d.serial <= self.known_serial(&d.number) {
                continue;
            }
            match u.kind {
                UpdateKind::Removed => {
                    self.delegations.remove(&d.number);
                    self.tombstones.insert(d.number.clone(), d.serial);
                }
                UpdateKind::Created | UpdateKind::Changed => {
                    self.tombstones.remove(&d.number);
                    self.delegations.insert(d.number.clone(), d.clone());
                }
            }
            self.record_serial(&d.number, d.serial);
            applied += 1;
        }
        Ok(applied)
    }

    /// Wire entry point.
    pub fn handle(&mut self, req: &Frame) -> Frame {
        match self.dispatch(req) {
            Ok(resp) => resp,
            Err(e) => Frame::error(e.code(), &e),
        }
    }

    fn dispatch(&mut self, req: &Frame) -> Result<Frame, RegistryError> {
        let number = || parse_digits(req.require("number")?);
        let party = |key: &str| -> Result<PartyId, RegistryError> { Ok(req.require(key)?.into()) };
        let delegation_resp = |d: &Delegation| {
            let mut f = Frame::ok();
            d.write_fields(&mut f);
            f
        };
        match req.kind {
            FrameKind::Lookup => Ok(delegation_resp(self.lookup_delegation(&number()?)?)),
            FrameKind::Register => {
                let payer = req.get("payer").map(PartyId::from);
                let registrar = party("registrar")?;
                let d = self.register_delegation(
                    &number()?,
                    &registrar,
                    payer.as_ref().unwrap_or(&registrar),
                )?;
                Ok(delegation_resp(&d))
            }
            FrameKind::Change => {
                let (n, new, old) = (number()?, party("new")?, party("old")?);
                let d = if req.get("rollback") == Some("1") {
                    self.rollback_registrar_change(&n, &new, &old)?
                } else {
                    self.notify_registrar_change(&n, &new, &old)?
                };
                Ok(delegation_resp(&d))
            }
            FrameKind::Remove => {
                let d = self.remove_delegation(&number()?, &party("registrar")?)?;
                Ok(delegation_resp(&d))
            }
            FrameKind::PeerUpdate => {
                let n = self.peer_sync(&[PeerUpdate::from_frame(req)?])?;
                Ok(Frame::ok().with("applied", n))
            }
            other => Err(RegistryError::BadRequest(format!("registry cannot handle {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(d: &str) -> E164Number {
        E164Number::from_digits(d).unwrap()
    }

    fn p(s: &str) -> PartyId {
        PartyId::from(s)
    }

    fn registry(id: &str, peers: &[&str]) -> RegistryState {
        RegistryState::new(id, 1.0)
            .serving(&["1", "44"])
            .accrediting(&["T2a", "T2b"])
            .peering(peers)
    }

    fn peer_updates(r: &mut RegistryState) -> Vec<PeerUpdate> {
        r.take_outbox()
            .into_iter()
            .filter_map(|o| match o {
                Outbound::Peer { update, .. } => Some(update),
                Outbound::Notice(_) => None,
            })
            .collect()
    }

    #[test]
    fn tier0_examples() {
        let single = Tier0Table::default().with("1", &["R1"]);
        assert_eq!(tier0_discover("1", &single).unwrap(), vec![RegistryId::from("R1")]);
        let multi = Tier0Table::default().with("1", &["R1", "R2"]);
        assert_eq!(
            tier0_discover("1", &multi).unwrap(),
            vec![RegistryId::from("R1"), RegistryId::from("R2")]
        );
        assert!(matches!(
            tier0_discover("7", &single),
            Err(RegistryError::UnknownCountryCode(_))
        ));
        let split = Tier0Table::default().with("1", &["R1"]).with("1315", &["R9"]);
        assert_eq!(tier0_discover("13154434473", &split).unwrap(), vec![RegistryId::from("R9")]);
        assert_eq!(tier0_discover("12125550100", &split).unwrap(), vec![RegistryId::from("R1")]);
    }

    #[test]
    fn fresh_registration() {
        let mut r = registry("R1", &[]);
        let d = r.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        assert_eq!(d.serial, 1);
        assert_eq!(d.registrar, p("T2a"));
        assert_eq!(r.billing_ledger.len(), 1);
        assert_eq!(r.ledger_total(), 1.0);
        assert!(r.take_outbox().is_empty());
    }

    #[test]
    fn repeated_registration_bumps_serial_and_bills_twice() {
        let mut r = registry("R1", &[]);
        r.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        let d = r.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        assert_eq!(d.serial, 2);
        assert_eq!(r.billing_ledger.len(), 2);
    }

    #[test]
    fn unaccredited_and_unserved() {
        let mut r = registry("R1", &[]);
        assert_eq!(
            r.register_delegation(&n("13154434473"), &p("X"), &p("X")),
            Err(RegistryError::UnaccreditedRegistrar(p("X")))
        );
        assert!(matches!(
            r.register_delegation(&n("4930123456"), &p("T2a"), &p("T2a")),
            Err(RegistryError::NotAuthoritative { .. })
        ));
    }

    #[test]
    fn lookup() {
        let mut r = registry("R1", &[]);
        assert!(matches!(r.lookup_delegation(&n("13154434473")), Err(RegistryError::NoDelegation(_))));
        r.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        assert_eq!(r.lookup_delegation(&n("13154434473")).unwrap().registrar, p("T2a"));
    }

    #[test]
    fn registrar_change_from_serial_three() {
        let mut r = registry("R1", &[]);
        let num = n("13154434473");
        for _ in 0..3 {
            r.register_delegation(&num, &p("T2a"), &p("T2a")).unwrap();
        }
        r.take_outbox();
        let d = r.notify_registrar_change(&num, &p("T2b"), &p("T2a")).unwrap();
        assert_eq!(d.serial, 4);
        assert_eq!(d.registrar, p("T2b"));
        let out = r.take_outbox();
        assert_eq!(
            out,
            vec![Outbound::Notice(Notice {
                to: p("T2a"),
                number: num.clone(),
                new_registrar: p("T2b"),
                serial: 4
            })]
        );
        assert_eq!(r.billing_ledger.len(), 4);
        assert_eq!(r.billing_ledger[3].cause, ChargeCause::Transfer);
        assert_eq!(r.billing_ledger[3].payer, p("T2b"));
    }

    #[test]
    fn stale_old_registrar() {
        let mut r = registry("R1", &[]);
        let num = n("13154434473");
        r.register_delegation(&num, &p("T2a"), &p("T2a")).unwrap();
        assert!(matches!(
            r.notify_registrar_change(&num, &p("T2b"), &p("T2b")),
            Err(RegistryError::StaleOldRegistrar { .. })
        ));
        assert!(matches!(
            r.notify_registrar_change(&n("4420794600"), &p("T2b"), &p("T2a")),
            Err(RegistryError::NoDelegation(_))
        ));
    }

    #[test]
    fn change_propagates_to_peer() {
        let mut r1 = registry("R1", &["R2"]);
        let mut r2 = registry("R2", &["R1"]);
        let num = n("13154434473");
        r1.register_delegation(&num, &p("T2a"), &p("T2a")).unwrap();
        r1.notify_registrar_change(&num, &p("T2b"), &p("T2a")).unwrap();
        let ups = peer_updates(&mut r1);
        assert_eq!(r2.peer_sync(&ups).unwrap(), 2);
        assert_eq!(r2.lookup_delegation(&num).unwrap(), r1.lookup_delegation(&num).unwrap());
        assert_eq!(r2.lookup_delegation(&num).unwrap().registrar, p("T2b"));
        // replicas are read-only
        assert!(matches!(
            r2.notify_registrar_change(&num, &p("T2a"), &p("T2b")),
            Err(RegistryError::NotAuthoritative { .. })
        ));
        assert!(matches!(
            r2.register_delegation(&num, &p("T2a"), &p("T2a")),
            Err(RegistryError::NotAuthoritative { .. })
        ));
    }

    #[test]
    fn peer_sync_is_idempotent() {
        let mut r1 = registry("R1", &["R2"]);
        let mut r2 = registry("R2", &["R1"]);
        r1.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        let ups = peer_updates(&mut r1);
        assert_eq!(r2.peer_sync(&ups).unwrap(), 1);
        assert_eq!(r2.peer_sync(&ups).unwrap(), 0);
    }

    #[test]
    fn peer_sync_rejects_strangers() {
        let mut r1 = registry("R1", &["R3"]);
        let mut r2 = registry("R2", &["R3"]);
        r1.register_delegation(&n("13154434473"), &p("T2a"), &p("T2a")).unwrap();
        let ups = peer_updates(&mut r1);
        assert_eq!(r2.peer_sync(&ups), Err(RegistryError::UnknownPeer(RegistryId::from("R1"))));
    }

    #[test]
    fn removal_leaves_a_tombstone() {
        let mut r1 = registry("R1", &["R2"]);
        let mut r2 = registry("R2", &["R1"]);
        let num = n("13154434473");
        r1.register_delegation(&num, &p("T2a"), &p("T2a")).unwrap();
        let removed = r1.remove_delegation(&num, &p("T2a")).unwrap();
        assert_eq!(removed.serial, 2);
        r2.peer_sync(&peer_updates(&mut r1)).unwrap();
        assert!(r2.lookup_delegation(&num).is_err());
        assert_eq!(r2.known_serial(&num), 2);
        // re-registration continues the serial sequence, at either registry
        let again = r2.register_delegation(&num, &p("T2b"), &p("T2b")).unwrap();
        assert_eq!(again.serial, 3);
        assert_eq!(r2.serial_history[&num], vec![1, 2, 3]);
    }

    #[test]
    fn wire_round_trip() {
        let mut r = registry("R1", &[]);
        let resp = r.handle(
            &Frame::new(FrameKind::Register)
                .with("number", "13154434473")
                .with("registrar", "T2a"),
        );
        assert!(resp.is_ok());
        assert_eq!(Delegation::from_fields(&resp).unwrap().serial, 1);
        let resp = r.handle(&Frame::new(FrameKind::Lookup).with("number", "4420"));
        assert_eq!(resp.error_code().unwrap().0, ErrorCode::NoDelegation);
        let resp = r.handle(&Frame::new(FrameKind::Get));
        assert_eq!(resp.error_code().unwrap().0, ErrorCode::BadRequest);
    }
}
