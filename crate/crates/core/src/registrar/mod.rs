//! Tier-2 registrar: hosts every NAPTR record of the numbers it serves and
//! enforces who may change or read them.

pub mod access;
pub mod subscription;
pub mod transfer;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::e164::E164Number;
use crate::ids::{GrantId, PartyId, RegistrarId, RegistrarKind, RegistryId, TransferId};
use crate::naptr::{NaptrError, NaptrRecord, NaptrRecordSet, ServiceSelector, Visibility};
use crate::wire::{ErrorCode, Frame, FrameKind, WireError};

pub use access::{AccessCheck, AccessPolicy, AuthorizationGrant, Customer, Right, Rights};
pub use subscription::{DisconnectKind, Subscription};
pub use transfer::{is_valid_history, TransferRecord, TransferState, TransferStepError};

/// Party id used on the wire for unauthenticated readers.
pub const ANONYMOUS: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrarError {
    #[error("{actor} may not write {service} records")]
    AccessDenied { actor: PartyId, service: String },
    #[error("ENUM is not active for {0} here")]
    EnumInactive(E164Number),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{actor} is not the subscriber of {number}")]
    NotSubscriber { actor: PartyId, number: E164Number },
    #[error("no grant {0}")]
    UnknownGrant(GrantId),
    #[error("no transfer {0}")]
    UnknownTransfer(TransferId),
    #[error("transfer {0} already complete")]
    AlreadyComplete(TransferId),
    #[error("{0} already serves this number")]
    SameRegistrar(RegistrarId),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl RegistrarError {
    pub fn code(&self) -> ErrorCode {
        match self {
            RegistrarError::AccessDenied { .. } => ErrorCode::AccessDenied,
            RegistrarError::EnumInactive(_) => ErrorCode::EnumInactive,
            RegistrarError::InvalidRecord(_) => ErrorCode::InvalidRecord,
            RegistrarError::NotSubscriber { .. } => ErrorCode::NotSubscriber,
            RegistrarError::UnknownGrant(_) => ErrorCode::UnknownGrant,
            RegistrarError::UnknownTransfer(_) => ErrorCode::UnknownTransfer,
            RegistrarError::AlreadyComplete(_) => ErrorCode::AlreadyComplete,
            RegistrarError::SameRegistrar(_) => ErrorCode::SameRegistrar,
            RegistrarError::BadRequest(_) => ErrorCode::BadRequest,
        }
    }
}

impl From<WireError> for RegistrarError {
    fn from(e: WireError) -> Self {
        RegistrarError::BadRequest(e.to_string())
    }
}

impl From<NaptrError> for RegistrarError {
    fn from(e: NaptrError) -> Self {
        RegistrarError::InvalidRecord(e.to_string())
    }
}

/// Renders records one per line as `<visibility> <zone line>`.
pub fn encode_records<'a>(records: impl IntoIterator<Item = &'a NaptrRecord>) -> String {
    records
        .into_iter()
        .map(|r| format!("{} {}", r.visibility, r.zone_line()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`encode_records`]. A line without a visibility word is public.
pub fn decode_records(text: &str) -> Result<Vec<NaptrRecord>, NaptrError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(decode_record_line)
        .collect()
}

pub fn decode_record_line(line: &str) -> Result<NaptrRecord, NaptrError> {
    let line = line.trim();
    let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
    match word.parse::<Visibility>() {
        Ok(v) => Ok(rest.parse::<NaptrRecord>()?.with_visibility(v)),
        Err(_) => line.parse(),
    }
}

#[derive(Debug, Clone)]
pub struct Registrar {
    pub id: RegistrarId,
    pub kind: RegistrarKind,
    pub home_registry: RegistryId,
    pub policy: AccessPolicy,
    pub customers: BTreeMap<E164Number, Customer>,
    pub records: BTreeMap<E164Number, NaptrRecordSet>,
    pub grants: BTreeMap<GrantId, AuthorizationGrant>,
    /// Transfers this registrar initiated as the new registrar.
    pub transfers: BTreeMap<TransferId, TransferRecord>,
    /// Change notices received, as (number, new registrar).
    pub notices: Vec<(E164Number, RegistrarId)>,
}

impl Registrar {
    pub fn new(
        id: impl Into<RegistrarId>,
        kind: RegistrarKind,
        home_registry: impl Into<RegistryId>,
        policy: AccessPolicy,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            home_registry: home_registry.into(),
            policy,
            customers: BTreeMap::new(),
            records: BTreeMap::new(),
            grants: BTreeMap::new(),
            transfers: BTreeMap::new(),
            notices: Vec::new(),
        }
    }

    pub fn serves(&self, number: &E164Number) -> bool {
        self.customers.contains_key(number)
    }

    fn customer(&self, number: &E164Number) -> Result<&Customer, RegistrarError> {
        self.customers
            .get(number)
            .ok_or_else(|| RegistrarError::EnumInactive(number.clone()))
    }

    fn grants_for<'a>(&'a self, number: &'a E164Number) -> impl Iterator<Item = &'a AuthorizationGrant> + 'a {
        self.grants.values().filter(move |g| &g.number == number)
    }

    /// Accepts `number` as a customer. An existing record set is kept.
    pub fn accept(&mut self, number: &E164Number, customer: Customer) {
        self.customers.insert(number.clone(), customer);
        self.records
            .entry(number.clone())
            .or_insert_with(|| NaptrRecordSet::new(number.clone()));
    }

    pub fn may_write(&self, actor: &PartyId, number: &E164Number, service: &str) -> bool {
        let Some(customer) = self.customers.get(number) else {
            return false;
        };
        let check = AccessCheck { registrar: &self.id, customer, policy: &self.policy, number };
        check.may_write(actor, service, self.grants_for(number))
    }

    /// Merges `records` into the number's set. All or nothing: one denied
    /// record rejects the whole request.
    pub fn provision(
        &mut self,
        actor: &PartyId,
        number: &E164Number,
        records: Vec<NaptrRecord>,
    ) -> Result<&NaptrRecordSet, RegistrarError> {
        self.customer(number)?;
        if let Some(r) = records.iter().find(|r| !self.may_write(actor, number, &r.service)) {
            return Err(RegistrarError::AccessDenied { actor: actor.clone(), service: r.service.clone() });
        }
        let set = self
            .records
            .entry(number.clone())
            .or_insert_with(|| NaptrRecordSet::new(number.clone()));
        for r in records {
            set.merge(r);
        }
        Ok(set)
    }

    /// The records `actor` may see, in stored order. `None` is an anonymous
    /// reader.
    pub fn get_records(
        &self,
        actor: Option<&PartyId>,
        number: &E164Number,
        sel: &ServiceSelector,
    ) -> NaptrRecordSet {
        let mut view = NaptrRecordSet::new(number.clone());
        let (Some(set), Some(customer)) = (self.records.get(number), self.customers.get(number)) else {
            return view;
        };
        let check = AccessCheck { registrar: &self.id, customer, policy: &self.policy, number };
        view.records = set
            .records
            .iter()
            .filter(|r| sel.matches(&r.service))
            .filter(|r| {
                r.visibility == Visibility::Public
                    || actor.is_some_and(|a| check.may_read_restricted(a, &r.service, self.grants_for(number)))
            })
            .cloned()
            .collect();
        view
    }

    pub fn grant(
        &mut self,
        id: GrantId,
        user: &PartyId,
        grantee: &PartyId,
        rights: Rights,
        scope: ServiceSelector,
        number: &E164Number,
    ) -> Result<AuthorizationGrant, RegistrarError> {
        match self.customers.get(number) {
            Some(c) if &c.user == user => {}
            _ => {
                return Err(RegistrarError::NotSubscriber { actor: user.clone(), number: number.clone() });
            }
        }
        if rights.is_empty() {
            return Err(RegistrarError::BadRequest("grant carries no rights".into()));
        }
        if self.grants.contains_key(&id) {
            return Err(RegistrarError::BadRequest(format!("duplicate grant id {id}")));
        }
        let g = AuthorizationGrant {
            id: id.clone(),
            grantor: user.clone(),
            grantee: grantee.clone(),
            rights,
            scope,
            number: number.clone(),
        };
        self.grants.insert(id, g.clone());
        Ok(g)
    }

    pub fn revoke(&mut self, user: &PartyId, id: &GrantId) -> Result<AuthorizationGrant, RegistrarError> {
        let g = self.grants.get(id).ok_or_else(|| RegistrarError::UnknownGrant(id.clone()))?;
        if &g.grantor != user {
            return Err(RegistrarError::NotSubscriber { actor: user.clone(), number: g.number.clone() });
        }
        Ok(self.grants.remove(id).expect("checked above"))
    }

    /// Copy of the number's full set, for migration to another registrar.
    pub fn export(&self, number: &E164Number) -> NaptrRecordSet {
        self.records
            .get(number)
            .cloned()
            .unwrap_or_else(|| NaptrRecordSet::new(number.clone()))
    }

    /// Drops all state for `number`. Returns how many records were held.
    pub fn purge(&mut self, number: &E164Number) -> usize {
        self.customers.remove(number);
        self.grants.retain(|_, g| &g.number != number);
        self.records.remove(number).map_or(0, |s| s.len())
    }

    pub fn begin_transfer(
        &mut self,
        id: TransferId,
        number: &E164Number,
        user: &PartyId,
        from: &RegistrarId,
    ) -> Result<&TransferRecord, RegistrarError> {
        if from == &self.id {
            return Err(RegistrarError::SameRegistrar(self.id.clone()));
        }
        if self.transfers.contains_key(&id) {
            return Err(RegistrarError::BadRequest(format!("duplicate transfer id {id}")));
        }
        let t = TransferRecord::new(id.clone(), number.clone(), user.clone(), from.clone(), self.id.clone());
        Ok(self.transfers.entry(id).or_insert(t))
    }

    /// Stages the set pulled from the old registrar. It stays out of the
    /// live store until [`Registrar::activate`].
    pub fn import(&mut self, id: &TransferId, set: NaptrRecordSet) -> Result<(), RegistrarError> {
        let t = self
            .transfers
            .get_mut(id)
            .ok_or_else(|| RegistrarError::UnknownTransfer(id.clone()))?;
        t.migrated_records = set;
        Ok(())
    }

    /// Puts a transfer's staged records live and takes on the customer.
    pub fn activate(&mut self, id: &TransferId, customer: Customer) -> Result<(), RegistrarError> {
        let t = self
            .transfers
            .get(id)
            .ok_or_else(|| RegistrarError::UnknownTransfer(id.clone()))?;
        let (number, set) = (t.number.clone(), t.migrated_records.clone());
        self.customers.insert(number.clone(), customer);
        self.records.insert(number, set);
        Ok(())
    }

    pub fn advance_transfer(&mut self, id: &TransferId, to: TransferState) -> Result<(), RegistrarError> {
        let t = self
            .transfers
            .get_mut(id)
            .ok_or_else(|| RegistrarError::UnknownTransfer(id.clone()))?;
        t.advance(to).map_err(|e| match e {
            TransferStepError::AlreadyComplete => RegistrarError::AlreadyComplete(id.clone()),
            other => RegistrarError::BadRequest(format!("{other:?}")),
        })
    }

    /// Marks the transfer disputed and discards the staged records.
    /// Returns the state the transfer was in.
    pub fn dispute(
        &mut self,
        id: &TransferId,
        from: &RegistrarId,
        reason: &str,
    ) -> Result<TransferState, RegistrarError> {
        let t = self
            .transfers
            .get_mut(id)
            .ok_or_else(|| RegistrarError::UnknownTransfer(id.clone()))?;
        if &t.from_registrar != from {
            return Err(RegistrarError::BadRequest(format!("{from} is not the old registrar of {id}")));
        }
        let prior = t.dispute(reason).map_err(|e| match e {
            TransferStepError::AlreadyComplete => RegistrarError::AlreadyComplete(id.clone()),
            other => RegistrarError::BadRequest(format!("{other:?}")),
        })?;
        t.migrated_records.records.clear();
        Ok(prior)
    }

    /// Wire entry point.
    pub fn handle(&mut self, req: &Frame) -> Frame {
        match self.dispatch(req) {
            Ok(resp) => resp,
            Err(e) => Frame::error(e.code(), &e),
        }
    }

    fn dispatch(&mut self, req: &Frame) -> Result<Frame, RegistrarError> {
        let number = || -> Result<E164Number, RegistrarError> {
            let raw = req.require("number")?;
            E164Number::from_digits(raw).map_err(|e| RegistrarError::BadRequest(e.to_string()))
        };
        let party = |key: &str| -> Result<PartyId, RegistrarError> { Ok(req.require(key)?.into()) };
        match req.kind {
            FrameKind::Subscribe => {
                let customer = Customer { user: party("user")?, tsp: party("tsp")? };
                self.accept(&number()?, customer);
                Ok(Frame::ok())
            }
            FrameKind::Provision => {
                let records = decode_records(req.require("records")?)?;
                let set = self.provision(&party("actor")?, &number()?, records)?;
                Ok(Frame::ok().with("count", set.len()))
            }
            FrameKind::Get => {
                let n = number()?;
                self.customer(&n)?;
                let actor = req.get("actor").filter(|a| *a != ANONYMOUS).map(PartyId::from);
                let sel: ServiceSelector = req
                    .get("service")
                    .unwrap_or("*")
                    .parse()
                    .map_err(|e: NaptrError| RegistrarError::BadRequest(e.to_string()))?;
                let view = self.get_records(actor.as_ref(), &n, &sel);
                Ok(Frame::ok().with("records", encode_records(&view.records)))
            }
            FrameKind::Grant => {
                let rights: Rights = req.require("rights")?.parse().map_err(RegistrarError::BadRequest)?;
                let scope: ServiceSelector = req
                    .require("scope")?
                    .parse()
                    .map_err(|e: NaptrError| RegistrarError::BadRequest(e.to_string()))?;
                let g = self.grant(
                    req.require("id")?.into(),
                    &party("user")?,
                    &party("grantee")?,
                    rights,
                    scope,
                    &number()?,
                )?;
                Ok(Frame::ok().with("id", g.id))
            }
            FrameKind::Revoke => {
                let g = self.revoke(&party("user")?, &req.require("id")?.into())?;
                Ok(Frame::ok().with("id", g.id))
            }
            FrameKind::TransferInit => {
                let t = self.begin_transfer(
                    req.require("id")?.into(),
                    &number()?,
                    &party("user")?,
                    &party("from")?,
                )?;
                Ok(Frame::ok().with("state", t.state))
            }
            FrameKind::TransferDispute => {
                let id: TransferId = req.require("id")?.into();
                let prior = self.dispute(&id, &party("from")?, req.get("reason").unwrap_or_default())?;
                let rollback = prior == TransferState::RegistryUpdated;
                Ok(Frame::ok().with("prior", prior).with("rollback", u8::from(rollback)))
            }
            FrameKind::Disconnect | FrameKind::Release => {
                let purged = self.purge(&number()?);
                Ok(Frame::ok().with("purged", purged))
            }
            FrameKind::MigrateReq => {
                let set = self.export(&number()?);
                Ok(Frame::new(FrameKind::MigrateResp)
                    .with("status", "ok")
                    .with("records", encode_records(&set.records)))
            }
            FrameKind::Notice => {
                self.notices.push((number()?, party("registrar")?));
                Ok(Frame::ok())
            }
            other => Err(RegistrarError::BadRequest(format!("registrar does not handle {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naptr::{resolve_record_set, Requester};

    fn num() -> E164Number {
        E164Number::from_digits("13154434473").unwrap()
    }

    fn sip() -> NaptrRecord {
        "100 10 \"u\" \"E2U+sip\" \"!^.*$!sip:info@example.com!\" .".parse().unwrap()
    }

    fn mailto() -> NaptrRecord {
        "100 20 \"u\" \"E2U+mailto\" \"!^.*$!mailto:info@example.com!\" .".parse().unwrap()
    }

    fn tsp_registrar() -> Registrar {
        let mut r = Registrar::new("TSP-A", RegistrarKind::Tsp, "R1", AccessPolicy::new(true, ["E2U+sip", "E2U+tel"]));
        r.accept(&num(), Customer { user: "U1".into(), tsp: "TSP-A".into() });
        r
    }

    #[test]
    fn user_provisions_own_record() {
        let mut r = tsp_registrar();
        let set = r.provision(&"U1".into(), &num(), vec![sip()]).unwrap();
        assert_eq!(set.records, vec![sip()]);
    }

    #[test]
    fn provision_requires_active_enum() {
        let mut r = tsp_registrar();
        let other = E164Number::from_digits("442079460018").unwrap();
        assert_eq!(
            r.provision(&"U1".into(), &other, vec![sip()]),
            Err(RegistrarError::EnumInactive(other))
        );
    }

    #[test]
    fn asp_without_grant_is_denied() {
        let mut r = tsp_registrar();
        let err = r.provision(&"ASP-X".into(), &num(), vec![mailto()]).unwrap_err();
        assert_eq!(err.code(), ErrorCode::AccessDenied);
    }

    #[test]
    fn grant_then_revoke() {
        let mut r = tsp_registrar();
        let asp = PartyId::from("ASP-X");
        r.grant("G1".into(), &"U1".into(), &asp, "provision".parse().unwrap(), ServiceSelector::service("E2U+mailto"), &num())
            .unwrap();
        assert!(r.provision(&asp, &num(), vec![mailto()]).is_ok());
        assert!(r.provision(&asp, &num(), vec![sip()]).is_err());
        r.revoke(&"U1".into(), &"G1".into()).unwrap();
        assert!(r.provision(&asp, &num(), vec![mailto()]).is_err());
        assert_eq!(r.revoke(&"U1".into(), &"G1".into()), Err(RegistrarError::UnknownGrant("G1".into())));
    }

    #[test]
    fn grant_by_non_subscriber() {
        let mut r = tsp_registrar();
        let err = r
            .grant("G1".into(), &"U2".into(), &"ASP-X".into(), "access".parse().unwrap(), ServiceSelector::Any, &num())
            .unwrap_err();
        assert_eq!(err.code(), ErrorCode::NotSubscriber);
    }

    #[test]
    fn implicit_tsp_grant_for_network_services() {
        let mut r = tsp_registrar();
        r.customers.insert(num(), Customer { user: "U1".into(), tsp: "TSP-B".into() });
        assert!(r.provision(&"TSP-B".into(), &num(), vec![sip()]).is_ok());
        assert!(r.provision(&"TSP-B".into(), &num(), vec![mailto()]).is_err());
    }

    #[test]
    fn restricted_records_need_access() {
        let mut r = tsp_registrar();
        let tel: NaptrRecord = "100 30 \"u\" \"E2U+tel\" \"!^(.*)$!tel:\\1!\" .".parse().unwrap();
        let tel = tel.with_visibility(Visibility::Restricted);
        r.provision(&"U1".into(), &num(), vec![sip(), tel.clone()]).unwrap();
        let anon = r.get_records(None, &num(), &ServiceSelector::Any);
        assert_eq!(anon.records, vec![sip()]);
        let asp = PartyId::from("ASP-Y");
        assert_eq!(r.get_records(Some(&asp), &num(), &ServiceSelector::Any).len(), 1);
        r.grant("G1".into(), &"U1".into(), &asp, "access".parse().unwrap(), ServiceSelector::Any, &num())
            .unwrap();
        assert_eq!(r.get_records(Some(&asp), &num(), &ServiceSelector::Any).len(), 2);
        let empty = E164Number::from_digits("123").unwrap();
        assert!(r.get_records(None, &empty, &ServiceSelector::Any).is_empty());
        let res = resolve_record_set(&anon, &ServiceSelector::Any, Requester::Public);
        assert_eq!(res.uris, vec!["sip:info@example.com"]);
    }

    #[test]
    fn records_survive_frame_encoding() {
        let recs = vec![sip(), mailto().with_visibility(Visibility::Restricted)];
        let f = Frame::new(FrameKind::Provision).with("records", encode_records(&recs));
        let (back, _) = Frame::decode(&f.encode()).unwrap();
        assert_eq!(decode_records(back.get("records").unwrap()).unwrap(), recs);
    }

    #[test]
    fn wire_get_for_unknown_number() {
        let mut r = tsp_registrar();
        let resp = r.handle(&Frame::new(FrameKind::Get).with("number", "442079460018"));
        assert_eq!(resp.error_code().unwrap().0, ErrorCode::EnumInactive);
    }

    #[test]
    fn dispute_discards_staged_records() {
        let mut r = Registrar::new("REG-J", RegistrarKind::Independent, "R1", AccessPolicy::default());
        let id = TransferId::from("T1");
        r.begin_transfer(id.clone(), &num(), &"U1".into(), &"REG-I".into()).unwrap();
        assert_eq!(
            r.begin_transfer("T2".into(), &num(), &"U1".into(), &"REG-J".into()).unwrap_err(),
            RegistrarError::SameRegistrar("REG-J".into())
        );
        r.advance_transfer(&id, TransferState::OldNotified).unwrap();
        r.import(&id, NaptrRecordSet::with_records(num(), vec![sip()])).unwrap();
        r.advance_transfer(&id, TransferState::RecordsMigrated).unwrap();
        assert!(!r.serves(&num()));
        assert!(r.dispute(&id, &"REG-X".into(), "no").is_err());
        assert_eq!(r.dispute(&id, &"REG-I".into(), "mine").unwrap(), TransferState::RecordsMigrated);
        assert!(r.transfers[&id].migrated_records.is_empty() && r.records.is_empty());
        assert_eq!(r.dispute(&"T9".into(), &"REG-I".into(), ""), Err(RegistrarError::UnknownTransfer("T9".into())));
    }
}
