//! A running scenario: Tier-0, the registries, the registrars, the number
//! directory kept by the TSPs, and the network joining them.
//!
//! Every public operation is one logical step. Requests between actors are
//! encoded to wire frames, decoded on arrival and recorded as exchanges.
//! Messages that need no answer (change notices, release orders and peer
//! updates) are queued and delivered when the step ends.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::e164::{parse_number, CountryCodeTable, E164Number};
use crate::ids::{GrantId, PartyId, RegistrarId, RegistrarKind, RegistryId, Role, TransferId};
use crate::naptr::{NaptrRecord, NaptrRecordSet, ServiceSelector};
use crate::registrar::{
    decode_records, encode_records, AccessPolicy, AuthorizationGrant, Customer, DisconnectKind, Registrar,
    Rights, Subscription, TransferRecord, TransferState, ANONYMOUS,
};
use crate::registry::{tier0_discover, Outbound, RegistryState, Tier0Table};
use crate::scenario::config::{ConfigError, ScenarioConfig};
use crate::scenario::log::EventLog;
use crate::scenario::script::Proof;
use crate::sim::{Delivery, Network, TIER0};
use crate::wire::{ErrorCode, Frame, FrameKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyError {
    pub code: ErrorCode,
    pub detail: String,
}

impl TopologyError {
    pub fn new(code: ErrorCode, detail: impl fmt::Display) -> Self {
        Self { code, detail: detail.to_string() }
    }

    fn from_frame(frame: &Frame) -> Option<Self> {
        frame.error_code().map(|(code, detail)| Self { code, detail })
    }
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

impl std::error::Error for TopologyError {}

type OpResult<T> = Result<T, TopologyError>;

#[derive(Debug, Clone)]
pub struct Topology {
    pub(crate) config: ScenarioConfig,
    pub(crate) tier0: Tier0Table,
    pub(crate) cc_table: CountryCodeTable,
    pub registries: BTreeMap<RegistryId, RegistryState>,
    pub registrars: BTreeMap<RegistrarId, Registrar>,
    /// Number assignments as recorded by the TSPs.
    pub subscriptions: BTreeMap<E164Number, Subscription>,
    pub net: Network,
    pub log: EventLog,
    pub(crate) grant_index: BTreeMap<GrantId, E164Number>,
    pub(crate) transfer_index: BTreeMap<TransferId, RegistrarId>,
    /// The old registrar's set as of the last migration attempt.
    pub transfer_baselines: BTreeMap<TransferId, NaptrRecordSet>,
    pub(crate) next_grant: u64,
    pub(crate) next_transfer: u64,
    pub(crate) settled: bool,
}

impl Topology {
    pub fn build(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut tier0 = Tier0Table::new(config.apex()?);
        for (prefix, regs) in &config.tier0 {
            tier0.insert(prefix, regs.iter().map(|r| RegistryId::from(r.as_str())).collect());
        }
        let cc_table = CountryCodeTable::new(
            CountryCodeTable::default()
                .prefixes()
                .map(str::to_string)
                .chain(config.tier0.keys().cloned())
                .collect::<Vec<_>>(),
        );
        let mut registries = BTreeMap::new();
        for spec in &config.registries {
            let prefixes: Vec<&str> = config
                .tier0
                .iter()
                .filter(|(_, regs)| regs.contains(&spec.id))
                .map(|(p, _)| p.as_str())
                .collect();
            let peers: Vec<&str> = config
                .registries
                .iter()
                .filter(|other| other.id != spec.id)
                .filter(|other| config.tier0.values().any(|regs| regs.contains(&spec.id) && regs.contains(&other.id)))
                .map(|other| other.id.as_str())
                .collect();
            let accredit: Vec<&str> = spec.accredit.iter().map(String::as_str).collect();
            let state = RegistryState::new(spec.id.as_str(), config.fees.flat_fee)
                .serving(&prefixes)
                .accrediting(&accredit)
                .peering(&peers);
            registries.insert(state.id.clone(), state);
        }
        let policy = AccessPolicy::new(config.tsp_is_registrar(), &config.policy.network_related_services);
        let mut registrars = BTreeMap::new();
        for actor in &config.actors {
            let Some(kind) = actor.role.registrar_kind() else { continue };
            let home = actor.home_registry.clone().unwrap_or_else(|| config.registries[0].id.clone());
            let r = Registrar::new(actor.id.as_str(), kind, home, policy.clone());
            registrars.insert(r.id.clone(), r);
        }
        let net = Network::new(config.model.seed, config.faults());
        Ok(Self {
            config,
            tier0,
            cc_table,
            registries,
            registrars,
            subscriptions: BTreeMap::new(),
            net,
            log: EventLog::new(),
            grant_index: BTreeMap::new(),
            transfer_index: BTreeMap::new(),
            transfer_baselines: BTreeMap::new(),
            next_grant: 1,
            next_transfer: 1,
            settled: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn tier0(&self) -> &Tier0Table {
        &self.tier0
    }

    pub fn country_codes(&self) -> &CountryCodeTable {
        &self.cc_table
    }

    pub fn step(&self) -> u64 {
        self.net.step
    }

    /// True once [`Topology::settle`] has run and no operation came after.
    pub fn is_settled(&self) -> bool {
        self.settled
    }

    pub fn role_of(&self, actor: &str) -> Option<Role> {
        self.config.role_of(actor)
    }

    pub fn transfer_record(&self, id: &TransferId) -> Option<&TransferRecord> {
        let reg = self.transfer_index.get(id)?;
        self.registrars.get(reg)?.transfers.get(id)
    }

    /// All transfers in id order.
    pub fn transfers(&self) -> Vec<&TransferRecord> {
        let mut out: Vec<_> = self.registrars.values().flat_map(|r| r.transfers.values()).collect();
        out.sort_by_key(|t| (t.id.as_str().len(), t.id.as_str().to_string()));
        out
    }

    pub fn in_flight_transfers(&self) -> Vec<&TransferRecord> {
        self.transfers().into_iter().filter(|t| !t.state.is_final()).collect()
    }

    /// Recomputes the lookup tables that follow from registrar state.
    pub(crate) fn rebuild_indexes(&mut self) {
        self.grant_index.clear();
        self.transfer_index.clear();
        for r in self.registrars.values() {
            for g in r.grants.values() {
                self.grant_index.insert(g.id.clone(), g.number.clone());
            }
            for t in r.transfers.keys() {
                self.transfer_index.insert(t.clone(), r.id.clone());
            }
        }
    }

    // ---- stepping and transport ----

    pub(crate) fn begin_step(&mut self) {
        self.settled = false;
        self.net.step += 1;
        let step = self.net.step;
        for r in self.registries.values_mut() {
            r.clock = step;
        }
    }

    pub(crate) fn end_step(&mut self) {
        self.drain();
    }

    fn drain(&mut self) {
        loop {
            let (due, dropped) = self.net.take_due();
            for env in dropped {
                self.log.push(
                    self.net.step,
                    "drop",
                    [
                        ("from", env.from.clone()),
                        ("to", env.to.clone()),
                        ("msg", env.frame.kind.to_string()),
                        ("number", env.frame.get("number").unwrap_or_default().to_string()),
                    ],
                );
            }
            if due.is_empty() {
                break;
            }
            for env in due {
                let (resp, xid) = self.exchange(&env.from, &env.to, &env.frame);
                self.log.push(
                    self.net.step,
                    "deliver",
                    [
                        ("xid", xid.to_string()),
                        ("msg", env.frame.kind.to_string()),
                        ("sent", env.sent_at.to_string()),
                        ("status", resp.get("status").unwrap_or("?").to_string()),
                    ],
                );
            }
        }
    }

    /// Advances past every configured fault and delivers whatever is still
    /// queued.
    pub fn settle(&mut self) {
        let target = self.net.step.max(self.net.last_fault_step() + 1);
        let was = self.net.step;
        self.net.step = target;
        self.drain();
        self.log.push(
            self.net.step,
            "settle",
            [("from", was.to_string()), ("pending", self.net.pending().len().to_string())],
        );
        self.settled = true;
    }

    /// Sends `req` from `from` to `to`, retrying `retries` extra times when
    /// the recipient is offline. Returns the response and its exchange id.
    pub fn call_raw(&mut self, from: &str, to: &str, req: Frame, retries: u32) -> OpResult<(Frame, u64)> {
        for attempt in 0..=retries {
            if self.net.is_online(to) {
                return Ok(self.exchange(from, to, &req));
            }
            self.log.push(
                self.net.step,
                "timeout",
                [("from", from), ("to", to), ("req", req.kind.as_str()), ("attempt", &(attempt + 1).to_string())],
            );
        }
        Err(TopologyError::new(
            ErrorCode::Timeout,
            format!("{to} did not answer {} after {} attempt(s)", req.kind, retries + 1),
        ))
    }

    /// As [`Topology::call_raw`], turning error responses into errors.
    pub fn call(&mut self, from: &str, to: &str, req: Frame, retries: u32) -> OpResult<Frame> {
        let (resp, _) = self.call_raw(from, to, req, retries)?;
        match TopologyError::from_frame(&resp) {
            Some(e) => Err(e),
            None => Ok(resp),
        }
    }

    fn exchange(&mut self, from: &str, to: &str, req: &Frame) -> (Frame, u64) {
        let (req, _) = Frame::decode(&req.encode()).expect("frames round-trip");
        let resp = self.dispatch(from, to, &req);
        let (resp, _) = Frame::decode(&resp.encode()).expect("frames round-trip");
        let mut fields = vec![
            ("from".to_string(), from.to_string()),
            ("to".to_string(), to.to_string()),
            ("req".to_string(), req.kind.to_string()),
            ("status".to_string(), resp.get("status").unwrap_or("?").to_string()),
        ];
        if let Some(n) = req.get("number") {
            fields.push(("number".into(), n.to_string()));
        }
        if let Some((code, _)) = resp.error_code() {
            fields.push(("code".into(), code.to_string()));
        }
        if req.get("rollback") == Some("1") {
            fields.push(("rollback".into(), "1".into()));
        }
        let xid = self.net.record(from, to, req, resp.clone());
        fields.insert(0, ("xid".into(), xid.to_string()));
        self.log.push(self.net.step, "frame", fields);
        (resp, xid)
    }

    fn dispatch(&mut self, from: &str, to: &str, req: &Frame) -> Frame {
        if to == TIER0 {
            return self.tier0_handle(req);
        }
        if let Some(reg) = self.registries.get_mut(&RegistryId::from(to)) {
            let before = reg.billing_ledger.len();
            let resp = reg.handle(req);
            let new_charges: Vec<_> = reg.billing_ledger[before..].to_vec();
            let outbox = reg.take_outbox();
            let registry_id = reg.id.clone();
            for c in new_charges {
                self.log.push(
                    self.net.step,
                    "charge",
                    [
                        ("payer", c.payer.to_string()),
                        ("payee", registry_id.to_string()),
                        ("amount", c.amount.to_string()),
                        ("cause", c.cause.as_str().to_string()),
                        ("number", c.number.full_digits().to_string()),
                    ],
                );
            }
            for out in outbox {
                match out {
                    Outbound::Peer { to, update } => {
                        self.net.post(registry_id.as_str(), to.as_str(), update.to_frame(), Delivery::BestEffort);
                    }
                    Outbound::Notice(n) => {
                        let frame = n.to_frame(&registry_id);
                        self.net.post(registry_id.as_str(), n.to.as_str(), frame, Delivery::Durable);
                    }
                }
            }
            return resp;
        }
        if let Some(r) = self.registrars.get_mut(&RegistrarId::from(to)) {
            return r.handle(req);
        }
        Frame::error(ErrorCode::UnknownActor, format!("{to} (from {from})"))
    }

    fn tier0_handle(&self, req: &Frame) -> Frame {
        if req.kind != FrameKind::Discover {
            return Frame::error(ErrorCode::BadRequest, format!("tier0 cannot handle {}", req.kind));
        }
        let Some(digits) = req.get("number") else {
            return Frame::error(ErrorCode::BadRequest, "missing number");
        };
        match tier0_discover(digits, &self.tier0) {
            Ok(regs) => {
                let list: Vec<_> = regs.iter().map(|r| r.as_str()).collect();
                Frame::ok().with("registries", list.join(","))
            }
            Err(e) => Frame::error(e.code(), &e),
        }
    }

    // ---- helpers ----

    fn parse(&self, raw: &str) -> OpResult<E164Number> {
        parse_number(raw, None).map_err(|e| TopologyError::new(ErrorCode::InvalidNumber, e))
    }

    fn require_role(&self, actor: &str, allowed: &[Role]) -> OpResult<Role> {
        let role = self
            .role_of(actor)
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownActor, actor))?;
        if !allowed.contains(&role) {
            return Err(TopologyError::new(ErrorCode::BadRequest, format!("{actor} is a {role}")));
        }
        Ok(role)
    }

    fn check_registrar(&self, id: &str) -> OpResult<RegistrarKind> {
        let role = self
            .role_of(id)
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownActor, id))?;
        let kind = role.registrar_kind().ok_or_else(|| {
            TopologyError::new(ErrorCode::RegistrarKindForbidden, format!("{id} is a {role}, not a registrar"))
        })?;
        if !self.config.permitted_kinds().contains(&kind) {
            return Err(TopologyError::new(
                ErrorCode::RegistrarKindForbidden,
                format!("model {} does not admit {kind} registrars", self.config.model.id),
            ));
        }
        Ok(kind)
    }

    fn active_subscription(&self, n: &E164Number) -> OpResult<&Subscription> {
        self.subscriptions
            .get(n)
            .filter(|s| s.enum_active)
            .ok_or_else(|| TopologyError::new(ErrorCode::EnumInactive, n))
    }

    fn serving_registrar(&self, n: &E164Number) -> OpResult<RegistrarId> {
        Ok(self.active_subscription(n)?.serving_registrar.clone().expect("active implies serving"))
    }

    fn registries_for(&self, n: &E164Number) -> Vec<RegistryId> {
        tier0_discover(n.full_digits(), &self.tier0).unwrap_or_default()
    }

    /// Where `registrar` registers a fresh number: its home registry when
    /// that serves the number, else the first one Tier-0 lists.
    fn registration_target(&self, registrar: &RegistrarId, n: &E164Number) -> OpResult<RegistryId> {
        let candidates = self.registries_for(n);
        let home = &self.registrars[registrar].home_registry;
        if candidates.contains(home) {
            return Ok(home.clone());
        }
        candidates
            .into_iter()
            .next()
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownCountryCode, n))
    }

    /// Asks the registries serving `n`, home registry first, which one owns
    /// the delegation.
    fn find_owner(&mut self, from: &RegistrarId, n: &E164Number) -> OpResult<RegistryId> {
        let mut candidates = self.registries_for(n);
        if let Some(home) = self.registrars.get(from).map(|r| r.home_registry.clone()) {
            if let Some(i) = candidates.iter().position(|c| *c == home) {
                let h = candidates.remove(i);
                candidates.insert(0, h);
            }
        }
        let mut last = TopologyError::new(ErrorCode::UnknownCountryCode, n);
        for reg in candidates {
            let req = Frame::new(FrameKind::Lookup).with("number", n.full_digits());
            match self.call(from.as_str(), reg.as_str(), req, 1) {
                Ok(resp) => return Ok(resp.get("owner").unwrap_or(reg.as_str()).into()),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn event<T>(&mut self, kind: &str, mut fields: Vec<(String, String)>, result: &OpResult<T>) -> u64 {
        fields.insert(0, ("event".into(), kind.into()));
        match result {
            Ok(_) => fields.push(("status".into(), "ok".into())),
            Err(e) => {
                fields.push(("status".into(), "err".into()));
                fields.push(("code".into(), e.code.to_string()));
                fields.push(("detail".into(), e.detail.clone()));
            }
        }
        self.log.push(self.net.step, "event", fields)
    }

    fn charge(&mut self, payer: &str, payee: &str, amount: f64, cause: &str, number: &E164Number) {
        self.log.push(
            self.net.step,
            "charge",
            [
                ("payer", payer.to_string()),
                ("payee", payee.to_string()),
                ("amount", amount.to_string()),
                ("cause", cause.to_string()),
                ("number", number.full_digits().to_string()),
            ],
        );
    }

    fn digits_of(raw: &str) -> String {
        parse_number(raw, None).map(|n| n.full_digits().to_string()).unwrap_or_else(|_| raw.to_string())
    }

    fn fields(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn stepped<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        self.begin_step();
        let out = f(self);
        self.end_step();
        out
    }

    // ---- operations ----

    /// A TSP hands `number` to `user`, with a fresh proof-of-assignment
    /// token.
    pub fn assign(&mut self, user: &str, number: &str, tsp: &str) -> OpResult<Subscription> {
        self.stepped(|t| {
            let r = t.assign_inner(user, number, tsp);
            let token = r.as_ref().map(|s| s.token.clone()).unwrap_or_default();
            let digits = Self::digits_of(number);
            let f = Self::fields(&[("number", &digits), ("user", user), ("tsp", tsp), ("token", &token)]);
            t.event("assign", f, &r);
            r
        })
    }

    fn assign_inner(&mut self, user: &str, number: &str, tsp: &str) -> OpResult<Subscription> {
        let n = self.parse(number)?;
        self.require_role(user, &[Role::User])?;
        self.require_role(tsp, &[Role::Tsp])?;
        if self.subscriptions.get(&n).is_some_and(|s| s.phone_active) {
            return Err(TopologyError::new(ErrorCode::BadRequest, format!("{n} is already assigned")));
        }
        let token = format!("{:016x}", self.net.draw());
        let sub = Subscription::assigned(n.clone(), user.into(), tsp.into(), token);
        self.subscriptions.insert(n, sub.clone());
        Ok(sub)
    }

    pub fn subscribe(
        &mut self,
        user: &str,
        number: &str,
        registrar: &str,
        proof: &Proof,
        via: Option<&str>,
    ) -> OpResult<Subscription> {
        self.stepped(|t| {
            let r = t.subscribe_inner(user, number, registrar, proof, via);
            let digits = Self::digits_of(number);
            let tsp = r.as_ref().map(|s| s.tsp.to_string()).unwrap_or_default();
            let proof_text = proof.to_string();
            let f = Self::fields(&[
                ("number", &digits),
                ("user", user),
                ("tsp", &tsp),
                ("registrar", registrar),
                ("proof", &proof_text),
                ("via", via.unwrap_or("-")),
            ]);
            t.event("subscribe", f, &r);
            r
        })
    }

    fn subscribe_inner(
        &mut self,
        user: &str,
        number: &str,
        registrar: &str,
        proof: &Proof,
        via: Option<&str>,
    ) -> OpResult<Subscription> {
        let n = self.parse(number)?;
        let sub = self
            .subscriptions
            .get(&n)
            .filter(|s| s.phone_active)
            .cloned()
            .ok_or_else(|| TopologyError::new(ErrorCode::NoPhoneService, &n))?;
        self.check_registrar(registrar)?;
        if let Some(v) = via {
            self.require_role(v, &[Role::Asp])?;
        }
        if sub.enum_active {
            return Err(TopologyError::new(
                ErrorCode::BadRequest,
                format!("{n} already has ENUM at {}; transfer instead", sub.serving_registrar.unwrap()),
            ));
        }
        let verified = sub.user.as_str() == user
            && match proof {
                Proof::Auto => self.config.tsp_is_registrar() && sub.tsp.as_str() == registrar,
                Proof::Confirm => true,
                Proof::Token(t) => !sub.token.is_empty() && *t == sub.token,
            };
        if !verified {
            return Err(TopologyError::new(
                ErrorCode::VerificationFailed,
                format!("{user} could not prove {n} by {proof}"),
            ));
        }
        let registrar_id = RegistrarId::from(registrar);
        let target = self.registration_target(&registrar_id, &n)?;
        let reg_req = Frame::new(FrameKind::Register)
            .with("number", n.full_digits())
            .with("registrar", registrar)
            .with("payer", registrar);
        self.call(registrar, target.as_str(), reg_req, 0)?;
        let sub_req = Frame::new(FrameKind::Subscribe)
            .with("number", n.full_digits())
            .with("user", user)
            .with("tsp", &sub.tsp);
        self.call(user, registrar, sub_req, 0)?;
        let payer = match via {
            Some(asp) if self.config.tsp_is_registrar() => asp.to_string(),
            _ => user.to_string(),
        };
        let fee = self.config.fees.subscription_fee;
        self.charge(&payer, registrar, fee, "subscription", &n);
        let s = self.subscriptions.get_mut(&n).expect("checked above");
        s.activate_enum(registrar_id, via.map(PartyId::from));
        Ok(s.clone())
    }

    pub fn provision(&mut self, actor: &str, number: &str, records: Vec<NaptrRecord>) -> OpResult<NaptrRecordSet> {
        self.stepped(|t| {
            let services: Vec<_> = records.iter().map(|r| r.service.clone()).collect();
            let r = t.provision_inner(actor, number, records);
            let digits = Self::digits_of(number);
            let f = Self::fields(&[("number", &digits), ("actor", actor), ("services", &services.join(","))]);
            t.event("provision", f, &r);
            r
        })
    }

    fn provision_inner(&mut self, actor: &str, number: &str, records: Vec<NaptrRecord>) -> OpResult<NaptrRecordSet> {
        let n = self.parse(number)?;
        let registrar = self.serving_registrar(&n)?;
        let req = Frame::new(FrameKind::Provision)
            .with("number", n.full_digits())
            .with("actor", actor)
            .with("records", encode_records(&records));
        self.call(actor, registrar.as_str(), req, 0)?;
        for rec in &records {
            self.log_write(actor, &registrar, &n, rec, false);
        }
        Ok(self.registrars[&registrar].export(&n))
    }

    fn log_write(&mut self, actor: &str, registrar: &RegistrarId, n: &E164Number, rec: &NaptrRecord, unchecked: bool) {
        let mut f = Self::fields(&[
            ("actor", actor),
            ("registrar", registrar.as_str()),
            ("number", n.full_digits()),
            ("service", &rec.service),
        ]);
        if unchecked {
            f.push(("unchecked".into(), "1".into()));
        }
        self.log.push(self.net.step, "write", f);
    }

    /// Test hook: writes `record` at the serving registrar without any
    /// access check, logging it like an ordinary write.
    #[doc(hidden)]
    pub fn inject_unchecked_write(&mut self, actor: &str, number: &str, record: NaptrRecord) -> OpResult<u64> {
        self.stepped(|t| {
            let n = t.parse(number)?;
            let registrar = t.serving_registrar(&n)?;
            let reg = t.registrars.get_mut(&registrar).expect("serving registrar exists");
            reg.records
                .entry(n.clone())
                .or_insert_with(|| NaptrRecordSet::new(n.clone()))
                .merge(record.clone());
            t.log_write(actor, &registrar, &n, &record, true);
            Ok(t.log.last_id())
        })
    }

    pub fn get(&mut self, actor: Option<&str>, number: &str, sel: &ServiceSelector) -> OpResult<NaptrRecordSet> {
        self.begin_step();
        let r = self.get_inner(actor, number, sel);
        let digits = Self::digits_of(number);
        let count = r.as_ref().map(|s| s.len().to_string()).unwrap_or_default();
        let sel_text = sel.to_string();
        let f = Self::fields(&[
            ("number", &digits),
            ("actor", actor.unwrap_or(ANONYMOUS)),
            ("service", &sel_text),
            ("count", &count),
        ]);
        self.event("get", f, &r);
        r
    }

    fn get_inner(&mut self, actor: Option<&str>, number: &str, sel: &ServiceSelector) -> OpResult<NaptrRecordSet> {
        let n = self.parse(number)?;
        let registrar = self.serving_registrar(&n)?;
        let req = Frame::new(FrameKind::Get)
            .with("number", n.full_digits())
            .with("actor", actor.unwrap_or(ANONYMOUS))
            .with("service", sel);
        let from = actor.unwrap_or(ANONYMOUS);
        let resp = self.call(from, registrar.as_str(), req, 0)?;
        let records = decode_records(resp.get("records").unwrap_or_default())
            .map_err(|e| TopologyError::new(ErrorCode::InvalidRecord, e))?;
        Ok(NaptrRecordSet::with_records(n, records))
    }

    pub fn grant(
        &mut self,
        user: &str,
        number: &str,
        grantee: &str,
        rights: Rights,
        scope: ServiceSelector,
    ) -> OpResult<AuthorizationGrant> {
        self.stepped(|t| {
            let id = GrantId::new(format!("G{}", t.next_grant));
            t.next_grant += 1;
            let rights_text = rights.to_string();
            let scope_text = scope.to_string();
            let r = t.grant_inner(&id, user, number, grantee, rights, scope);
            let digits = Self::digits_of(number);
            let f = Self::fields(&[
                ("number", &digits),
                ("user", user),
                ("grant", id.as_str()),
                ("grantee", grantee),
                ("rights", &rights_text),
                ("scope", &scope_text),
            ]);
            t.event("grant", f, &r);
            r
        })
    }

    fn grant_inner(
        &mut self,
        id: &GrantId,
        user: &str,
        number: &str,
        grantee: &str,
        rights: Rights,
        scope: ServiceSelector,
    ) -> OpResult<AuthorizationGrant> {
        let n = self.parse(number)?;
        if self.role_of(grantee).is_none() {
            return Err(TopologyError::new(ErrorCode::UnknownActor, grantee));
        }
        let registrar = self
            .active_subscription(&n)
            .map_err(|_| TopologyError::new(ErrorCode::NotSubscriber, format!("{user} has no ENUM service on {n}")))?
            .serving_registrar
            .clone()
            .expect("active implies serving");
        let req = Frame::new(FrameKind::Grant)
            .with("id", id)
            .with("number", n.full_digits())
            .with("user", user)
            .with("grantee", grantee)
            .with("rights", &rights)
            .with("scope", &scope);
        self.call(user, registrar.as_str(), req, 0)?;
        self.grant_index.insert(id.clone(), n.clone());
        Ok(AuthorizationGrant { id: id.clone(), grantor: user.into(), grantee: grantee.into(), rights, scope, number: n })
    }

    pub fn revoke(&mut self, user: &str, grant: &str) -> OpResult<()> {
        self.stepped(|t| {
            let r = t.revoke_inner(user, grant);
            let digits = t
                .grant_index
                .get(&GrantId::from(grant))
                .map(|n| n.full_digits().to_string())
                .unwrap_or_default();
            let f = Self::fields(&[("number", &digits), ("user", user), ("grant", grant)]);
            t.event("revoke", f, &r);
            if r.is_ok() {
                t.grant_index.remove(&GrantId::from(grant));
            }
            r
        })
    }

    fn revoke_inner(&mut self, user: &str, grant: &str) -> OpResult<()> {
        let id = GrantId::from(grant);
        let n = self
            .grant_index
            .get(&id)
            .cloned()
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownGrant, grant))?;
        let registrar = self.serving_registrar(&n)?;
        let req = Frame::new(FrameKind::Revoke).with("id", grant).with("user", user);
        self.call(user, registrar.as_str(), req, 0)?;
        Ok(())
    }

    /// Moves `number` to `new_registrar`. With `until`, stops once that
    /// state is reached; [`Topology::resume`] carries on.
    pub fn transfer(
        &mut self,
        user: &str,
        number: &str,
        new_registrar: &str,
        until: Option<TransferState>,
    ) -> OpResult<TransferRecord> {
        self.stepped(|t| {
            let r = t.transfer_inner(user, number, new_registrar, until);
            let digits = Self::digits_of(number);
            let id = r.as_ref().map(|x| x.id.to_string()).unwrap_or_default();
            let state = r.as_ref().map(|x| x.state.to_string()).unwrap_or_default();
            let f = Self::fields(&[
                ("number", &digits),
                ("user", user),
                ("registrar", new_registrar),
                ("transfer", &id),
                ("state", &state),
            ]);
            t.event("transfer", f, &r);
            r
        })
    }

    fn transfer_inner(
        &mut self,
        user: &str,
        number: &str,
        new_registrar: &str,
        until: Option<TransferState>,
    ) -> OpResult<TransferRecord> {
        let n = self.parse(number)?;
        let sub = self.active_subscription(&n)?.clone();
        if sub.user.as_str() != user {
            return Err(TopologyError::new(ErrorCode::NotSubscriber, format!("{user} does not hold {n}")));
        }
        let old = sub.serving_registrar.clone().expect("active implies serving");
        if old.as_str() == new_registrar {
            return Err(TopologyError::new(ErrorCode::SameRegistrar, new_registrar));
        }
        self.check_registrar(new_registrar)?;
        let id = TransferId::new(format!("T{}", self.next_transfer));
        self.next_transfer += 1;
        let baseline = self.registrars[&old].export(&n);
        let req = Frame::new(FrameKind::TransferInit)
            .with("id", &id)
            .with("number", n.full_digits())
            .with("user", user)
            .with("from", &old);
        self.call(user, new_registrar, req, 0)?;
        self.transfer_index.insert(id.clone(), new_registrar.into());
        self.transfer_baselines.insert(id.clone(), baseline);
        self.log_transfer_state(&id);
        self.run_transfer(&id, until)
    }

    pub fn resume(&mut self, transfer: &str, until: Option<TransferState>) -> OpResult<TransferRecord> {
        self.stepped(|t| {
            let id = TransferId::from(transfer);
            let r = match t.transfer_record(&id) {
                None => Err(TopologyError::new(ErrorCode::UnknownTransfer, transfer)),
                Some(rec) if rec.state == TransferState::Complete => {
                    Err(TopologyError::new(ErrorCode::AlreadyComplete, transfer))
                }
                Some(rec) if rec.state == TransferState::Disputed => {
                    Err(TopologyError::new(ErrorCode::BadRequest, format!("{transfer} was disputed")))
                }
                Some(_) => t.run_transfer(&id, until),
            };
            let digits = t.transfer_record(&id).map(|x| x.number.full_digits().to_string()).unwrap_or_default();
            let state = r.as_ref().map(|x| x.state.to_string()).unwrap_or_default();
            let f = Self::fields(&[("number", &digits), ("transfer", transfer), ("state", &state)]);
            t.event("resume", f, &r);
            r
        })
    }

    fn log_transfer_state(&mut self, id: &TransferId) {
        let t = self.transfer_record(id).expect("known transfer").clone();
        self.log.push(
            self.net.step,
            "transfer",
            [
                ("transfer", t.id.to_string()),
                ("number", t.number.full_digits().to_string()),
                ("from", t.from_registrar.to_string()),
                ("to", t.to_registrar.to_string()),
                ("state", t.state.to_string()),
            ],
        );
    }

    fn set_transfer_state(&mut self, id: &TransferId, new: &RegistrarId, state: TransferState) -> OpResult<()> {
        self.registrars
            .get_mut(new)
            .expect("transfer owner exists")
            .advance_transfer(id, state)
            .map_err(|e| TopologyError::new(e.code(), e))?;
        self.log_transfer_state(id);
        Ok(())
    }

    fn transfer_warning(&mut self, id: &TransferId, new: &RegistrarId, detail: String) {
        let t = self.registrars.get_mut(new).and_then(|r| r.transfers.get_mut(id)).expect("known transfer");
        t.warnings.push(detail.clone());
        let number = t.number.full_digits().to_string();
        self.log.push(
            self.net.step,
            "warning",
            [("transfer", id.to_string()), ("number", number), ("detail", detail)],
        );
    }

    fn run_transfer(&mut self, id: &TransferId, until: Option<TransferState>) -> OpResult<TransferRecord> {
        loop {
            let t = self.transfer_record(id).expect("known transfer").clone();
            if t.state.is_final() || Some(t.state) == until {
                return Ok(t);
            }
            let (n, old, new) = (t.number.clone(), t.from_registrar.clone(), t.to_registrar.clone());
            match t.state {
                TransferState::Requested => {
                    let notice = Frame::new(FrameKind::Notice)
                        .with("number", n.full_digits())
                        .with("registrar", &new)
                        .with("transfer", id);
                    self.net.post(new.as_str(), old.as_str(), notice, Delivery::Durable);
                    self.set_transfer_state(id, &new, TransferState::OldNotified)?;
                }
                TransferState::OldNotified => {
                    let req = Frame::new(FrameKind::MigrateReq).with("number", n.full_digits()).with("to", &new);
                    // Writes may have landed at the old registrar while paused.
                    let current = self.registrars[&old].export(&n);
                    self.transfer_baselines.insert(id.clone(), current);
                    let retries = self.config.policy.transfer_retries;
                    let records = match self.call(new.as_str(), old.as_str(), req, retries) {
                        Ok(resp) => match decode_records(resp.get("records").unwrap_or_default()) {
                            Ok(recs) => recs,
                            Err(e) => {
                                self.transfer_warning(id, &new, format!("unreadable records from {old}: {e}"));
                                Vec::new()
                            }
                        },
                        Err(e) => {
                            self.transfer_warning(id, &new, format!("migrating with an empty set: {e}"));
                            Vec::new()
                        }
                    };
                    self.registrars
                        .get_mut(&new)
                        .expect("transfer owner exists")
                        .import(id, NaptrRecordSet::with_records(n.clone(), records))
                        .map_err(|e| TopologyError::new(e.code(), e))?;
                    self.set_transfer_state(id, &new, TransferState::RecordsMigrated)?;
                }
                TransferState::RecordsMigrated => {
                    let changed = self.find_owner(&new, &n).and_then(|owner| {
                        let req = Frame::new(FrameKind::Change)
                            .with("number", n.full_digits())
                            .with("new", &new)
                            .with("old", &old);
                        self.call(new.as_str(), owner.as_str(), req, 0)
                    });
                    if let Err(e) = changed {
                        self.registrars
                            .get_mut(&new)
                            .expect("transfer owner exists")
                            .dispute(id, &old, &format!("registry refused: {e}"))
                            .map_err(|e| TopologyError::new(e.code(), e))?;
                        self.log_transfer_state(id);
                        return Err(e);
                    }
                    self.set_transfer_state(id, &new, TransferState::RegistryUpdated)?;
                }
                TransferState::RegistryUpdated => {
                    let release = Frame::new(FrameKind::Release).with("number", n.full_digits()).with("to", &new);
                    self.net.post(new.as_str(), old.as_str(), release, Delivery::Durable);
                    let sub = self.subscriptions.get(&n).expect("transferred numbers are assigned").clone();
                    self.registrars
                        .get_mut(&new)
                        .expect("transfer owner exists")
                        .activate(id, Customer { user: sub.user.clone(), tsp: sub.tsp.clone() })
                        .map_err(|e| TopologyError::new(e.code(), e))?;
                    let s = self.subscriptions.get_mut(&n).expect("checked above");
                    s.serving_registrar = Some(new.clone());
                    s.via = None;
                    self.grant_index.retain(|_, num| *num != n);
                    let fee = self.config.fees.subscription_fee;
                    self.charge(sub.user.as_str(), new.as_str(), fee, "transfer", &n);
                    self.set_transfer_state(id, &new, TransferState::Complete)?;
                }
                TransferState::Complete | TransferState::Disputed => unreachable!("final states return above"),
            }
        }
    }

    /// The old registrar objects to a transfer. If the registry had already
    /// been repointed, the delegation goes back to the old registrar.
    pub fn dispute(&mut self, old_registrar: &str, transfer: &str, reason: &str) -> OpResult<TransferRecord> {
        self.stepped(|t| {
            let r = t.dispute_inner(old_registrar, transfer, reason);
            let digits = t
                .transfer_record(&TransferId::from(transfer))
                .map(|x| x.number.full_digits().to_string())
                .unwrap_or_default();
            let f = Self::fields(&[
                ("number", &digits),
                ("registrar", old_registrar),
                ("transfer", transfer),
                ("reason", reason),
            ]);
            t.event("dispute", f, &r);
            r
        })
    }

    fn dispute_inner(&mut self, old: &str, transfer: &str, reason: &str) -> OpResult<TransferRecord> {
        let id = TransferId::from(transfer);
        let new = self
            .transfer_index
            .get(&id)
            .cloned()
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownTransfer, transfer))?;
        let req = Frame::new(FrameKind::TransferDispute)
            .with("id", &id)
            .with("from", old)
            .with("reason", reason);
        let resp = self.call(old, new.as_str(), req, 0)?;
        self.log_transfer_state(&id);
        if resp.get("rollback") == Some("1") {
            let n = self.transfer_record(&id).expect("known transfer").number.clone();
            let rolled = self.find_owner(&new, &n).and_then(|owner| {
                let req = Frame::new(FrameKind::Change)
                    .with("number", n.full_digits())
                    .with("new", old)
                    .with("old", &new)
                    .with("rollback", 1);
                self.call(new.as_str(), owner.as_str(), req, 0)
            });
            if let Err(e) = rolled {
                self.transfer_warning(&id, &new, format!("rollback failed: {e}"));
            }
        }
        Ok(self.transfer_record(&id).expect("known transfer").clone())
    }

    pub fn disconnect(&mut self, user: &str, number: &str, kind: DisconnectKind) -> OpResult<Subscription> {
        self.stepped(|t| {
            let r = t.disconnect_inner(user, number, kind);
            let digits = Self::digits_of(number);
            let kind_text = kind.to_string();
            let f = Self::fields(&[("number", &digits), ("user", user), ("kind", &kind_text)]);
            t.event("disconnect", f, &r);
            r
        })
    }

    fn disconnect_inner(&mut self, user: &str, number: &str, kind: DisconnectKind) -> OpResult<Subscription> {
        let n = self.parse(number)?;
        let sub = self
            .subscriptions
            .get(&n)
            .cloned()
            .ok_or_else(|| TopologyError::new(ErrorCode::UnknownSubscription, &n))?;
        if !sub.phone_active {
            return Err(TopologyError::new(ErrorCode::NoPhoneService, &n));
        }
        if sub.user.as_str() != user {
            return Err(TopologyError::new(ErrorCode::NotSubscriber, format!("{user} does not hold {n}")));
        }
        if kind == DisconnectKind::EnumOnly && !sub.enum_active {
            return Err(TopologyError::new(ErrorCode::EnumInactive, &n));
        }
        if let Some(registrar) = sub.serving_registrar.clone().filter(|_| sub.enum_active) {
            let req = Frame::new(FrameKind::Disconnect).with("number", n.full_digits());
            self.call(user, registrar.as_str(), req, 0)?;
            let owner = self.find_owner(&registrar, &n)?;
            let req = Frame::new(FrameKind::Remove)
                .with("number", n.full_digits())
                .with("registrar", &registrar);
            self.call(registrar.as_str(), owner.as_str(), req, 0)?;
        }
        self.grant_index.retain(|_, num| *num != n);
        let s = self.subscriptions.get_mut(&n).expect("checked above");
        s.disconnect(kind);
        Ok(s.clone())
    }

    /// An ASP pays a TSP to cooperate, under one of the named approaches.
    /// Only meaningful where ASPs are the registrars.
    pub fn cooperate(&mut self, payer: &str, tsp: &str, approach: &str) -> OpResult<()> {
        self.stepped(|t| {
            let r = t.cooperate_inner(payer, tsp, approach);
            let f = Self::fields(&[("payer", payer), ("tsp", tsp), ("approach", approach)]);
            t.event("cooperate", f, &r);
            r
        })
    }

    fn cooperate_inner(&mut self, payer: &str, tsp: &str, approach: &str) -> OpResult<()> {
        if self.config.registrar_kind() != RegistrarKind::Asp {
            return Err(TopologyError::new(
                ErrorCode::CooperationNotApplicable,
                format!("model {} has no ASP registrars", self.config.model.id),
            ));
        }
        self.require_role(payer, &[Role::Asp, Role::User])?;
        self.require_role(tsp, &[Role::Tsp])?;
        if !matches!(approach, "registry" | "asp" | "user") {
            return Err(TopologyError::new(ErrorCode::BadRequest, format!("unknown approach {approach:?}")));
        }
        let fee = self.config.fees.cooperation_fee;
        self.log.push(
            self.net.step,
            "charge",
            [
                ("payer", payer),
                ("payee", tsp),
                ("amount", &fee.to_string()),
                ("cause", "cooperation"),
                ("approach", approach),
            ],
        );
        Ok(())
    }

    // ---- state fingerprint ----

    /// Deterministic text of everything a resolve must not change.
    pub fn canonical_state(&self) -> String {
        let mut out = String::new();
        for r in self.registries.values() {
            out.push_str(&format!("registry {}\n", r.id));
            for d in r.delegations.values() {
                out.push_str(&format!("  d {} {}\n", d.snapshot_line(), d.updated_at));
            }
            for (n, s) in &r.tombstones {
                out.push_str(&format!("  t {n} {s}\n"));
            }
            for e in &r.billing_ledger {
                out.push_str(&format!("  $ {} {} {} {}\n", e.payer, e.amount, e.number, e.cause.as_str()));
            }
        }
        for r in self.registrars.values() {
            out.push_str(&format!("registrar {}\n", r.id));
            for (n, c) in &r.customers {
                out.push_str(&format!("  c {n} {} {}\n", c.user, c.tsp));
            }
            for (n, set) in &r.records {
                out.push_str(&format!("  r {n}\n{}\n", encode_records(&set.records)));
            }
            for g in r.grants.values() {
                out.push_str(&format!("  g {} {} {} {} {}\n", g.id, g.number, g.grantee, g.rights, g.scope));
            }
            for t in r.transfers.values() {
                out.push_str(&format!("  x {} {} {}\n", t.id, t.state, t.migrated_records.len()));
            }
            for (n, to) in &r.notices {
                out.push_str(&format!("  n {n} {to}\n"));
            }
        }
        for s in self.subscriptions.values() {
            out.push_str(&format!(
                "sub {} {} {} {} {} {:?} {:?}\n",
                s.number, s.user, s.tsp, s.enum_active, s.phone_active, s.serving_registrar, s.via
            ));
        }
        for env in self.net.pending() {
            out.push_str(&format!("pending {} {} {}\n", env.to, env.delivery == Delivery::Durable, env.frame));
        }
        out
    }

    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.canonical_state().hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(model: u8) -> Topology {
        Topology::build(ScenarioConfig::builtin(model).unwrap()).unwrap()
    }

    const N: &str = "+1-315-443-4473";

    fn sip() -> NaptrRecord {
        "100 10 \"u\" \"E2U+sip\" \"!^.*$!sip:info@example.com!\" .".parse().unwrap()
    }

    #[test]
    fn model1_auto_verification() {
        let mut t = m(1);
        t.assign("U1", N, "TSP-A").unwrap();
        let s = t.subscribe("U1", N, "TSP-A", &Proof::Auto, None).unwrap();
        assert!(s.enum_active);
        assert_eq!(s.serving_registrar.as_ref().map(|r| r.as_str()), Some("TSP-A"));
        let r1 = &t.registries[&RegistryId::from("R1")];
        assert_eq!(r1.delegations.values().next().unwrap().registrar.as_str(), "TSP-A");
    }

    #[test]
    fn model2_needs_confirmation() {
        let mut t = m(2);
        t.assign("U1", N, "TSP-A").unwrap();
        let err = t.subscribe("U1", N, "ASP-X", &Proof::Auto, None).unwrap_err();
        assert_eq!(err.code, ErrorCode::VerificationFailed);
        assert!(t.subscribe("U1", N, "ASP-X", &Proof::Confirm, None).is_ok());
    }

    #[test]
    fn token_proof() {
        let mut t = m(3);
        let token = t.assign("U1", N, "TSP-A").unwrap().token;
        let bad = t.subscribe("U1", N, "REG-I", &Proof::Token("nope".into()), None).unwrap_err();
        assert_eq!(bad.code, ErrorCode::VerificationFailed);
        assert!(t.subscribe("U1", N, "REG-I", &Proof::Token(token), None).is_ok());
    }

    #[test]
    fn subscribe_errors() {
        let mut t = m(2);
        assert_eq!(t.subscribe("U1", N, "ASP-X", &Proof::Confirm, None).unwrap_err().code, ErrorCode::NoPhoneService);
        t.assign("U1", N, "TSP-A").unwrap();
        assert_eq!(
            t.subscribe("U1", N, "TSP-A", &Proof::Confirm, None).unwrap_err().code,
            ErrorCode::RegistrarKindForbidden
        );
    }

    #[test]
    fn healthy_transfer_moves_records() {
        let mut t = m(3);
        t.assign("U1", N, "TSP-A").unwrap();
        t.subscribe("U1", N, "REG-I", &Proof::Confirm, None).unwrap();
        t.provision("U1", N, vec![sip()]).unwrap();
        let rec = t.transfer("U1", N, "REG-J", None).unwrap();
        assert_eq!(rec.state, TransferState::Complete);
        assert_eq!(rec.migrated_records.records, vec![sip()]);
        assert!(rec.warnings.is_empty());
        assert!(t.registrars[&PartyId::from("REG-I")].records.is_empty());
        assert_eq!(t.transfer("U1", N, "REG-J", None).unwrap_err().code, ErrorCode::SameRegistrar);
    }

    #[test]
    fn resolve_path_does_not_mutate() {
        let mut t = m(1);
        t.assign("U1", N, "TSP-A").unwrap();
        t.subscribe("U1", N, "TSP-A", &Proof::Auto, None).unwrap();
        let before = t.state_hash();
        t.get(None, N, &ServiceSelector::Any).unwrap();
        assert_eq!(t.state_hash(), before);
    }
}
