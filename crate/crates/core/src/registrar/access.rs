//! Who may write or read a number's NAPTR records at its registrar.
//!
//! The subscriber and the serving registrar always may. Other parties need
//! a grant from the subscriber whose scope covers the record's service. In
//! TSP-registrar models the number's TSP holds an implicit grant for
//! network-related services.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::e164::E164Number;
use crate::ids::{GrantId, PartyId};
use crate::naptr::ServiceSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Right {
    Provision,
    Access,
    Change,
}

impl Right {
    pub fn as_str(self) -> &'static str {
        match self {
            Right::Provision => "provision",
            Right::Access => "access",
            Right::Change => "change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Rights(BTreeSet<Right>);

impl Rights {
    pub fn new(rights: impl IntoIterator<Item = Right>) -> Self {
        Self(rights.into_iter().collect())
    }

    pub fn contains(&self, r: Right) -> bool {
        self.0.contains(&r)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn can_write(&self) -> bool {
        self.contains(Right::Provision) || self.contains(Right::Change)
    }

    pub fn iter(&self) -> impl Iterator<Item = Right> + '_ {
        self.0.iter().copied()
    }
}

/// Parses `provision,access` (`+` also accepted as separator).
impl FromStr for Rights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BTreeSet::new();
        for part in s.split([',', '+']).filter(|p| !p.is_empty()) {
            out.insert(match part.trim() {
                "provision" => Right::Provision,
                "access" => Right::Access,
                "change" => Right::Change,
                other => return Err(format!("unknown right {other:?}")),
            });
        }
        Ok(Rights(out))
    }
}

impl fmt::Display for Rights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|r| r.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationGrant {
    pub id: GrantId,
    pub grantor: PartyId,
    pub grantee: PartyId,
    pub rights: Rights,
    pub scope: ServiceSelector,
    pub number: E164Number,
}

impl AuthorizationGrant {
    pub fn covers(&self, actor: &PartyId, number: &E164Number, service: &str) -> bool {
        &self.grantee == actor && &self.number == number && self.scope.matches(service)
    }
}

/// The subscriber and assigning TSP of a number served here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Customer {
    pub user: PartyId,
    pub tsp: PartyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessPolicy {
    /// Whether the number's TSP may manage network-related services
    /// without an explicit grant.
    pub implicit_tsp_grant: bool,
    network_services: BTreeSet<String>,
}

impl AccessPolicy {
    pub fn new<I, S>(implicit_tsp_grant: bool, network_services: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            implicit_tsp_grant,
            network_services: network_services
                .into_iter()
                .map(|s| s.as_ref().to_ascii_lowercase())
                .collect(),
        }
    }

    pub fn is_network_service(&self, service: &str) -> bool {
        self.network_services.contains(&service.to_ascii_lowercase())
    }
}

/// Request context for an access decision.
pub struct AccessCheck<'a> {
    pub registrar: &'a PartyId,
    pub customer: &'a Customer,
    pub policy: &'a AccessPolicy,
    pub number: &'a E164Number,
}

impl AccessCheck<'_> {
    fn inherent(&self, actor: &PartyId, service: &str) -> bool {
        actor == &self.customer.user
            || actor == self.registrar
            || (self.policy.implicit_tsp_grant
                && actor == &self.customer.tsp
                && self.policy.is_network_service(service))
    }

    pub fn may_write<'g>(
        &self,
        actor: &PartyId,
        service: &str,
        grants: impl IntoIterator<Item = &'g AuthorizationGrant>,
    ) -> bool {
        self.inherent(actor, service)
            || grants
                .into_iter()
                .any(|g| g.covers(actor, self.number, service) && g.rights.can_write())
    }

    pub fn may_read_restricted<'g>(
        &self,
        actor: &PartyId,
        service: &str,
        grants: impl IntoIterator<Item = &'g AuthorizationGrant>,
    ) -> bool {
        self.inherent(actor, service)
            || grants
                .into_iter()
                .any(|g| g.covers(actor, self.number, service) && g.rights.contains(Right::Access))
    }
}
