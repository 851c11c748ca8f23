use std::fmt;
use std::str::FromStr;

use crate::e164::E164Number;
use crate::ids::{PartyId, RegistrarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisconnectKind {
    /// Drop ENUM but keep the telephone line.
    EnumOnly,
    /// Give up the number altogether.
    Telephone,
}

impl FromStr for DisconnectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enum" | "enum_only" | "enum-only" => Ok(DisconnectKind::EnumOnly),
            "telephone" | "phone" => Ok(DisconnectKind::Telephone),
            other => Err(format!("unknown disconnect kind {other:?}")),
        }
    }
}

impl fmt::Display for DisconnectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisconnectKind::EnumOnly => "enum_only",
            DisconnectKind::Telephone => "telephone",
        })
    }
}

/// A number's service state as seen by the assigning TSP and ENUM.
///
/// `enum_active` implies `phone_active`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub number: E164Number,
    pub user: PartyId,
    pub tsp: PartyId,
    pub enum_active: bool,
    pub phone_active: bool,
    pub serving_registrar: Option<RegistrarId>,
    /// Opaque proof of assignment handed to the user with the number.
    pub token: String,
    /// ASP acting as registrant on the user's behalf.
    pub via: Option<PartyId>,
}

impl Subscription {
    /// Phone service only, as issued by the TSP.
    pub fn assigned(number: E164Number, user: PartyId, tsp: PartyId, token: String) -> Self {
        Self {
            number,
            user,
            tsp,
            enum_active: false,
            phone_active: true,
            serving_registrar: None,
            token,
            via: None,
        }
    }

    pub fn activate_enum(&mut self, registrar: RegistrarId, via: Option<PartyId>) {
        debug_assert!(self.phone_active);
        self.enum_active = true;
        self.serving_registrar = Some(registrar);
        self.via = via;
    }

    pub fn disconnect(&mut self, kind: DisconnectKind) {
        self.enum_active = false;
        self.serving_registrar = None;
        self.via = None;
        if kind == DisconnectKind::Telephone {
            self.phone_active = false;
            self.token.clear();
        }
    }

    pub fn is_consistent(&self) -> bool {
        (!self.enum_active || self.phone_active)
            && (self.enum_active == self.serving_registrar.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub() -> Subscription {
        Subscription::assigned(
            E164Number::from_digits("13154434473").unwrap(),
            "U1".into(),
            "TSP-A".into(),
            "tok".into(),
        )
    }

    #[test]
    fn enum_only_keeps_phone() {
        let mut s = sub();
        s.activate_enum("TSP-A".into(), None);
        s.disconnect(DisconnectKind::EnumOnly);
        assert!(s.phone_active && !s.enum_active);
        assert!(s.is_consistent());
    }

    #[test]
    fn telephone_drops_everything() {
        let mut s = sub();
        s.activate_enum("TSP-A".into(), None);
        s.disconnect(DisconnectKind::Telephone);
        assert!(!s.phone_active && !s.enum_active && s.token.is_empty());
        assert!(s.is_consistent());
    }
}
