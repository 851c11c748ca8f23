use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        // Lets maps keyed by id be queried with a plain &str.
        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Any participant: users, providers, registrars.
    PartyId
);
string_id!(RegistryId);

/// Registrars are parties acting in the Tier-2 role.
pub type RegistrarId = PartyId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    User,
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "ASP")]
    Asp,
    #[serde(rename = "ISP")]
    Isp,
    IndependentRegistrar,
    Registry,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "User",
            Role::Tsp => "TSP",
            Role::Asp => "ASP",
            Role::Isp => "ISP",
            Role::IndependentRegistrar => "IndependentRegistrar",
            Role::Registry => "Registry",
        }
    }

    /// The registrar kind a party of this role operates as, if any.
    pub fn registrar_kind(self) -> Option<RegistrarKind> {
        match self {
            Role::Tsp => Some(RegistrarKind::Tsp),
            Role::Asp => Some(RegistrarKind::Asp),
            Role::Isp => Some(RegistrarKind::Isp),
            Role::IndependentRegistrar => Some(RegistrarKind::Independent),
            Role::User | Role::Registry => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegistrarKind {
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "ASP")]
    Asp,
    #[serde(rename = "ISP")]
    Isp,
    Independent,
}

impl RegistrarKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegistrarKind::Tsp => "TSP",
            RegistrarKind::Asp => "ASP",
            RegistrarKind::Isp => "ISP",
            RegistrarKind::Independent => "Independent",
        }
    }
}

impl fmt::Display for RegistrarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegistrarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TSP" => Ok(RegistrarKind::Tsp),
            "ASP" => Ok(RegistrarKind::Asp),
            "ISP" => Ok(RegistrarKind::Isp),
            "Independent" => Ok(RegistrarKind::Independent),
            other => Err(format!("unknown registrar kind {other:?}")),
        }
    }
}

string_id!(GrantId);
string_id!(TransferId);
