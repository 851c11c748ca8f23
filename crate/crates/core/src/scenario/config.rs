//! Scenario configuration: which administration model, who takes part,
//! which registries exist and how Tier-0 points at them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::e164::ApexConfig;
use crate::ids::{RegistrarKind, Role};
use crate::sim::{Fault, TIER0};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario config: {0}")]
    Parse(String),
    #[error("model {0} does not exist (expected 1 to 6)")]
    UnknownModel(u8),
    #[error("model {model} is {expected_kind}/{expected_multiplicity}, not {kind}/{multiplicity}")]
    InvalidModelCombination {
        model: u8,
        kind: RegistrarKind,
        multiplicity: Multiplicity,
        expected_kind: RegistrarKind,
        expected_multiplicity: Multiplicity,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplicity {
    Single,
    Multiple,
}

impl fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Multiplicity::Single => "single",
            Multiplicity::Multiple => "multiple",
        })
    }
}

/// The registrar kind and registry multiplicity of models 1 to 6.
pub fn model_grid(model: u8) -> Result<(RegistrarKind, Multiplicity), ConfigError> {
    let kind = match model {
        1 | 4 => RegistrarKind::Tsp,
        2 | 5 => RegistrarKind::Asp,
        3 | 6 => RegistrarKind::Independent,
        other => return Err(ConfigError::UnknownModel(other)),
    };
    let multiplicity = if model <= 3 { Multiplicity::Single } else { Multiplicity::Multiple };
    Ok((kind, multiplicity))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: u8,
    pub registrar_kind: Option<RegistrarKind>,
    pub registry_multiplicity: Option<Multiplicity>,
    #[serde(default = "default_apex")]
    pub apex: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_apex() -> String {
    crate::e164::DEFAULT_APEX.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fees {
    pub flat_fee: f64,
    pub subscription_fee: f64,
    pub cooperation_fee: f64,
}

impl Default for Fees {
    fn default() -> Self {
        Self { flat_fee: 1.0, subscription_fee: 1.0, cooperation_fee: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    pub network_related_services: Vec<String>,
    /// Registrar kinds accepted on top of the model's own.
    pub extra_registrar_kinds: Vec<RegistrarKind>,
    /// Extra attempts when pulling records from the old registrar.
    pub transfer_retries: u32,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            network_related_services: vec!["E2U+sip".into(), "E2U+tel".into()],
            extra_registrar_kinds: Vec::new(),
            transfer_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: String,
    pub role: Role,
    pub home_registry: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySpec {
    pub id: String,
    #[serde(default)]
    pub accredit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub actor: String,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub fees: Fees,
    #[serde(default)]
    pub policy: Policy,
    pub actors: Vec<ActorSpec>,
    pub registries: Vec<RegistrySpec>,
    pub tier0: BTreeMap<String, Vec<String>>,
    /// Script-level names such as `REG1` mapped to actor ids.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

const MODEL_FIXTURES: [&str; 6] = [
    include_str!("../../fixtures/scenarios/model1.toml"),
    include_str!("../../fixtures/scenarios/model2.toml"),
    include_str!("../../fixtures/scenarios/model3.toml"),
    include_str!("../../fixtures/scenarios/model4.toml"),
    include_str!("../../fixtures/scenarios/model5.toml"),
    include_str!("../../fixtures/scenarios/model6.toml"),
];

/// The event script shipped with the model fixtures.
pub const CANONICAL_EVENTS: &str = include_str!("../../fixtures/scenarios/canonical.events");

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// One of the six shipped model fixtures.
    pub fn builtin(model: u8) -> Result<Self, ConfigError> {
        let text = model
            .checked_sub(1)
            .and_then(|i| MODEL_FIXTURES.get(i as usize))
            .ok_or(ConfigError::UnknownModel(model))?;
        Self::from_toml(text)
    }

    pub fn registrar_kind(&self) -> RegistrarKind {
        model_grid(self.model.id).map(|(k, _)| k).unwrap_or(RegistrarKind::Tsp)
    }

    pub fn multiplicity(&self) -> Multiplicity {
        model_grid(self.model.id).map(|(_, m)| m).unwrap_or(Multiplicity::Single)
    }

    /// Whether the number's TSP runs the registrar side (models 1 and 4).
    pub fn tsp_is_registrar(&self) -> bool {
        self.registrar_kind() == RegistrarKind::Tsp
    }

    pub fn permitted_kinds(&self) -> BTreeSet<RegistrarKind> {
        let mut kinds: BTreeSet<_> = self.policy.extra_registrar_kinds.iter().copied().collect();
        kinds.insert(self.registrar_kind());
        kinds
    }

    pub fn apex(&self) -> Result<ApexConfig, ConfigError> {
        ApexConfig::new(&self.model.apex, &self.model.apex).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn role_of(&self, actor: &str) -> Option<Role> {
        if self.registries.iter().any(|r| r.id == actor) {
            return Some(Role::Registry);
        }
        self.actors.iter().find(|a| a.id == actor).map(|a| a.role)
    }

    pub fn resolve_alias<'a>(&'a self, name: &'a str) -> &'a str {
        self.aliases.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn faults(&self) -> Vec<Fault> {
        self.faults
            .iter()
            .map(|f| Fault { actor: self.resolve_alias(&f.actor).to_string(), from: f.from, to: f.to })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (expected_kind, expected_multiplicity) = model_grid(self.model.id)?;
        let kind = self.model.registrar_kind.unwrap_or(expected_kind);
        let multiplicity = self.model.registry_multiplicity.unwrap_or(expected_multiplicity);
        if (kind, multiplicity) != (expected_kind, expected_multiplicity) {
            return Err(ConfigError::InvalidModelCombination {
                model: self.model.id,
                kind,
                multiplicity,
                expected_kind,
                expected_multiplicity,
            });
        }
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        self.apex()?;
        match (multiplicity, self.registries.len()) {
            (_, 0) => return invalid("no registries".into()),
            (Multiplicity::Single, n) if n > 1 => {
                return invalid(format!("model {} has one registry, found {n}", self.model.id));
            }
            (Multiplicity::Multiple, 1) => {
                return invalid(format!("model {} needs at least two registries", self.model.id));
            }
            _ => {}
        }
        let mut ids = BTreeSet::new();
        for id in self.actors.iter().map(|a| &a.id).chain(self.registries.iter().map(|r| &r.id)) {
            if id == TIER0 || id.is_empty() || !ids.insert(id.as_str()) {
                return invalid(format!("duplicate or reserved id {id:?}"));
            }
        }
        let registry_ids: BTreeSet<&str> = self.registries.iter().map(|r| r.id.as_str()).collect();
        for a in &self.actors {
            if a.role == Role::Registry {
                return invalid(format!("registries belong in [[registries]], not actor {}", a.id));
            }
            if let Some(h) = &a.home_registry {
                if !registry_ids.contains(h.as_str()) {
                    return invalid(format!("{} has unknown home registry {h}", a.id));
                }
            }
        }
        for r in &self.registries {
            for acc in &r.accredit {
                if self.role_of(acc).and_then(Role::registrar_kind).is_none() {
                    return invalid(format!("{} accredits {acc}, which is not a registrar", r.id));
                }
            }
        }
        if self.tier0.is_empty() {
            return invalid("empty tier0 table".into());
        }
        for (prefix, regs) in &self.tier0 {
            if prefix.is_empty() || !prefix.bytes().all(|b| b.is_ascii_digit()) {
                return invalid(format!("tier0 prefix {prefix:?} is not digits"));
            }
            if regs.is_empty() {
                return invalid(format!("tier0 prefix {prefix} points nowhere"));
            }
            if let Some(r) = regs.iter().find(|r| !registry_ids.contains(r.as_str())) {
                return invalid(format!("tier0 prefix {prefix} points at unknown registry {r}"));
            }
            if multiplicity == Multiplicity::Single && regs.len() != 1 {
                return invalid(format!("tier0 prefix {prefix} lists several registries in a single-registry model"));
            }
        }
        for (alias, target) in &self.aliases {
            if !ids.contains(target.as_str()) {
                return invalid(format!("alias {alias} points at unknown actor {target}"));
            }
        }
        for f in &self.faults {
            let actor = self.resolve_alias(&f.actor);
            if actor != TIER0 && !ids.contains(actor) {
                return invalid(format!("fault names unknown actor {}", f.actor));
            }
            if f.from > f.to {
                return invalid(format!("fault for {} ends before it starts", f.actor));
            }
        }
        if self.fees.flat_fee < 0.0 || self.fees.subscription_fee < 0.0 || self.fees.cooperation_fee < 0.0 {
            return invalid("negative fee".into());
        }
        Ok(())
    }
}
