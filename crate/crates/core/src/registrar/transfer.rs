//! Registrar change: the new registrar notifies the old one, pulls the
//! record set, repoints the registry delegation and completes. The old
//! registrar may dispute at any point before completion.

use std::fmt;
use std::str::FromStr;

use crate::e164::E164Number;
use crate::ids::{PartyId, RegistrarId, TransferId};
use crate::naptr::NaptrRecordSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransferState {
    Requested,
    OldNotified,
    RecordsMigrated,
    RegistryUpdated,
    Complete,
    Disputed,
}

impl TransferState {
    pub const FORWARD: [TransferState; 5] = [
        TransferState::Requested,
        TransferState::OldNotified,
        TransferState::RecordsMigrated,
        TransferState::RegistryUpdated,
        TransferState::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransferState::Requested => "Requested",
            TransferState::OldNotified => "OldNotified",
            TransferState::RecordsMigrated => "RecordsMigrated",
            TransferState::RegistryUpdated => "RegistryUpdated",
            TransferState::Complete => "Complete",
            TransferState::Disputed => "Disputed",
        }
    }

    pub fn next(self) -> Option<TransferState> {
        let i = Self::FORWARD.iter().position(|s| *s == self)?;
        Self::FORWARD.get(i + 1).copied()
    }

    pub fn is_final(self) -> bool {
        matches!(self, TransferState::Complete | TransferState::Disputed)
    }
}

impl fmt::Display for TransferState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::FORWARD
            .iter()
            .chain(std::iter::once(&TransferState::Disputed))
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown transfer state {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransferStepError {
    AlreadyComplete,
    AlreadyDisputed,
    OutOfOrder { from: TransferState, to: TransferState },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub id: TransferId,
    pub number: E164Number,
    pub user: PartyId,
    pub from_registrar: RegistrarId,
    pub to_registrar: RegistrarId,
    pub state: TransferState,
    pub migrated_records: NaptrRecordSet,
    /// Every state entered, starting with `Requested`.
    pub history: Vec<TransferState>,
    pub warnings: Vec<String>,
    pub dispute_reason: Option<String>,
}

impl TransferRecord {
    pub fn new(
        id: TransferId,
        number: E164Number,
        user: PartyId,
        from_registrar: RegistrarId,
        to_registrar: RegistrarId,
    ) -> Self {
        Self {
            migrated_records: NaptrRecordSet::new(number.clone()),
            id,
            number,
            user,
            from_registrar,
            to_registrar,
            state: TransferState::Requested,
            history: vec![TransferState::Requested],
            warnings: Vec::new(),
            dispute_reason: None,
        }
    }

    /// Moves to the next forward state.
    pub fn advance(&mut self, to: TransferState) -> Result<(), TransferStepError> {
        match self.state {
            TransferState::Complete => return Err(TransferStepError::AlreadyComplete),
            TransferState::Disputed => return Err(TransferStepError::AlreadyDisputed),
            s if s.next() != Some(to) => {
                return Err(TransferStepError::OutOfOrder { from: s, to });
            }
            _ => {}
        }
        self.state = to;
        self.history.push(to);
        Ok(())
    }

    /// Marks the transfer disputed, returning the state it was in.
    pub fn dispute(&mut self, reason: &str) -> Result<TransferState, TransferStepError> {
        let prior = self.state;
        match prior {
            TransferState::Complete => Err(TransferStepError::AlreadyComplete),
            TransferState::Disputed => Err(TransferStepError::AlreadyDisputed),
            _ => {
                self.state = TransferState::Disputed;
                self.history.push(TransferState::Disputed);
                self.dispute_reason = Some(reason.to_string());
                Ok(prior)
            }
        }
    }
}

/// True when `seq` is a prefix of the forward order, optionally ending in a
/// single `Disputed` after a non-complete state.
pub fn is_valid_history(seq: &[TransferState]) -> bool {
    let (body, disputed) = match seq.split_last() {
        Some((TransferState::Disputed, body)) => (body, true),
        _ => (seq, false),
    };
    if body.is_empty() || body.len() > TransferState::FORWARD.len() {
        return false;
    }
    if disputed && body.last() == Some(&TransferState::Complete) {
        return false;
    }
    body.iter().zip(TransferState::FORWARD.iter()).all(|(a, b)| a == b)
}
