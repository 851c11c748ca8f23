//! NAPTR records: parsing, selection by order and preference, and rewriting
//! of a telephone number into URIs.

mod record;
mod rewrite;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::e164::E164Number;

pub use record::{parse_record, NaptrRecord, Visibility};
pub use rewrite::SubstitutionExpr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NaptrError {
    #[error("expected 6 fields, found {0}")]
    FieldCount(usize),
    #[error("bad integer field {0:?}")]
    BadInteger(String),
    #[error("field {0:?} must be double-quoted")]
    Unquoted(String),
    #[error("unterminated quoted field")]
    UnterminatedQuote,
    #[error("malformed substitution expression {0:?}")]
    BadDelimiter(String),
    #[error("invalid pattern: {0}")]
    BadPattern(String),
    #[error("flag \"u\" needs a regexp")]
    FlagRegexpConflict,
    #[error("record has neither regexp nor replacement")]
    NoTarget,
    #[error("record has both regexp and replacement")]
    RegexpAndReplacement,
    #[error("unsupported flags {0:?}")]
    UnsupportedFlags(String),
    #[error("bad service field {0:?}")]
    BadService(String),
    #[error("bad visibility {0:?}")]
    BadVisibility(String),
    #[error("pattern does not match subject")]
    NoMatch,
    #[error("backreference \\{0} exceeds the group count")]
    BadBackreference(usize),
    #[error("record has no regexp")]
    NotTerminal,
}

/// Filter on the service field; `*` matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceSelector {
    Any,
    Service(String),
}

impl ServiceSelector {
    pub fn service(s: &str) -> Self {
        ServiceSelector::Service(s.to_string())
    }

    pub fn matches(&self, service: &str) -> bool {
        match self {
            ServiceSelector::Any => true,
            ServiceSelector::Service(s) => s.eq_ignore_ascii_case(service),
        }
    }
}

impl FromStr for ServiceSelector {
    type Err = NaptrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "*" => Ok(ServiceSelector::Any),
            "" => Err(NaptrError::BadService(String::new())),
            other => Ok(ServiceSelector::Service(other.to_string())),
        }
    }
}

impl fmt::Display for ServiceSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceSelector::Any => f.write_str("*"),
            ServiceSelector::Service(s) => f.write_str(s),
        }
    }
}

/// Whether the requester may see restricted records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requester {
    Public,
    Privileged,
}

impl Requester {
    fn sees(self, v: Visibility) -> bool {
        self == Requester::Privileged || v == Visibility::Public
    }
}

/// All records held for one number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaptrRecordSet {
    pub number: E164Number,
    pub records: Vec<NaptrRecord>,
}

impl NaptrRecordSet {
    pub fn new(number: E164Number) -> Self {
        Self { number, records: Vec::new() }
    }

    pub fn with_records(number: E164Number, records: Vec<NaptrRecord>) -> Self {
        Self { number, records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Inserts `record`, replacing any record with the same
    /// (service, order, preference). Returns true if a record was replaced.
    pub fn merge(&mut self, record: NaptrRecord) -> bool {
        let key = record.merge_key();
        match self.records.iter_mut().find(|r| r.merge_key() == key) {
            Some(slot) => {
                *slot = record;
                true
            }
            None => {
                self.records.push(record);
                false
            }
        }
    }

    pub fn contains_key(&self, record: &NaptrRecord) -> bool {
        let key = record.merge_key();
        self.records.iter().any(|r| r.merge_key() == key)
    }
}

/// Matching records visible to `requester`, stably sorted by
/// (order, preference).
pub fn select(set: &NaptrRecordSet, sel: &ServiceSelector, requester: Requester) -> Vec<NaptrRecord> {
    let mut out: Vec<NaptrRecord> = set
        .records
        .iter()
        .filter(|r| sel.matches(&r.service) && requester.sees(r.visibility))
        .cloned()
        .collect();
    // sort_by_key is stable
    out.sort_by_key(|r| (r.order, r.preference));
    out
}

/// Rewrites `subject` (the number in `+digits` form) through the record's
/// substitution expression.
pub fn apply_regexp(rec: &NaptrRecord, subject: &str) -> Result<String, NaptrError> {
    if rec.regexp.is_empty() {
        return Err(NaptrError::NotTerminal);
    }
    SubstitutionExpr::parse(&rec.regexp)?.apply(subject)
}

/// A record that was selected but could not be turned into a URI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordWarning {
    pub record: NaptrRecord,
    pub error: NaptrError,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Resolution {
    pub uris: Vec<String>,
    /// Selected records paired with their URI, in selection order.
    pub resolved: Vec<(NaptrRecord, String)>,
    pub warnings: Vec<RecordWarning>,
}

/// Selects records, then rewrites every terminal one. Non-terminal records
/// are skipped; rewrite failures become warnings.
pub fn resolve_record_set(
    set: &NaptrRecordSet,
    sel: &ServiceSelector,
    requester: Requester,
) -> Resolution {
    let subject = set.number.to_plus_form();
    let mut res = Resolution::default();
    for rec in select(set, sel, requester) {
        if !rec.is_terminal() {
            continue;
        }
        match apply_regexp(&rec, &subject) {
            Ok(uri) => {
                res.uris.push(uri.clone());
                res.resolved.push((rec, uri));
            }
            Err(error) => res.warnings.push(RecordWarning { record: rec, error }),
        }
    }
    res
}
