//! E.164 telephone numbers and their ENUM domain names.
//!
//! A number is turned into a domain by keeping only its digits, reversing
//! them, joining them with dots and appending an apex such as `e164.arpa`.
//! The apex is configurable so several ENUM roots can coexist.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Shortest number accepted, counting every digit including the country code.
pub const MIN_DIGITS: usize = 3;
/// Longest number permitted by E.164.
pub const MAX_DIGITS: usize = 15;

/// The canonical ENUM root.
pub const DEFAULT_APEX: &str = "e164.arpa";

/// Two-digit country codes. Codes starting with `1` or `7` use one digit;
/// every other assigned code uses three.
const TWO_DIGIT_CODES: &[&str] = &[
    "20", "27", "30", "31", "32", "33", "34", "36", "39", "40", "41", "43", "44", "45", "46", "47",
    "48", "49", "51", "52", "53", "54", "55", "56", "57", "58", "60", "61", "62", "63", "64", "65",
    "66", "81", "82", "84", "86", "90", "91", "92", "93", "94", "95", "98",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum E164Error {
    #[error("empty input")]
    EmptyInput,
    #[error("non-digit content in {0:?}")]
    NonDigitContent(String),
    #[error("number has {0} digits, expected {MIN_DIGITS} to {MAX_DIGITS}")]
    LengthOutOfRange(usize),
    #[error("no leading '+' and no default country code")]
    MissingCountryCode,
    #[error("invalid default country code {0:?}")]
    BadDefaultCountryCode(String),
    #[error("domain {domain:?} is not under apex {apex:?}")]
    WrongApex { domain: String, apex: String },
    #[error("label {0:?} is not a single digit")]
    NonDigitLabel(String),
    #[error("no country code in the table matches {0}")]
    UnknownCountryCode(String),
    #[error("invalid apex {0:?}")]
    BadApex(String),
}

/// Length of the country code that prefixes `digits`, following the
/// structure of the ITU assignment plan.
fn country_code_len(digits: &str) -> usize {
    match digits.as_bytes().first() {
        Some(b'1') | Some(b'7') => 1,
        _ if digits.len() >= 2 && TWO_DIGIT_CODES.contains(&&digits[..2]) => 2,
        _ => 3.min(digits.len()),
    }
}

/// A validated international telephone number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct E164Number {
    digits: String,
    cc_len: usize,
}

impl E164Number {
    /// Builds a number from its full digit string (country code included).
    pub fn from_digits(digits: &str) -> Result<Self, E164Error> {
        if digits.is_empty() {
            return Err(E164Error::EmptyInput);
        }
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(E164Error::NonDigitContent(digits.to_string()));
        }
        if !(MIN_DIGITS..=MAX_DIGITS).contains(&digits.len()) {
            return Err(E164Error::LengthOutOfRange(digits.len()));
        }
        Ok(Self {
            digits: digits.to_string(),
            cc_len: country_code_len(digits),
        })
    }

    pub fn full_digits(&self) -> &str {
        &self.digits
    }

    pub fn country_code(&self) -> &str {
        &self.digits[..self.cc_len]
    }

    pub fn national_digits(&self) -> &str {
        &self.digits[self.cc_len..]
    }

    /// The `+`-prefixed form used as the NAPTR rewrite subject.
    pub fn to_plus_form(&self) -> String {
        format!("+{}", self.digits)
    }

    pub fn to_domain(&self, apex: &ApexConfig) -> EnumDomain {
        to_domain(self, apex)
    }
}

impl fmt::Display for E164Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "+{}", self.digits)
    }
}

impl FromStr for E164Number {
    type Err = E164Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_number(s, None)
    }
}

/// Parses a free-form telephone number.
///
/// A leading `+` marks the international form. Hyphens, spaces, dots and
/// parentheses are dropped. Without a `+` the default country code, if any,
/// is prepended.
pub fn parse_number(raw: &str, default_country_code: Option<&str>) -> Result<E164Number, E164Error> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(E164Error::EmptyInput);
    }
    let (international, body) = match trimmed.strip_prefix('+') {
        Some(rest) => (true, rest),
        None => (false, trimmed),
    };
    let stripped: String = body
        .chars()
        .filter(|c| !matches!(c, '-' | ' ' | '.' | '(' | ')' | '\t'))
        .collect();
    if stripped.is_empty() {
        return Err(E164Error::LengthOutOfRange(0));
    }
    if !stripped.chars().all(|c| c.is_ascii_digit()) {
        return Err(E164Error::NonDigitContent(stripped));
    }
    let digits = if international {
        stripped
    } else {
        match default_country_code {
            Some(cc) if !cc.is_empty() && cc.len() <= 3 && cc.bytes().all(|b| b.is_ascii_digit()) => {
                format!("{cc}{stripped}")
            }
            Some(cc) => return Err(E164Error::BadDefaultCountryCode(cc.to_string())),
            None => return Err(E164Error::MissingCountryCode),
        }
    };
    E164Number::from_digits(&digits)
}

/// The DNS suffix under which digit labels are rooted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApexConfig {
    apex: String,
    label: String,
}

impl ApexConfig {
    pub fn new(apex: &str, label: &str) -> Result<Self, E164Error> {
        let apex = apex.trim_end_matches('.');
        let valid = !apex.is_empty()
            && apex.split('.').all(|l| {
                (1..=63).contains(&l.len())
                    && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
            });
        if !valid {
            return Err(E164Error::BadApex(apex.to_string()));
        }
        Ok(Self {
            apex: apex.to_ascii_lowercase(),
            label: label.to_string(),
        })
    }

    pub fn apex(&self) -> &str {
        &self.apex
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn label_count(&self) -> usize {
        self.apex.split('.').count()
    }
}

impl Default for ApexConfig {
    fn default() -> Self {
        Self {
            apex: DEFAULT_APEX.to_string(),
            label: "public ENUM root".to_string(),
        }
    }
}

/// An ENUM domain name: reversed digit labels under an apex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumDomain {
    digit_labels: Vec<char>,
    apex: String,
}

impl EnumDomain {
    pub fn digit_labels(&self) -> &[char] {
        &self.digit_labels
    }

    pub fn apex(&self) -> &str {
        &self.apex
    }

    pub fn label_count(&self) -> usize {
        self.digit_labels.len() + self.apex.split('.').count()
    }
}

impl fmt::Display for EnumDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digit_labels {
            write!(f, "{d}.")?;
        }
        f.write_str(&self.apex)
    }
}

pub fn to_domain(n: &E164Number, apex: &ApexConfig) -> EnumDomain {
    EnumDomain {
        digit_labels: n.full_digits().chars().rev().collect(),
        apex: apex.apex().to_string(),
    }
}

/// Inverse of [`to_domain`]. A trailing root dot is accepted.
pub fn from_domain(domain: &str, apex: &ApexConfig) -> Result<E164Number, E164Error> {
    let name = domain.trim().trim_end_matches('.').to_ascii_lowercase();
    let wrong_apex = || E164Error::WrongApex {
        domain: domain.to_string(),
        apex: apex.apex().to_string(),
    };
    let head = if name == apex.apex() {
        ""
    } else {
        name.strip_suffix(apex.apex())
            .and_then(|h| h.strip_suffix('.'))
            .ok_or_else(wrong_apex)?
    };
    let mut digits = String::new();
    if !head.is_empty() {
        for label in head.split('.') {
            let mut chars = label.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_digit() => digits.push(c),
                _ => return Err(E164Error::NonDigitLabel(label.to_string())),
            }
        }
    }
    let digits: String = digits.chars().rev().collect();
    if !(MIN_DIGITS..=MAX_DIGITS).contains(&digits.len()) {
        return Err(E164Error::LengthOutOfRange(digits.len()));
    }
    E164Number::from_digits(&digits)
}

/// Country-code prefixes used for Tier-0 routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryCodeTable {
    prefixes: BTreeSet<String>,
}

impl CountryCodeTable {
    pub fn new<I, S>(prefixes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            prefixes: prefixes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::<String>::new())
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &str> {
        self.prefixes.iter().map(String::as_str)
    }

    /// Longest table prefix of `digits`.
    pub fn longest_match(&self, digits: &str) -> Option<&str> {
        self.prefixes
            .iter()
            .filter(|p| digits.starts_with(p.as_str()))
            .max_by_key(|p| p.len())
            .map(String::as_str)
    }
}

impl Default for CountryCodeTable {
    fn default() -> Self {
        Self::new(["1", "44", "49", "81", "82", "86"])
    }
}

pub fn country_code_of(n: &E164Number, table: &CountryCodeTable) -> Result<String, E164Error> {
    table
        .longest_match(n.full_digits())
        .map(str::to_string)
        .ok_or_else(|| E164Error::UnknownCountryCode(n.full_digits().to_string()))
}
