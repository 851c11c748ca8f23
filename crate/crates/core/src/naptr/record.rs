use std::fmt;
use std::str::FromStr;

use super::rewrite::SubstitutionExpr;
use super::NaptrError;

/// Who may see a record: everyone, or only parties holding access rights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Visibility {
    #[default]
    Public,
    Restricted,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Public => "public",
            Visibility::Restricted => "restricted",
        }
    }
}

impl FromStr for Visibility {
    type Err = NaptrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "public" => Ok(Visibility::Public),
            "restricted" => Ok(Visibility::Restricted),
            other => Err(NaptrError::BadVisibility(other.to_string())),
        }
    }
}

impl fmt::Display for Visibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One Naming Authority Pointer entry.
///
/// The replacement is stored as written; `"."` means "no replacement".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NaptrRecord {
    pub order: u16,
    pub preference: u16,
    pub flags: String,
    pub service: String,
    pub regexp: String,
    pub replacement: String,
    pub visibility: Visibility,
}

impl NaptrRecord {
    /// Validates the field combination and returns the record.
    pub fn new(
        order: u16,
        preference: u16,
        flags: &str,
        service: &str,
        regexp: &str,
        replacement: &str,
    ) -> Result<Self, NaptrError> {
        let record = Self {
            order,
            preference,
            flags: flags.to_string(),
            service: service.to_string(),
            regexp: regexp.to_string(),
            replacement: if replacement.is_empty() { ".".into() } else { replacement.to_string() },
            visibility: Visibility::Public,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn with_visibility(mut self, visibility: Visibility) -> Self {
        self.visibility = visibility;
        self
    }

    pub fn has_replacement(&self) -> bool {
        !self.replacement.is_empty() && self.replacement != "."
    }

    /// A terminal record rewrites straight to a URI.
    pub fn is_terminal(&self) -> bool {
        self.flags.eq_ignore_ascii_case("u") && !self.regexp.is_empty()
    }

    /// Records sharing this key replace each other on provisioning.
    pub fn merge_key(&self) -> (String, u16, u16) {
        (self.service.to_ascii_lowercase(), self.order, self.preference)
    }

    fn validate(&self) -> Result<(), NaptrError> {
        let is_u = match self.flags.to_ascii_lowercase().as_str() {
            "u" => true,
            "" => false,
            other => return Err(NaptrError::UnsupportedFlags(other.to_string())),
        };
        if self.service.is_empty() || self.service.chars().any(|c| c.is_whitespace() || c == '"') {
            return Err(NaptrError::BadService(self.service.clone()));
        }
        match (self.regexp.is_empty(), self.has_replacement()) {
            (true, false) if is_u => return Err(NaptrError::FlagRegexpConflict),
            (true, false) => return Err(NaptrError::NoTarget),
            (false, true) => return Err(NaptrError::RegexpAndReplacement),
            _ => {}
        }
        if !self.regexp.is_empty() {
            SubstitutionExpr::parse(&self.regexp)?;
        }
        Ok(())
    }

    /// Renders the six-field zone line; the inverse of [`parse_record`].
    pub fn zone_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.order,
            self.preference,
            quote(&self.flags),
            quote(&self.service),
            quote(&self.regexp),
            self.replacement
        )
    }
}

impl fmt::Display for NaptrRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.zone_line())
    }
}

impl FromStr for NaptrRecord {
    type Err = NaptrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_record(s)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Splits a zone line into whitespace separated tokens; double-quoted tokens
/// keep their spaces and a `\"` inside quotes is an escaped quote. Other
/// backslashes are kept verbatim so regexp escapes survive.
fn tokenize(text: &str) -> Result<Vec<(String, bool)>, NaptrError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' {
            chars.next();
            let mut tok = String::new();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' if chars.peek() == Some(&'"') => {
                        tok.push('"');
                        chars.next();
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    _ => tok.push(c),
                }
            }
            if !closed {
                return Err(NaptrError::UnterminatedQuote);
            }
            tokens.push((tok, true));
        } else {
            let mut tok = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                tok.push(c);
                chars.next();
            }
            tokens.push((tok, false));
        }
    }
    Ok(tokens)
}

/// Parses `order preference "flags" "service" "regexp" replacement`.
pub fn parse_record(text: &str) -> Result<NaptrRecord, NaptrError> {
    let tokens = tokenize(text)?;
    if tokens.len() != 6 {
        return Err(NaptrError::FieldCount(tokens.len()));
    }
    let int = |(tok, quoted): &(String, bool)| -> Result<u16, NaptrError> {
        if *quoted {
            return Err(NaptrError::BadInteger(tok.clone()));
        }
        tok.parse::<u16>().map_err(|_| NaptrError::BadInteger(tok.clone()))
    };
    let order = int(&tokens[0])?;
    let preference = int(&tokens[1])?;
    for (tok, quoted) in &tokens[2..5] {
        if !quoted {
            return Err(NaptrError::Unquoted(tok.clone()));
        }
    }
    NaptrRecord::new(
        order,
        preference,
        &tokens[2].0,
        &tokens[3].0,
        &tokens[4].0,
        &tokens[5].0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terminal_sip_record() {
        let r = parse_record(r#"100 10 "u" "E2U+sip" "!^.*$!sip:info@example.com!" ."#).unwrap();
        assert_eq!(r.order, 100);
        assert_eq!(r.preference, 10);
        assert_eq!(r.flags, "u");
        assert_eq!(r.service, "E2U+sip");
        assert_eq!(r.regexp, "!^.*$!sip:info@example.com!");
        assert_eq!(r.replacement, ".");
        assert!(r.is_terminal());
    }

    #[test]
    fn replacement_only_record_is_non_terminal() {
        let r = parse_record(r#"100 10 "u" "E2U+sip" "" example.net"#).unwrap();
        assert_eq!(r.replacement, "example.net");
        assert!(!r.is_terminal());
        assert!(r.has_replacement());
    }

    #[test]
    fn terminal_flag_needs_regexp() {
        assert_eq!(
            parse_record(r#"100 10 "u" "E2U+sip" "" ."#),
            Err(NaptrError::FlagRegexpConflict)
        );
    }

    #[test]
    fn structural_errors() {
        assert_eq!(parse_record(r#"100 10 "u" "E2U+sip" ."#), Err(NaptrError::FieldCount(5)));
        assert!(matches!(
            parse_record(r#"100 x "u" "E2U+sip" "!a!b!" ."#),
            Err(NaptrError::BadInteger(_))
        ));
        assert!(matches!(
            parse_record(r#"70000 1 "u" "E2U+sip" "!a!b!" ."#),
            Err(NaptrError::BadInteger(_))
        ));
        assert!(matches!(
            parse_record(r#"1 1 "u" "E2U+sip" "!a!b" ."#),
            Err(NaptrError::BadDelimiter(_))
        ));
        assert_eq!(
            parse_record(r#"1 1 "" "E2U+sip" "" ."#),
            Err(NaptrError::NoTarget)
        );
        assert_eq!(
            parse_record(r#"1 1 "" "E2U+sip" "!a!b!" other.example"#),
            Err(NaptrError::RegexpAndReplacement)
        );
        assert!(matches!(
            parse_record(r#"1 1 "s" "E2U+sip" "" srv.example"#),
            Err(NaptrError::UnsupportedFlags(_))
        ));
        assert_eq!(
            parse_record(r#"1 1 "u" "E2U+sip" "!a!b! ."#),
            Err(NaptrError::UnterminatedQuote)
        );
    }

    #[test]
    fn zone_line_round_trips_quotes() {
        let r = NaptrRecord::new(5, 6, "u", "E2U+sip", r#"!^.*$!sip:"x"@y!"#, ".").unwrap();
        assert_eq!(parse_record(&r.zone_line()).unwrap(), r);
    }
}
