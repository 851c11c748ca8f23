//! Substitution expressions of the form `<d>pattern<d>replacement<d>[i]`.

use regex::{Regex, RegexBuilder};

use super::NaptrError;

#[derive(Debug, Clone)]
pub struct SubstitutionExpr {
    pattern: Regex,
    replacement: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Group(usize),
}

/// Splits on unescaped occurrences of `delim`. Escapes are left in place.
fn split_unescaped(body: &str, delim: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == delim {
            parts.push(&body[start..i]);
            start = i + c.len_utf8();
        }
    }
    parts.push(&body[start..]);
    parts
}

/// Removes backslashes that escape the delimiter inside the pattern.
fn unescape_delim(s: &str, delim: char) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\\' && chars.peek() == Some(&delim) {
            continue;
        }
        out.push(c);
    }
    out
}

fn parse_replacement(s: &str) -> Result<Vec<Piece>, NaptrError> {
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            lit.push(c);
            continue;
        }
        match chars.next() {
            Some(d @ '1'..='9') => {
                if !lit.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                }
                pieces.push(Piece::Group(d as usize - '0' as usize));
            }
            Some('0') => return Err(NaptrError::BadBackreference(0)),
            Some(other) => lit.push(other),
            None => lit.push('\\'),
        }
    }
    if !lit.is_empty() {
        pieces.push(Piece::Literal(lit));
    }
    Ok(pieces)
}

impl SubstitutionExpr {
    pub fn parse(expr: &str) -> Result<Self, NaptrError> {
        let delim = expr
            .chars()
            .next()
            .ok_or_else(|| NaptrError::BadDelimiter(expr.to_string()))?;
        if delim.is_ascii_alphanumeric() || delim == '\\' || delim.is_whitespace() {
            return Err(NaptrError::BadDelimiter(expr.to_string()));
        }
        let parts = split_unescaped(&expr[delim.len_utf8()..], delim);
        // pattern, replacement, trailing flags
        if parts.len() != 3 {
            return Err(NaptrError::BadDelimiter(expr.to_string()));
        }
        let case_insensitive = match parts[2] {
            "" => false,
            "i" => true,
            _ => return Err(NaptrError::BadDelimiter(expr.to_string())),
        };
        let pattern = RegexBuilder::new(&unescape_delim(parts[0], delim))
            .case_insensitive(case_insensitive)
            .build()
            .map_err(|e| NaptrError::BadPattern(e.to_string()))?;
        let replacement = parse_replacement(parts[1])?;
        Ok(Self { pattern, replacement })
    }

    /// Number of capture groups, not counting the whole match.
    pub fn group_count(&self) -> usize {
        self.pattern.captures_len() - 1
    }

    pub fn apply(&self, subject: &str) -> Result<String, NaptrError> {
        if let Some(k) = self.replacement.iter().find_map(|p| match p {
            Piece::Group(k) if *k > self.group_count() => Some(*k),
            _ => None,
        }) {
            return Err(NaptrError::BadBackreference(k));
        }
        let caps = self.pattern.captures(subject).ok_or(NaptrError::NoMatch)?;
        let mut out = String::new();
        for piece in &self.replacement {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Group(k) => out.push_str(caps.get(*k).map_or("", |m| m.as_str())),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(expr: &str, subject: &str) -> Result<String, NaptrError> {
        SubstitutionExpr::parse(expr)?.apply(subject)
    }

    #[test]
    fn literal_replacement() {
        assert_eq!(
            apply("!^.*$!sip:info@example.com!", "+13154434473").unwrap(),
            "sip:info@example.com"
        );
    }

    #[test]
    fn group_substitution() {
        assert_eq!(
            apply(r"!^\+1(.*)$!sip:\1@gw.example.net!", "+13154434473").unwrap(),
            "sip:3154434473@gw.example.net"
        );
        assert_eq!(
            apply(r"/^\+(1)(3)(1)(5)(4)(4)(3)(4)(4)(7)(3)$/\9\8\7\6\5\4\3\2\1/", "+13154434473")
                .unwrap(),
            "443445131"
        );
    }

    #[test]
    fn prefix_mismatch_is_no_match() {
        assert_eq!(apply(r"!^\+44.*$!sip:x@y!", "+13154434473"), Err(NaptrError::NoMatch));
    }

    #[test]
    fn backreference_beyond_groups() {
        assert_eq!(
            apply(r"!^\+(1).*$!sip:\2@y!", "+13154434473"),
            Err(NaptrError::BadBackreference(2))
        );
        assert_eq!(
            apply(r"!^.*$!sip:\1@y!", "+13154434473"),
            Err(NaptrError::BadBackreference(1))
        );
    }

    #[test]
    fn escaped_delimiter_and_flags() {
        assert_eq!(apply(r"!^\+1\!?(.*)$!x\!\1!", "+1234").unwrap(), "x!234");
        assert_eq!(apply("!^ABC$!ok!i", "abc").unwrap(), "ok");
        assert!(matches!(SubstitutionExpr::parse("!a!b!x"), Err(NaptrError::BadDelimiter(_))));
        assert!(matches!(SubstitutionExpr::parse("!a!b!c!"), Err(NaptrError::BadDelimiter(_))));
        assert!(matches!(SubstitutionExpr::parse("1a1b1"), Err(NaptrError::BadDelimiter(_))));
        assert!(matches!(SubstitutionExpr::parse("!(!b!"), Err(NaptrError::BadPattern(_))));
    }

    #[test]
    fn unmatched_optional_group_is_empty() {
        assert_eq!(apply(r"!^\+1(9)?(.*)$![\1][\2]!", "+1234").unwrap(), "[][234]");
    }

    #[test]
    fn posix_classes_are_accepted() {
        assert_eq!(
            apply(r"!^\+([[:digit:]]{2})[[:digit:]]*$!cc=\1!", "+4930123").unwrap(),
            "cc=49"
        );
    }
}
