//! Line-delimited run log: `id=<n>;step=<s>;kind=<k>;key=value...`.

use std::fmt;

use crate::wire::{escape, unescape, WireError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub id: u64,
    pub step: u64,
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl LogRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn is_ok(&self) -> bool {
        self.get("status") == Some("ok")
    }

    pub fn parse(line: &str) -> Result<Self, WireError> {
        let mut pairs = Vec::new();
        for part in line.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| WireError::BadField(part.to_string()))?;
            pairs.push((unescape(k)?, unescape(v)?));
        }
        let mut take = |key: &str| -> Result<String, WireError> {
            match pairs.first() {
                Some((k, _)) if k == key => Ok(pairs.remove(0).1),
                _ => Err(WireError::MissingField(key.to_string())),
            }
        };
        let id = take("id")?.parse().map_err(|_| WireError::BadField("id".into()))?;
        let step = take("step")?.parse().map_err(|_| WireError::BadField("step".into()))?;
        let kind = take("kind")?;
        Ok(Self { id, step, kind, fields: pairs })
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id={};step={};kind={}", self.id, self.step, escape(&self.kind))?;
        for (k, v) in &self.fields {
            write!(f, ";{}={}", escape(k), escape(v))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push<K, V>(&mut self, step: u64, kind: &str, fields: impl IntoIterator<Item = (K, V)>) -> u64
    where
        K: Into<String>,
        V: fmt::Display,
    {
        let id = self.records.len() as u64 + 1;
        self.records.push(LogRecord {
            id,
            step,
            kind: kind.to_string(),
            fields: fields.into_iter().map(|(k, v)| (k.into(), v.to_string())).collect(),
        });
        id
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn last_id(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses rendered text; the error carries the 1-based line number.
    pub fn parse(text: &str) -> Result<Self, (usize, WireError)> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(LogRecord::parse(line).map_err(|e| (i + 1, e))?);
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut log = EventLog::new();
        log.push(1, "event", [("event", "provision"), ("line", "x;y=z")]);
        log.push(2, "charge", [("amount", "1")]);
        let text = log.render();
        assert!(text.starts_with("id=1;step=1;kind=event;event=provision;line=x%3By%3Dz\n"));
        assert_eq!(EventLog::parse(&text).unwrap(), log);
        assert_eq!(EventLog::parse("id=1;step=1;kind=x\nbogus\n").unwrap_err().0, 2);
    }
}
