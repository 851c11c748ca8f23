//! Text frames exchanged between tiers.
//!
//! A frame on the wire is a 4-byte big-endian length followed by that many
//! bytes of UTF-8. The body is a list of `key=value` pairs separated by `;`,
//! always starting with `kind=<KIND>`. The characters `%`, `;`, `=`, CR and
//! LF inside keys or values are percent-encoded.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame shorter than its length prefix")]
    Truncated,
    #[error("frame body is not UTF-8")]
    NotUtf8,
    #[error("malformed field {0:?}")]
    BadField(String),
    #[error("frame has no kind")]
    MissingKind,
    #[error("unknown frame kind {0:?}")]
    UnknownKind(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("bad escape in {0:?}")]
    BadEscape(String),
}

macro_rules! frame_kinds {
    ($($variant:ident => $text:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum FrameKind {
            $($variant),*
        }

        impl FrameKind {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(FrameKind::$variant => $text),*
                }
            }
        }

        impl FromStr for FrameKind {
            type Err = WireError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(FrameKind::$variant),)*
                    other => Err(WireError::UnknownKind(other.to_string())),
                }
            }
        }
    };
}

frame_kinds! {
    Discover => "DISCOVER",
    Lookup => "LOOKUP",
    Register => "REGISTER",
    Change => "CHANGE",
    Remove => "REMOVE",
    PeerUpdate => "PEER_UPDATE",
    Notice => "NOTICE",
    Subscribe => "SUBSCRIBE",
    Provision => "PROVISION",
    Get => "GET",
    Grant => "GRANT",
    Revoke => "REVOKE",
    TransferInit => "TRANSFER_INIT",
    TransferDispute => "TRANSFER_DISPUTE",
    Disconnect => "DISCONNECT",
    MigrateReq => "MIGRATE_REQ",
    MigrateResp => "MIGRATE_RESP",
    Release => "RELEASE",
    Response => "RESP",
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! error_codes {
    ($($variant:ident),* $(,)?) => {
        /// Protocol-level failure reasons carried in error responses.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ErrorCode {
            $($variant),*
        }

        impl ErrorCode {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(ErrorCode::$variant => stringify!($variant)),*
                }
            }
        }

        impl FromStr for ErrorCode {
            type Err = WireError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($variant) => Ok(ErrorCode::$variant),)*
                    other => Err(WireError::BadField(other.to_string())),
                }
            }
        }
    };
}

error_codes! {
    BadRequest,
    InvalidNumber,
    UnknownCountryCode,
    NoDelegation,
    NotAuthoritative,
    UnaccreditedRegistrar,
    StaleOldRegistrar,
    UnknownPeer,
    EnumInactive,
    AccessDenied,
    InvalidRecord,
    NoPhoneService,
    RegistrarKindForbidden,
    VerificationFailed,
    NotSubscriber,
    UnknownGrant,
    SameRegistrar,
    AlreadyComplete,
    UnknownTransfer,
    UnknownSubscription,
    UnknownActor,
    Timeout,
    CooperationNotApplicable,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    fields: Vec<(String, String)>,
}

impl Frame {
    pub fn new(kind: FrameKind) -> Self {
        Self { kind, fields: Vec::new() }
    }

    pub fn ok() -> Self {
        Self::new(FrameKind::Response).with("status", "ok")
    }

    pub fn error(code: ErrorCode, detail: impl fmt::Display) -> Self {
        Self::new(FrameKind::Response)
            .with("status", "err")
            .with("code", code.as_str())
            .with("detail", detail)
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, WireError> {
        self.get(key).ok_or_else(|| WireError::MissingField(key.to_string()))
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn is_ok(&self) -> bool {
        self.get("status") == Some("ok")
    }

    /// Error code and detail when this is an error response.
    pub fn error_code(&self) -> Option<(ErrorCode, String)> {
        if self.get("status") != Some("err") {
            return None;
        }
        let code = self
            .get("code")
            .and_then(|c| c.parse().ok())
            .unwrap_or(ErrorCode::BadRequest);
        Some((code, self.get("detail").unwrap_or_default().to_string()))
    }

    /// The body text, without the length prefix.
    pub fn to_text(&self) -> String {
        let mut out = format!("kind={}", self.kind);
        for (k, v) in &self.fields {
            out.push(';');
            out.push_str(&escape(k));
            out.push('=');
            out.push_str(&escape(v));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, WireError> {
        let mut parts = text.split(';');
        let first = parts.next().ok_or(WireError::MissingKind)?;
        let kind = first.strip_prefix("kind=").ok_or(WireError::MissingKind)?;
        let kind: FrameKind = unescape(kind)?.parse()?;
        let mut frame = Frame::new(kind);
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| WireError::BadField(part.to_string()))?;
            frame.fields.push((unescape(k)?, unescape(v)?));
        }
        Ok(frame)
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = self.to_text().into_bytes();
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        let len_bytes: [u8; 4] = bytes.get(..4).ok_or(WireError::Truncated)?.try_into().unwrap();
        let len = u32::from_be_bytes(len_bytes) as usize;
        let body = bytes.get(4..4 + len).ok_or(WireError::Truncated)?;
        let text = std::str::from_utf8(body).map_err(|_| WireError::NotUtf8)?;
        Ok((Self::parse_text(text)?, 4 + len))
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ';' => out.push_str("%3B"),
            '=' => out.push_str("%3D"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> Result<String, WireError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3).ok_or_else(|| WireError::BadEscape(s.to_string()))?;
        let c = match code {
            "25" => '%',
            "3B" => ';',
            "3D" => '=',
            "0A" => '\n',
            "0D" => '\r',
            _ => return Err(WireError::BadEscape(s.to_string())),
        };
        out.push(c);
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}
