//! Single interface for all oracle roles with replay, scripted and live
//! backends.
//!
//! Every request is tagged with a role, given a strictly increasing sequence
//! number, and recorded as an [`Exchange`]; a transcript of exchanges can be
//! replayed byte-for-byte later, so any learning run is reproducible
//! offline.

mod live;
mod parse;
mod prompts;
mod replay;
mod scripted;

pub use live::{LiveConfig, LiveOracle, Transport};
#[cfg(feature = "live-http")]
pub use live::HttpTransport;
pub use parse::{
    parse_response, DomainEditReply, EditMode, OperatorEdit, OracleReply, PredicateDecl,
    RecoveryDecisionRaw, SkillArg, SkillTemplate, StateChange, StateChangeValue,
};
pub use prompts::{build_prompt, PromptContext};
pub use replay::ReplayOracle;
pub use scripted::{ScriptedOracle, GRIPPER_AROUND_WITH_ORIENTATION, TABLETOP_CLASSIFIER_SOURCES};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OracleRole {
    Domain,
    PlanFallback,
    Translate,
    Decompose,
    Reasoner,
    ClassifierGen,
    ClassifierRefine,
    PseudoLabel,
}

impl fmt::Display for OracleRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OracleRole::Domain => "domain",
            OracleRole::PlanFallback => "plan-fallback",
            OracleRole::Translate => "translate",
            OracleRole::Decompose => "decompose",
            OracleRole::Reasoner => "reasoner",
            OracleRole::ClassifierGen => "classifier-gen",
            OracleRole::ClassifierRefine => "classifier-refine",
            OracleRole::PseudoLabel => "pseudo-label",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: MessageRole::User, content: content.into() }
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub seq: u64,
    pub role: OracleRole,
    pub request: Vec<Message>,
    pub response: String,
    pub digest: String,
}

/// Stable FNV-1a digest over a role plus request messages; replay matches
/// requests by this value.
pub fn request_digest(role: OracleRole, messages: &[Message]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    eat(role.to_string().as_bytes());
    for m in messages {
        eat(match m.role {
            MessageRole::System => b"\x01system:",
            MessageRole::User => b"\x02user:",
        });
        eat(m.content.as_bytes());
    }
    format!("{:016x}", hash)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("missing context field `{0}` for prompt")]
    MissingContextField(String),
    #[error("response parse failure in section `{section}`: {detail}")]
    ParseFailure { section: String, detail: String },
    #[error("replay divergence at exchange {seq} ({role}): {diff}")]
    ReplayDivergence { seq: u64, role: String, diff: String },
    #[error("transcript exhausted after {0} exchanges")]
    TranscriptExhausted(u64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("scripted oracle has no rule for this request: {0}")]
    NoScript(String),
    #[error("transcript i/o: {0}")]
    Io(String),
}

/// A completion backend: scripted rules, a recorded transcript, or a live
/// chat-completion endpoint.
pub trait Oracle {
    fn complete(&mut self, role: OracleRole, messages: &[Message])
        -> Result<String, OracleError>;
}

/// Per-role usage counters (calls plus request/response sizes in characters).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub calls: BTreeMap<String, u32>,
    pub request_chars: u64,
    pub response_chars: u64,
}

/// Wraps a backend with sequence numbering, transcript recording and usage
/// accounting. One session per learning run; requests are strictly
/// sequential.
pub struct OracleSession {
    backend: Box<dyn Oracle>,
    exchanges: Vec<Exchange>,
    usage: UsageStats,
    record_path: Option<PathBuf>,
}

impl OracleSession {
    pub fn new(backend: Box<dyn Oracle>) -> Self {
        OracleSession {
            backend,
            exchanges: Vec::new(),
            usage: UsageStats::default(),
            record_path: None,
        }
    }

    /// Also append every exchange to a JSON-lines transcript at `path`.
    pub fn recording_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.record_path = Some(path.into());
        self
    }

    pub fn ask(
        &mut self,
        role: OracleRole,
        messages: Vec<Message>,
    ) -> Result<String, OracleError> {
        let response = self.backend.complete(role, &messages)?;
        let seq = self.exchanges.len() as u64;
        self.usage.request_chars +=
            messages.iter().map(|m| m.content.len() as u64).sum::<u64>();
        self.usage.response_chars += response.len() as u64;
        *self.usage.calls.entry(role.to_string()).or_insert(0) += 1;
        let exchange = Exchange {
            seq,
            role,
            digest: request_digest(role, &messages),
            request: messages,
            response: response.clone(),
        };
        if let Some(path) = &self.record_path {
            append_exchange(path, &exchange).map_err(|e| OracleError::Io(e.to_string()))?;
        }
        self.exchanges.push(exchange);
        Ok(response)
    }

    /// Ask and parse; on a parse failure, re-ask once with the parse error
    /// appended to the request (self-refinement), then give up.
    pub fn ask_parsed(
        &mut self,
        role: OracleRole,
        messages: Vec<Message>,
    ) -> Result<OracleReply, OracleError> {
        let response = self.ask(role, messages.clone())?;
        match parse_response(role, &response) {
            Ok(reply) => Ok(reply),
            Err(err) => {
                let mut retry = messages;
                retry.push(Message::user(format!(
                    "Your previous response could not be parsed: {}. \
                     Respond again following the required format exactly.",
                    err
                )));
                let response = self.ask(role, retry)?;
                parse_response(role, &response)
            }
        }
    }

    pub fn role_calls(&self, role: OracleRole) -> u32 {
        self.usage.calls.get(&role.to_string()).copied().unwrap_or(0)
    }

    pub fn usage(&self) -> &UsageStats {
        &self.usage
    }

    pub fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }

    /// Write the whole session transcript as JSON-lines.
    pub fn save_transcript(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = String::new();
        for ex in &self.exchanges {
            out.push_str(
                &serde_json::to_string(ex).map_err(|e| OracleError::Io(e.to_string()))?,
            );
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| OracleError::Io(e.to_string()))
    }
}

fn append_exchange(path: &Path, exchange: &Exchange) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{}", serde_json::to_string(exchange)?)
}

/// Load a JSON-lines transcript.
pub fn load_transcript(path: &Path) -> Result<Vec<Exchange>, OracleError> {
    let text = std::fs::read_to_string(path).map_err(|e| OracleError::Io(e.to_string()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| OracleError::Io(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl Oracle for Echo {
        fn complete(
            &mut self,
            _role: OracleRole,
            messages: &[Message],
        ) -> Result<String, OracleError> {
            Ok(format!("echo: {}", messages.last().map(|m| m.content.as_str()).unwrap_or("")))
        }
    }

    #[test]
    fn session_sequences_and_counts() {
        let mut session = OracleSession::new(Box::new(Echo));
        session.ask(OracleRole::Domain, vec![Message::user("a")]).unwrap();
        session.ask(OracleRole::Translate, vec![Message::user("b")]).unwrap();
        session.ask(OracleRole::Translate, vec![Message::user("c")]).unwrap();
        assert_eq!(session.exchanges()[0].seq, 0);
        assert_eq!(session.exchanges()[2].seq, 2);
        assert_eq!(session.role_calls(OracleRole::Translate), 2);
        assert_eq!(session.role_calls(OracleRole::Reasoner), 0);
    }

    #[test]
    fn digest_is_content_sensitive() {
        let a = request_digest(OracleRole::Domain, &[Message::user("x")]);
        let b = request_digest(OracleRole::Domain, &[Message::user("y")]);
        let c = request_digest(OracleRole::Translate, &[Message::user("x")]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, request_digest(OracleRole::Domain, &[Message::user("x")]));
    }
}
