//! Deterministic offline backend serving a recorded transcript in order.

use std::path::Path;

use super::{load_transcript, request_digest, Exchange, Message, Oracle, OracleError, OracleRole};

/// Serves recorded responses in sequence. A request whose role or digest
/// differs from the recording raises [`OracleError::ReplayDivergence`] with
/// a side-by-side diff of the first differing line.
pub struct ReplayOracle {
    exchanges: Vec<Exchange>,
    cursor: usize,
}

impl ReplayOracle {
    pub fn new(exchanges: Vec<Exchange>) -> Self {
        ReplayOracle { exchanges, cursor: 0 }
    }

    pub fn from_file(path: &Path) -> Result<Self, OracleError> {
        Ok(ReplayOracle::new(load_transcript(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.len().saturating_sub(self.cursor)
    }

    fn diff(recorded: &[Message], actual: &[Message]) -> String {
        let render = |messages: &[Message]| {
            let mut out = String::new();
            for m in messages {
                out.push_str(&m.content);
                out.push('\n');
            }
            out
        };
        let rec = render(recorded);
        let act = render(actual);
        for (i, (r, a)) in rec.lines().zip(act.lines()).enumerate() {
            if r != a {
                return format!("line {}: recorded `{}` | actual `{}`", i + 1, r, a);
            }
        }
        let (rl, al) = (rec.lines().count(), act.lines().count());
        if rl != al {
            format!("recorded request has {} lines, actual has {}", rl, al)
        } else {
            "requests differ outside message content".to_string()
        }
    }
}

impl Oracle for ReplayOracle {
    fn complete(
        &mut self,
        role: OracleRole,
        messages: &[Message],
    ) -> Result<String, OracleError> {
        let Some(expected) = self.exchanges.get(self.cursor) else {
            return Err(OracleError::TranscriptExhausted(self.exchanges.len() as u64));
        };
        let digest = request_digest(role, messages);
        if role != expected.role || digest != expected.digest {
            return Err(OracleError::ReplayDivergence {
                seq: expected.seq,
                role: format!("expected {}, got {}", expected.role, role),
                diff: Self::diff(&expected.request, messages),
            });
        }
        let response = expected.response.clone();
        self.cursor += 1;
        Ok(response)
    }
}
