//! Live chat-completion backend with pluggable transport.
//!
//! The HTTP transport is behind the `live-http` feature so default builds
//! stay fully offline; tests exercise the retry and recording machinery
//! through mock transports.

use serde::{Deserialize, Serialize};

use super::{Message, Oracle, OracleError, OracleRole};

/// Endpoint configuration, usually read from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    /// Zero by default: determinism matters more than diversity here.
    pub temperature: f64,
}

impl LiveConfig {
    /// Read `STRATA_ORACLE_URL`, `STRATA_ORACLE_KEY` and
    /// `STRATA_ORACLE_MODEL`. Fails with an authentication error before any
    /// learning state can be touched.
    pub fn from_env() -> Result<Self, OracleError> {
        let endpoint = std::env::var("STRATA_ORACLE_URL")
            .map_err(|_| OracleError::Auth("STRATA_ORACLE_URL is not set".into()))?;
        let api_key = std::env::var("STRATA_ORACLE_KEY")
            .map_err(|_| OracleError::Auth("STRATA_ORACLE_KEY is not set".into()))?;
        if api_key.trim().is_empty() {
            return Err(OracleError::Auth("STRATA_ORACLE_KEY is empty".into()));
        }
        let model = std::env::var("STRATA_ORACLE_MODEL").unwrap_or_else(|_| "default".into());
        Ok(LiveConfig { endpoint, api_key, model, temperature: 0.0 })
    }
}

/// One attempt at delivering a chat-completion request.
pub trait Transport {
    fn post_chat(
        &mut self,
        config: &LiveConfig,
        role: OracleRole,
        messages: &[Message],
    ) -> Result<String, OracleError>;
}

/// Live oracle: retries transient transport errors with exponential backoff
/// (three attempts), then gives up. Authentication and rate-limit errors are
/// not retried.
pub struct LiveOracle<T: Transport> {
    config: LiveConfig,
    transport: T,
    pub attempts_logged: u32,
}

impl<T: Transport> LiveOracle<T> {
    pub fn new(config: LiveConfig, transport: T) -> Self {
        LiveOracle { config, transport, attempts_logged: 0 }
    }
}

const MAX_ATTEMPTS: u32 = 3;

impl<T: Transport> Oracle for LiveOracle<T> {
    fn complete(
        &mut self,
        role: OracleRole,
        messages: &[Message],
    ) -> Result<String, OracleError> {
        let mut last = OracleError::Transport("no attempt made".into());
        for attempt in 0..MAX_ATTEMPTS {
            self.attempts_logged += 1;
            match self.transport.post_chat(&self.config, role, messages) {
                Ok(response) => return Ok(response),
                Err(err @ OracleError::Auth(_)) | Err(err @ OracleError::RateLimited(_)) => {
                    return Err(err)
                }
                Err(err) => last = err,
            }
            if attempt + 1 < MAX_ATTEMPTS {
                std::thread::sleep(std::time::Duration::from_millis(50 << attempt));
            }
        }
        Err(last)
    }
}

#[cfg(feature = "live-http")]
mod http {
    use super::*;

    /// Chat-completion over HTTPS using the OpenAI-style request shape.
    pub struct HttpTransport;

    #[derive(Serialize)]
    struct ChatRequest<'a> {
        model: &'a str,
        temperature: f64,
        messages: Vec<ChatMessage<'a>>,
    }

    #[derive(Serialize)]
    struct ChatMessage<'a> {
        role: &'a str,
        content: &'a str,
    }

    #[derive(Deserialize)]
    struct ChatResponse {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: ChoiceMessage,
    }

    #[derive(Deserialize)]
    struct ChoiceMessage {
        content: String,
    }

    impl Transport for HttpTransport {
        fn post_chat(
            &mut self,
            config: &LiveConfig,
            _role: OracleRole,
            messages: &[Message],
        ) -> Result<String, OracleError> {
            let body = ChatRequest {
                model: &config.model,
                temperature: config.temperature,
                messages: messages
                    .iter()
                    .map(|m| ChatMessage {
                        role: match m.role {
                            super::super::MessageRole::System => "system",
                            super::super::MessageRole::User => "user",
                        },
                        content: &m.content,
                    })
                    .collect(),
            };
            let response = ureq::post(&config.endpoint)
                .header("authorization", &format!("Bearer {}", config.api_key))
                .send_json(&body);
            match response {
                Ok(mut resp) => {
                    let parsed: ChatResponse = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| OracleError::Transport(e.to_string()))?;
                    parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| OracleError::Transport("empty choices".into()))
                }
                Err(ureq::Error::StatusCode(code)) if code == 401 || code == 403 => {
                    Err(OracleError::Auth(format!("http {}", code)))
                }
                Err(ureq::Error::StatusCode(429)) => {
                    Err(OracleError::RateLimited("http 429".into()))
                }
                Err(e) => Err(OracleError::Transport(e.to_string())),
            }
        }
    }
}

#[cfg(feature = "live-http")]
pub use http::HttpTransport;
