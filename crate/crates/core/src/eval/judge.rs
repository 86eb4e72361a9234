use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templates;

pub const ENV_ENDPOINT: &str = "EVAL_JUDGE_ENDPOINT";
pub const ENV_MODEL: &str = "EVAL_JUDGE_MODEL";
pub const ENV_KEY: &str = "EVAL_JUDGE_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    /// Additional attempts after a transport failure.
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            timeout_secs: 60,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

impl JudgeConfig {
    /// Fills unset endpoint, model and key from the environment.
    pub fn with_env(mut self) -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if self.endpoint.is_empty() {
            self.endpoint = var(ENV_ENDPOINT).unwrap_or_default();
        }
        if self.model.is_empty() {
            self.model = var(ENV_MODEL).unwrap_or_default();
        }
        if self.api_key.is_none() {
            self.api_key = var(ENV_KEY);
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint.is_empty() {
            return Err(format!("judge endpoint is not set (flag, config or {ENV_ENDPOINT})"));
        }
        if self.model.is_empty() {
            return Err(format!("judge model is not set (flag, config or {ENV_MODEL})"));
        }
        if self.timeout_secs == 0 {
            return Err("judge timeout must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("judge max_in_flight must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("judge transport: {0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("judge response has no valid score line: {raw:?}")]
    Parse { raw: String },
    #[error("judge unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: u8,
    pub explanation: String,
}

/// Sends one prompt plus one PNG image and returns the model's reply text.
pub trait JudgeTransport: Sync {
    fn complete(&self, prompt: &str, image_png: &[u8]) -> Result<String, TransportError>;
}

/// Reads the first `Score: <integer>` line (score in 1..=10) and the text
/// after `Explanation:`.
pub fn parse_judge_response(text: &str) -> Result<JudgeVerdict, JudgeError> {
    let parse_err = || JudgeError::Parse { raw: text.to_string() };
    let score = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("Score:").and_then(|rest| rest.trim().parse::<u8>().ok()))
        .ok_or_else(parse_err)?;
    if !(1..=10).contains(&score) {
        return Err(parse_err());
    }
    let explanation = text.find("Explanation:").map(|i| text[i + "Explanation:".len()..].trim().to_string());
    Ok(JudgeVerdict { score, explanation: explanation.unwrap_or_default() })
}

/// Scores one overlay. Transport failures are retried `retries` times; a
/// malformed reply is not retried.
pub fn judge_score(
    transport: &dyn JudgeTransport,
    instruction: &str,
    image_png: &[u8],
    retries: u32,
) -> Result<JudgeVerdict, JudgeError> {
    let prompt = templates::judge_prompt(instruction);
    let mut last = String::new();
    for _ in 0..=retries {
        match transport.complete(&prompt, image_png) {
            Ok(reply) => return parse_judge_response(&reply),
            Err(TransportError(m)) => last = m,
        }
    }
    Err(JudgeError::Transport { attempts: retries + 1, message: last })
}

/// Chat-completions client.
pub struct HttpJudge {
    config: JudgeConfig,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(config: JudgeConfig) -> Result<Self, String> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    fn body(&self, prompt: &str, image_png: &[u8]) -> serde_json::Value {
        let url = format!("data:image/png;base64,{}", STANDARD.encode(image_png));
        serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": url}}
                ]
            }]
        })
    }
}

impl JudgeTransport for HttpJudge {
    fn complete(&self, prompt: &str, image_png: &[u8]) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp =
            req.send_string(&self.body(prompt, image_png).to_string()).map_err(|e| TransportError(e.to_string()))?;
        let text = resp.into_string().map_err(|e| TransportError(e.to_string()))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| TransportError(format!("invalid JSON reply: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| TransportError("reply has no choices[0].message.content".into()))
    }
}
