//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendProfile, GatewayError, GenerationRequest, Result};

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "EHRQA_API_KEY";
/// Environment variable overriding the default endpoint URL.
pub const ENDPOINT_ENV: &str = "EHRQA_ENDPOINT";

pub struct OpenAiBackend {
    agent: ureq::Agent,
    url: String,
    model_name: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiBackend {
    pub fn new(profile: &BackendProfile, api_key: Option<String>) -> Result<Self> {
        profile.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(profile.request_timeout_secs)))
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(config),
            url: chat_url(&profile.endpoint),
            model_name: profile.model_name.clone(),
            api_key,
        })
    }

    /// Builds a client reading the API key from [`API_KEY_ENV`].
    pub fn from_env(profile: &BackendProfile) -> Result<Self> {
        Self::new(profile, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Accepts either an API base (`.../v1`) or a full `.../chat/completions` URL.
fn chat_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

pub(crate) fn request_body(model: &str, request: &GenerationRequest) -> serde_json::Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_prompt},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    })
}

impl Backend for OpenAiBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let body = request_body(&self.model_name, request).to_string();
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match call.send(body.as_bytes()) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(status)) => return Err(GatewayError::Http { status, attempts: 1 }),
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout { attempts: 1 }),
            Err(e) => {
                return Err(GatewayError::Transport {
                    message: e.to_string(),
                    attempts: 1,
                })
            }
        };
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport {
                message: e.to_string(),
                attempts: 1,
            })?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::InvalidResponse("no choices[0].message.content".into()))
    }
}
