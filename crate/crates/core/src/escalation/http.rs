use std::time::Duration;

use serde::Serialize;

use super::{EscalationClient, EscalationRequest, Stage, TransportError, RESPONSE_SCHEMA};

const MULTIMODAL_PROMPT: &str = include_str!("../../assets/prompts/multimodal.txt");
const CONSTRAINED_PROMPT: &str = include_str!("../../assets/prompts/constrained_llm.txt");

#[derive(Serialize)]
struct WireEnvelope<'a> {
    instructions: &'a str,
    response_schema: serde_json::Value,
    request: &'a EscalationRequest,
}

/// Posts escalation requests to a model gateway as JSON and returns the
/// response body text.
pub struct HttpEscalationClient {
    endpoint: String,
    credential: String,
    agent: ureq::Agent,
}

impl HttpEscalationClient {
    /// Reads the credential from `credential_env`; fails if it is unset.
    pub fn new(
        endpoint: &str,
        credential_env: &str,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let credential = std::env::var(credential_env).map_err(|_| {
            TransportError(format!("credential variable {credential_env} is not set"))
        })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Ok(HttpEscalationClient {
            endpoint: endpoint.to_string(),
            credential,
            agent,
        })
    }
}

impl EscalationClient for HttpEscalationClient {
    fn complete(&self, request: &EscalationRequest) -> Result<String, TransportError> {
        let envelope = WireEnvelope {
            instructions: match request.stage {
                Stage::Multimodal => MULTIMODAL_PROMPT,
                Stage::ConstrainedLlm => CONSTRAINED_PROMPT,
            },
            response_schema: serde_json::from_str(RESPONSE_SCHEMA)
                .expect("bundled schema is valid JSON"),
            request,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(&envelope)
            .map_err(|e| TransportError(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))
    }
}
