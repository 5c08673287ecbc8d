use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EscalationClient, EscalationRequest, TransportError};
use crate::error::IoError;
use crate::model::{EntityId, FeatureId};

/// Line of a scripted-mock file. `response` is replayed verbatim, so it may
/// be any JSON value, including a malformed response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub digest: String,
    pub response: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockPolicy {
    /// Answers from ground-truth links.
    Oracle(BTreeSet<(FeatureId, EntityId)>),
    FirstCandidate,
    AlwaysReject,
    /// Raw responses keyed by request digest.
    Scripted(BTreeMap<String, String>),
}

/// Deterministic offline stand-in for a model endpoint.
#[derive(Debug, Clone)]
pub struct MockClient {
    policy: MockPolicy,
}

fn map_to(target: &str, rationale: &str) -> String {
    json!({"decision": "map", "target_feature_id": target, "confidence": 1.0, "rationale": rationale}).to_string()
}

fn reject(rationale: &str) -> String {
    json!({"decision": "reject", "target_feature_id": null, "confidence": 1.0, "rationale": rationale}).to_string()
}

impl MockClient {
    pub fn new(policy: MockPolicy) -> Self {
        MockClient { policy }
    }

    pub fn oracle<I>(links: I) -> Self
    where
        I: IntoIterator<Item = (FeatureId, EntityId)>,
    {
        MockClient::new(MockPolicy::Oracle(links.into_iter().collect()))
    }

    pub fn scripted_from_file(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|source| IoError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut script = BTreeMap::new();
        for (idx, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| IoError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            let raw = match entry.response {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            script.insert(entry.digest, raw);
        }
        Ok(MockClient::new(MockPolicy::Scripted(script)))
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }
}

impl EscalationClient for MockClient {
    fn complete(&self, request: &EscalationRequest) -> Result<String, TransportError> {
        let entity = &request.entity.id;
        Ok(match &self.policy {
            MockPolicy::Oracle(links) => {
                let linked = |f: &str| links.contains(&(f.to_string(), entity.clone()));
                let focus = request
                    .focus_feature_id
                    .as_deref()
                    .filter(|f| request.has_candidate(f) && linked(f));
                match focus.or_else(|| {
                    request
                        .candidates
                        .iter()
                        .map(|c| c.feature_id.as_str())
                        .find(|f| linked(f))
                }) {
                    Some(target) => map_to(target, "oracle"),
                    None => reject("oracle: no ground-truth link among candidates"),
                }
            }
            MockPolicy::FirstCandidate => match request.candidates.first() {
                Some(c) => map_to(&c.feature_id, "first candidate"),
                None => reject("no candidates"),
            },
            MockPolicy::AlwaysReject => reject("policy"),
            MockPolicy::Scripted(script) => script
                .get(&request.digest())
                .cloned()
                .unwrap_or_else(|| reject("unscripted")),
        })
    }
}
