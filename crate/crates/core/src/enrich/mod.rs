//! Turns raw drawing entities into enriched descriptors.
//!
//! The rule-based backend is the default and is a pure function of the
//! entity. An external vision-language service can be plugged in; its
//! failures fall back to the rule-based result. The replay backend answers
//! from recorded responses keyed by request digest.

pub mod grammar;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnrichConfidenceTable;
use crate::digest::digest_json;
use crate::model::{
    BoundingBox2, DrawingEntity, EnrichedDescriptor, EntityType, FeatureType, NormalizedType,
    Quantity,
};
use crate::validate::to_canonical_unit;

pub use grammar::{parse_callout_grammar, Callout, MatchQuality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnricherBackend {
    RuleBased,
    ExternalVlm {
        endpoint: String,
        /// Name of the environment variable holding the API credential.
        credential_env: String,
        timeout_ms: u64,
    },
    Replay {
        path: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("cannot read replay file {path}: {source}")]
    ReplayRead {
        path: String,
        source: std::io::Error,
    },
    #[error("replay file {path} line {line}: {message}")]
    ReplayParse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Wire request sent to an external enrichment model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_ref: Option<String>,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox2>,
}

impl VlmRequest {
    pub fn for_entity(entity: &DrawingEntity) -> Self {
        VlmRequest {
            region_ref: entity.context.region_ref.clone(),
            raw_text: entity.raw_text.clone(),
            bbox: entity.context.bbox,
        }
    }

    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub digest: String,
    pub response: EnrichedDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub descriptor: EnrichedDescriptor,
    /// Set when the configured backend could not answer and the rule-based
    /// result was used instead.
    pub fallback_note: Option<String>,
}

pub struct Enricher {
    backend: EnricherBackend,
    table: EnrichConfidenceTable,
    replay: BTreeMap<String, EnrichedDescriptor>,
}

impl Enricher {
    pub fn rule_based(table: EnrichConfidenceTable) -> Self {
        Enricher {
            backend: EnricherBackend::RuleBased,
            table,
            replay: BTreeMap::new(),
        }
    }

    pub fn new(
        backend: EnricherBackend,
        table: EnrichConfidenceTable,
    ) -> Result<Self, EnrichError> {
        let mut replay = BTreeMap::new();
        if let EnricherBackend::Replay { path } = &backend {
            let text = fs::read_to_string(path).map_err(|source| EnrichError::ReplayRead {
                path: path.display().to_string(),
                source,
            })?;
            for (idx, line) in text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let entry: ReplayEntry =
                    serde_json::from_str(line).map_err(|e| EnrichError::ReplayParse {
                        path: path.display().to_string(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                replay.insert(entry.digest, entry.response);
            }
        }
        Ok(Enricher {
            backend,
            table,
            replay,
        })
    }

    pub fn backend(&self) -> &EnricherBackend {
        &self.backend
    }

    pub fn enrich(&self, entity: &DrawingEntity) -> Enrichment {
        match &self.backend {
            EnricherBackend::RuleBased => Enrichment {
                descriptor: enrich_rule_based(entity, &self.table),
                fallback_note: None,
            },
            EnricherBackend::Replay { .. } => {
                let digest = VlmRequest::for_entity(entity).digest();
                match self.replay.get(&digest) {
                    Some(d) => Enrichment {
                        descriptor: adopt(d.clone(), entity),
                        fallback_note: None,
                    },
                    None => {
                        self.fallback(entity, format!("no recorded response for digest {digest}"))
                    }
                }
            }
            EnricherBackend::ExternalVlm {
                endpoint,
                credential_env,
                timeout_ms,
            } => match call_external(endpoint, credential_env, *timeout_ms, entity) {
                Ok(d) if (0.0..=1.0).contains(&d.enrich_confidence) && d.multiplicity >= 1 => {
                    Enrichment {
                        descriptor: adopt(d, entity),
                        fallback_note: None,
                    }
                }
                Ok(_) => self.fallback(entity, "external descriptor violated bounds".into()),
                Err(e) => self.fallback(entity, format!("external enricher failed: {e}")),
            },
        }
    }

    fn fallback(&self, entity: &DrawingEntity, note: String) -> Enrichment {
        log::warn!("entity {}: {note}; using rule-based enrichment", entity.id);
        Enrichment {
            descriptor: enrich_rule_based(entity, &self.table),
            fallback_note: Some(note),
        }
    }
}

fn adopt(mut d: EnrichedDescriptor, entity: &DrawingEntity) -> EnrichedDescriptor {
    d.entity_id = entity.id.clone();
    d.spatial_cues = entity.context.has_spatial_cues();
    d
}

fn call_external(
    endpoint: &str,
    credential_env: &str,
    timeout_ms: u64,
    entity: &DrawingEntity,
) -> Result<EnrichedDescriptor, String> {
    let token = std::env::var(credential_env)
        .map_err(|_| format!("credential variable {credential_env} not set"))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .build()
        .into();
    let mut resp = agent
        .post(endpoint)
        .header("Authorization", &format!("Bearer {token}"))
        .send_json(VlmRequest::for_entity(entity))
        .map_err(|e| e.to_string())?;
    resp.body_mut()
        .read_json::<EnrichedDescriptor>()
        .map_err(|e| e.to_string())
}

/// Feature category an annotation kind most plausibly constrains.
pub fn infer_target(kind: NormalizedType) -> Option<FeatureType> {
    match kind {
        NormalizedType::Diameter
        | NormalizedType::Thread
        | NormalizedType::Depth
        | NormalizedType::Counterbore
        | NormalizedType::Countersink => Some(FeatureType::Hole),
        NormalizedType::Radius => Some(FeatureType::Fillet),
        NormalizedType::Angle => Some(FeatureType::Chamfer),
        _ => None,
    }
}

fn semantic_str<'a>(entity: &'a DrawingEntity, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| entity.semantic_values.get(*k).and_then(|v| v.as_str()))
}

pub fn enrich_rule_based(
    entity: &DrawingEntity,
    table: &EnrichConfidenceTable,
) -> EnrichedDescriptor {
    let callout = parse_callout_grammar(&entity.raw_text);
    let mut quality = callout.quality;
    let mut kind = callout.kind;

    // Upstream semantic values refine what the text alone says.
    if let Some(label) = semantic_str(entity, &["dim_kind", "type"]) {
        if let Some(k) = NormalizedType::from_label(label) {
            if matches!(kind, NormalizedType::Unknown | NormalizedType::Linear) {
                kind = k;
                if quality == MatchQuality::None {
                    quality = MatchQuality::Partial;
                }
            }
        }
    }
    if kind == NormalizedType::Unknown {
        match entity.entity_type {
            EntityType::Datum if callout.datums.len() == 1 || entity.raw_text.trim().len() == 1 => {
                kind = NormalizedType::DatumRef;
                quality = MatchQuality::Partial;
            }
            _ => {}
        }
    }
    if kind == NormalizedType::Linear && entity.entity_type == EntityType::SurfaceRoughness {
        kind = NormalizedType::Roughness;
    }

    let unit = if kind == NormalizedType::Angle {
        "deg"
    } else {
        "mm"
    };
    let mut value = callout.value.map(|v| Quantity {
        value: v,
        unit: unit.to_string(),
    });
    if value.is_none() {
        if let Some(v) = entity.semantic_values.get("value").and_then(|v| v.as_f64()) {
            let u = semantic_str(entity, &["unit"]).unwrap_or("mm");
            if let Some((cv, cu)) = to_canonical_unit(v, u) {
                value = Some(Quantity {
                    value: cv,
                    unit: cu.to_string(),
                });
            }
        }
    }
    if kind == NormalizedType::Thread && value.is_none() {
        kind = NormalizedType::Unknown;
        quality = MatchQuality::None;
    }

    let mut multiplicity = callout.multiplicity.max(1);
    if multiplicity == 1 {
        if let Some(n) = entity
            .semantic_values
            .get("multiplicity")
            .and_then(|v| v.as_u64())
        {
            multiplicity = n.clamp(1, u32::MAX as u64) as u32;
        }
    }

    let target_category = semantic_str(entity, &["target_category", "target"])
        .map(|s| {
            s.parse::<FeatureType>()
                .unwrap_or_else(|never| match never {})
        })
        .or_else(|| infer_target(kind));

    let enrich_confidence = match quality {
        MatchQuality::Exact => table.exact,
        MatchQuality::Partial => table.partial,
        MatchQuality::None => table.fallback,
    };

    EnrichedDescriptor {
        entity_id: entity.id.clone(),
        normalized_type: kind,
        numeric_value: value,
        tolerance: callout.tolerance,
        thread_pitch: callout.pitch,
        target_category,
        multiplicity,
        has_diameter_symbol: callout.has_diameter_symbol,
        enrich_confidence,
        spatial_cues: entity.context.has_spatial_cues(),
    }
}
