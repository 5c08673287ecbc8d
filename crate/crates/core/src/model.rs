//! Shared domain types: recognized 3D features, raw drawing entities, their
//! enriched descriptors, scored candidates and the unified specification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::PipelineConfig;

pub type FeatureId = String;
pub type EntityId = String;

/// Document format version written into every unified specification.
pub const SPEC_VERSION: &str = "1.0";

/// Recognized feature type. Unknown labels are kept verbatim as `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureType {
    Hole,
    Bore,
    Drill,
    Slot,
    Pocket,
    Groove,
    Fillet,
    Round,
    Boss,
    Cylinder,
    Plane,
    Chamfer,
    ThreadHole,
    Other(String),
}

impl FeatureType {
    pub const BUILTIN: [FeatureType; 13] = [
        FeatureType::Hole,
        FeatureType::Bore,
        FeatureType::Drill,
        FeatureType::Slot,
        FeatureType::Pocket,
        FeatureType::Groove,
        FeatureType::Fillet,
        FeatureType::Round,
        FeatureType::Boss,
        FeatureType::Cylinder,
        FeatureType::Plane,
        FeatureType::Chamfer,
        FeatureType::ThreadHole,
    ];

    pub fn label(&self) -> &str {
        match self {
            FeatureType::Hole => "hole",
            FeatureType::Bore => "bore",
            FeatureType::Drill => "drill",
            FeatureType::Slot => "slot",
            FeatureType::Pocket => "pocket",
            FeatureType::Groove => "groove",
            FeatureType::Fillet => "fillet",
            FeatureType::Round => "round",
            FeatureType::Boss => "boss",
            FeatureType::Cylinder => "cylinder",
            FeatureType::Plane => "plane",
            FeatureType::Chamfer => "chamfer",
            FeatureType::ThreadHole => "thread_hole",
            FeatureType::Other(label) => label,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, FeatureType::Other(_))
    }

    /// Features whose primary surface is a cylinder (internal or external).
    pub fn is_cylindrical(&self) -> bool {
        matches!(
            self,
            FeatureType::Hole
                | FeatureType::Bore
                | FeatureType::Drill
                | FeatureType::ThreadHole
                | FeatureType::Boss
                | FeatureType::Cylinder
        )
    }

    pub fn is_planar(&self) -> bool {
        matches!(self, FeatureType::Plane)
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        Ok(FeatureType::BUILTIN
            .iter()
            .find(|t| t.label() == norm)
            .cloned()
            .unwrap_or(FeatureType::Other(norm)))
    }
}

impl Serialize for FeatureType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for FeatureType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry_group: Option<String>,
}

/// One recognized CAD feature as delivered by upstream feature recognition.
///
/// `params` uses millimetres for lengths and degrees for angles. Recognized
/// keys are `diameter`, `radius`, `depth`, `width`, `length` and `angle`;
/// other keys are carried through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature3D {
    pub id: FeatureId,
    pub feature_type: FeatureType,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_afr_confidence")]
    pub afr_confidence: f64,
    #[serde(default, skip_serializing_if = "is_default_metadata")]
    pub metadata: FeatureMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox3>,
}

fn default_afr_confidence() -> f64 {
    1.0
}

fn is_default_metadata(m: &FeatureMetadata) -> bool {
    m == &FeatureMetadata::default()
}

impl Feature3D {
    pub fn new(id: impl Into<String>, feature_type: FeatureType) -> Self {
        Feature3D {
            id: id.into(),
            feature_type,
            params: BTreeMap::new(),
            afr_confidence: 1.0,
            metadata: FeatureMetadata::default(),
            centroid: None,
            bbox: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_pattern(mut self, pattern_id: &str) -> Self {
        self.metadata.pattern_id = Some(pattern_id.to_string());
        self
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

/// Kind of annotation as reported by drawing extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Dimension,
    GdtFrame,
    SurfaceRoughness,
    Note,
    ThreadCallout,
    Datum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox2 {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox2>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neighbors: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_id: Option<String>,
    /// Opaque reference to a cropped drawing region, passed through to
    /// external models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_ref: Option<String>,
}

impl EntityContext {
    /// Spatial cues exist when the annotation is located on the sheet.
    pub fn has_spatial_cues(&self) -> bool {
        self.bbox.is_some()
    }
}

/// A raw drawing annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawingEntity {
    pub id: EntityId,
    pub entity_type: EntityType,
    #[serde(default)]
    pub semantic_values: BTreeMap<String, serde_json::Value>,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "is_default_context")]
    pub context: EntityContext,
}

fn is_default_context(c: &EntityContext) -> bool {
    c == &EntityContext::default()
}

impl DrawingEntity {
    pub fn new(
        id: impl Into<String>,
        entity_type: EntityType,
        raw_text: impl Into<String>,
    ) -> Self {
        DrawingEntity {
            id: id.into(),
            entity_type,
            semantic_values: BTreeMap::new(),
            raw_text: raw_text.into(),
            context: EntityContext::default(),
        }
    }

    pub fn with_bbox(mut self, x: f64, y: f64, w: f64, h: f64) -> Self {
        self.context.bbox = Some(BoundingBox2 { x, y, w, h });
        self
    }

    pub fn with_value(mut self, key: &str, value: serde_json::Value) -> Self {
        self.semantic_values.insert(key.to_string(), value);
        self
    }
}

/// Normalized annotation meaning after enrichment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizedType {
    Diameter,
    Radius,
    Linear,
    Depth,
    Thread,
    Angle,
    Countersink,
    Counterbore,
    GdtPosition,
    GdtProfile,
    GdtRunout,
    GdtFlatness,
    DatumRef,
    Roughness,
    Unknown,
}

impl NormalizedType {
    pub fn label(self) -> &'static str {
        match self {
            NormalizedType::Diameter => "diameter",
            NormalizedType::Radius => "radius",
            NormalizedType::Linear => "linear",
            NormalizedType::Depth => "depth",
            NormalizedType::Thread => "thread",
            NormalizedType::Angle => "angle",
            NormalizedType::Countersink => "countersink",
            NormalizedType::Counterbore => "counterbore",
            NormalizedType::GdtPosition => "gdt_position",
            NormalizedType::GdtProfile => "gdt_profile",
            NormalizedType::GdtRunout => "gdt_runout",
            NormalizedType::GdtFlatness => "gdt_flatness",
            NormalizedType::DatumRef => "datum_ref",
            NormalizedType::Roughness => "roughness",
            NormalizedType::Unknown => "unknown",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        const ALL: [NormalizedType; 15] = [
            NormalizedType::Diameter,
            NormalizedType::Radius,
            NormalizedType::Linear,
            NormalizedType::Depth,
            NormalizedType::Thread,
            NormalizedType::Angle,
            NormalizedType::Countersink,
            NormalizedType::Counterbore,
            NormalizedType::GdtPosition,
            NormalizedType::GdtProfile,
            NormalizedType::GdtRunout,
            NormalizedType::GdtFlatness,
            NormalizedType::DatumRef,
            NormalizedType::Roughness,
            NormalizedType::Unknown,
        ];
        let norm = label.trim().to_ascii_lowercase();
        ALL.into_iter().find(|t| t.label() == norm)
    }

    pub fn is_gdt(self) -> bool {
        matches!(
            self,
            NormalizedType::GdtPosition
                | NormalizedType::GdtProfile
                | NormalizedType::GdtRunout
                | NormalizedType::GdtFlatness
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    pub fn mm(value: f64) -> Self {
        Quantity {
            value,
            unit: "mm".to_string(),
        }
    }
}

/// Structured meaning of one drawing entity, consumed by scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedDescriptor {
    pub entity_id: EntityId,
    pub normalized_type: NormalizedType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_value: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_pitch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_category: Option<FeatureType>,
    #[serde(default = "one")]
    pub multiplicity: u32,
    #[serde(default)]
    pub has_diameter_symbol: bool,
    pub enrich_confidence: f64,
    #[serde(default)]
    pub spatial_cues: bool,
}

fn one() -> u32 {
    1
}

impl EnrichedDescriptor {
    pub fn new(entity_id: impl Into<String>, normalized_type: NormalizedType) -> Self {
        EnrichedDescriptor {
            entity_id: entity_id.into(),
            normalized_type,
            numeric_value: None,
            tolerance: None,
            thread_pitch: None,
            target_category: None,
            multiplicity: 1,
            has_diameter_symbol: false,
            enrich_confidence: 0.0,
            spatial_cues: false,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.numeric_value.as_ref().map(|q| q.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub factor: f64,
}

/// Arithmetic step of a candidate score, replayable in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceStep {
    /// Score gated to zero; nothing after this contributes.
    Gate {
        label: String,
    },
    Add {
        label: String,
        value: f64,
    },
    Mul {
        label: String,
        factor: f64,
    },
    Note {
        label: String,
    },
}

impl TraceStep {
    pub fn label(&self) -> &str {
        match self {
            TraceStep::Gate { label }
            | TraceStep::Add { label, .. }
            | TraceStep::Mul { label, .. }
            | TraceStep::Note { label } => label,
        }
    }
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStep::Gate { label } => write!(f, "gate: {label} -> 0"),
            TraceStep::Add { label, value } => write!(f, "+ {value:.6} ({label})"),
            TraceStep::Mul { label, factor } => write!(f, "x {factor:.6} ({label})"),
            TraceStep::Note { label } => write!(f, "note: {label}"),
        }
    }
}

/// A scored (feature, entity) pair with every component that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub feature_id: FeatureId,
    pub entity_id: EntityId,
    pub s_type: f64,
    pub s_dim: f64,
    pub s_ctx: f64,
    pub h_adjust: f64,
    pub multiplicative_factors: Vec<Factor>,
    pub numeric_mismatch: bool,
    pub s_final: f64,
    pub trace: Vec<TraceStep>,
}

impl ScoredCandidate {
    /// Recomputes the final score from the trace alone.
    pub fn replay_trace(&self) -> f64 {
        let mut acc = 0.0;
        for step in &self.trace {
            match step {
                TraceStep::Gate { .. } => return 0.0,
                TraceStep::Add { value, .. } => acc += value,
                TraceStep::Mul { factor, .. } => acc *= factor,
                TraceStep::Note { .. } => {}
            }
        }
        acc
    }

    /// Sum of the additive terms, before any multiplicative factor.
    pub fn additive_sum(&self) -> f64 {
        self.trace
            .iter()
            .map(|s| match s {
                TraceStep::Add { value, .. } => *value,
                _ => 0.0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMethod {
    Deterministic,
    DeterministicVlm,
    Llm,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingStatus {
    Accepted,
    Flagged,
    Rejected,
    HumanEdited,
}

impl MappingStatus {
    /// Accepted by automation or a reviewer; counts as a predicted link.
    pub fn is_live(self) -> bool {
        matches!(self, MappingStatus::Accepted | MappingStatus::HumanEdited)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Engine,
    Vlm,
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEvent {
    pub stage: String,
    pub timestamp: String,
    pub actor: Actor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<String>,
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub id: String,
    pub feature_id: FeatureId,
    pub entity_id: EntityId,
    pub method: MappingMethod,
    pub confidence: f64,
    pub rationale: String,
    pub status: MappingStatus,
    pub provenance: Vec<ProvenanceEvent>,
    /// Competing candidates for flagged items, so a reviewer can see why
    /// each scored as it did.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<ScoredCandidate>,
}

impl MappingRecord {
    pub fn make_id(entity_id: &str, feature_id: &str) -> String {
        format!("{entity_id}->{feature_id}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmappedEntity {
    pub entity_id: EntityId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approval {
    pub reviewer: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecNote {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<EntityId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub features: Vec<FeatureId>,
    pub entities: Vec<EntityId>,
}

/// The output document binding drawing constraints to CAD features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSpec {
    pub spec_version: String,
    pub part_id: String,
    #[serde(default)]
    pub revision: u64,
    pub inventory: Inventory,
    pub mappings: Vec<MappingRecord>,
    pub unmapped_entities: Vec<UnmappedEntity>,
    pub unconstrained_features: Vec<FeatureId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<Approval>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<SpecNote>,
    pub config_snapshot: PipelineConfig,
}

impl UnifiedSpec {
    pub fn flagged_count(&self) -> usize {
        self.mappings
            .iter()
            .filter(|m| m.status == MappingStatus::Flagged)
            .count()
    }

    pub fn mapping(&self, id: &str) -> Option<&MappingRecord> {
        self.mappings.iter().find(|m| m.id == id)
    }

    /// Links accepted by automation or a reviewer.
    pub fn live_links(&self) -> std::collections::BTreeSet<(FeatureId, EntityId)> {
        self.mappings
            .iter()
            .filter(|m| m.status.is_live())
            .map(|m| (m.feature_id.clone(), m.entity_id.clone()))
            .collect()
    }
}
