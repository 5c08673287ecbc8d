//! Composite correspondence scoring.
//!
//! A pair score is `w_t·s_type + w_d·s_dim + w_c·s_ctx + h`, multiplied by
//! any penalty factors, and forced to zero when the types are incompatible.
//! Every term is written to the candidate's trace in application order.

pub mod compat;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::model::{
    EnrichedDescriptor, Factor, Feature3D, FeatureType, NormalizedType, ScoredCandidate, TraceStep,
};

pub use compat::{CompatibilityOverride, CompatibilityTable};

pub const TYPE_EXACT: f64 = 1.0;
pub const TYPE_SEMANTIC: f64 = 0.9;
pub const DIM_WITHIN_TOL: f64 = 1.0;
pub const DIM_WITHIN_TWICE_TOL: f64 = 0.7;
pub const CTX_NEUTRAL: f64 = 0.5;
pub const MISMATCH_FACTOR: f64 = 0.3;
pub const DIAMETER_SYMBOL_BONUS: f64 = 0.1;
pub const MISSING_SYMBOL_FACTOR: f64 = 0.7;
pub const GDT_PRIOR_BONUS: f64 = 0.1;
pub const HEURISTIC_CAP: f64 = 0.2;

/// Absorbs binary representation error at the tolerance boundaries.
const BOUNDARY_SLACK: f64 = 1e-9;

/// What a descriptor is allowed to constrain.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Category(FeatureType),
    /// Any built-in feature type, or any label the table lists.
    Any,
    Gated,
}

pub fn target_spec(desc: &EnrichedDescriptor) -> TargetSpec {
    if let Some(t) = &desc.target_category {
        return TargetSpec::Category(t.clone());
    }
    match desc.normalized_type {
        NormalizedType::Diameter
        | NormalizedType::Thread
        | NormalizedType::Depth
        | NormalizedType::Counterbore
        | NormalizedType::Countersink => TargetSpec::Category(FeatureType::Hole),
        NormalizedType::Radius => TargetSpec::Category(FeatureType::Fillet),
        NormalizedType::Angle => TargetSpec::Category(FeatureType::Chamfer),
        NormalizedType::Linear
        | NormalizedType::GdtPosition
        | NormalizedType::GdtProfile
        | NormalizedType::GdtRunout
        | NormalizedType::GdtFlatness
        | NormalizedType::DatumRef
        | NormalizedType::Roughness => TargetSpec::Any,
        NormalizedType::Unknown => TargetSpec::Gated,
    }
}

pub fn score_type(
    feature: &Feature3D,
    desc: &EnrichedDescriptor,
    table: &CompatibilityTable,
) -> f64 {
    let f = feature.feature_type.label();
    match target_spec(desc) {
        TargetSpec::Category(t) => {
            if table.is_exact(f, t.label()) {
                TYPE_EXACT
            } else if table.same_group(f, t.label()) {
                TYPE_SEMANTIC
            } else {
                0.0
            }
        }
        TargetSpec::Any if feature.feature_type.is_builtin() || table.knows(f) => TYPE_SEMANTIC,
        TargetSpec::Any | TargetSpec::Gated => 0.0,
    }
}

/// Kinds whose numeric value is a length or angle of the feature itself.
pub fn is_dimensional(kind: NormalizedType) -> bool {
    matches!(
        kind,
        NormalizedType::Diameter
            | NormalizedType::Radius
            | NormalizedType::Linear
            | NormalizedType::Depth
            | NormalizedType::Thread
            | NormalizedType::Angle
            | NormalizedType::Counterbore
            | NormalizedType::Countersink
    )
}

/// The drawing value when it is a dimension of the feature.
pub fn dimensional_value(desc: &EnrichedDescriptor) -> Option<f64> {
    if is_dimensional(desc.normalized_type) {
        desc.value()
    } else {
        None
    }
}

/// Step function on an absolute difference; both bounds inclusive.
pub fn score_dim_delta(delta: f64, epsilon: f64) -> f64 {
    if delta <= epsilon + BOUNDARY_SLACK {
        DIM_WITHIN_TOL
    } else if delta <= 2.0 * epsilon + BOUNDARY_SLACK {
        DIM_WITHIN_TWICE_TOL
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimOutcome {
    pub score: f64,
    pub numeric_mismatch: bool,
}

/// Scores a routed (drawing, model) pair. `has_numeric` says whether the
/// drawing side carried a dimensional value at all.
pub fn score_dim(pair: Option<(f64, f64)>, has_numeric: bool, epsilon: f64) -> DimOutcome {
    match pair {
        Some((x2d, x3d)) => {
            let score = score_dim_delta((x2d - x3d).abs(), epsilon);
            DimOutcome {
                score,
                numeric_mismatch: score == 0.0,
            }
        }
        None => DimOutcome {
            score: 0.0,
            numeric_mismatch: has_numeric,
        },
    }
}

fn closest(value: f64, options: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    options
        .into_iter()
        .map(|x| (value, x))
        .min_by(|a, b| (a.0 - a.1).abs().total_cmp(&(b.0 - b.1).abs()))
}

/// Picks the 3D parameter a drawing value should be compared against.
///
/// With routing disabled the value is compared against every scalar
/// parameter and the closest one wins.
pub fn route_dimension(
    desc: &EnrichedDescriptor,
    feature: &Feature3D,
    routing: bool,
) -> Option<(f64, f64)> {
    let value = dimensional_value(desc)?;
    if !routing {
        return closest(value, feature.params.values().copied());
    }
    let p = |k: &str| feature.param(k);
    match desc.normalized_type {
        NormalizedType::Diameter
        | NormalizedType::Thread
        | NormalizedType::Counterbore
        | NormalizedType::Countersink => p("diameter").map(|d| (value, d)),
        NormalizedType::Radius => p("radius")
            .or_else(|| p("diameter").map(|d| d / 2.0))
            .map(|r| (value, r)),
        NormalizedType::Depth => p("depth").map(|d| (value, d)),
        NormalizedType::Linear => closest(value, [p("width"), p("length")].into_iter().flatten()),
        NormalizedType::Angle => p("angle").map(|a| (value, a)),
        _ => None,
    }
}

pub fn score_context(desc: &EnrichedDescriptor, spatial_cues_available: bool) -> f64 {
    if spatial_cues_available {
        desc.enrich_confidence.clamp(0.0, 1.0)
    } else {
        CTX_NEUTRAL
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeuristicOutcome {
    pub bonuses: Vec<(String, f64)>,
    pub factors: Vec<Factor>,
    /// Set when a restriction rules the pair out entirely.
    pub restriction: Option<String>,
}

impl HeuristicOutcome {
    pub fn h_adjust(&self) -> f64 {
        self.bonuses
            .iter()
            .map(|(_, v)| v)
            .sum::<f64>()
            .min(HEURISTIC_CAP)
    }
}

pub fn apply_heuristics(
    feature: &Feature3D,
    desc: &EnrichedDescriptor,
    table: &CompatibilityTable,
) -> HeuristicOutcome {
    let mut out = HeuristicOutcome::default();
    let hole_family = table.is_hole_family(&feature.feature_type);
    let kind = desc.normalized_type;
    let diameter_kind = matches!(
        kind,
        NormalizedType::Diameter | NormalizedType::Counterbore | NormalizedType::Countersink
    );

    if hole_family && diameter_kind && desc.has_diameter_symbol {
        out.bonuses
            .push(("diameter symbol on hole".into(), DIAMETER_SYMBOL_BONUS));
    }
    if hole_family && kind == NormalizedType::Diameter && !desc.has_diameter_symbol {
        out.factors.push(Factor {
            label: "diameter without symbol".into(),
            factor: MISSING_SYMBOL_FACTOR,
        });
    }
    if kind == NormalizedType::Thread && !feature.feature_type.is_cylindrical() {
        out.restriction = Some("thread callout restricted to cylindrical features".into());
    }
    let prior = match kind {
        NormalizedType::GdtPosition | NormalizedType::GdtProfile => (hole_family
            || feature.feature_type == FeatureType::Pocket)
            .then_some("gdt position/profile prior"),
        NormalizedType::GdtRunout => feature
            .feature_type
            .is_cylindrical()
            .then_some("gdt runout prior"),
        NormalizedType::DatumRef => (feature.feature_type.is_planar()
            || feature.feature_type.is_cylindrical())
        .then_some("datum prior"),
        _ => None,
    };
    if let Some(label) = prior {
        out.bonuses.push((label.into(), GDT_PRIOR_BONUS));
    }
    out
}

pub fn score_pair(
    feature: &Feature3D,
    desc: &EnrichedDescriptor,
    config: &PipelineConfig,
    table: &CompatibilityTable,
) -> ScoredCandidate {
    let mut trace = Vec::new();
    let mut s_type = score_type(feature, desc, table);
    let heuristics = if config.heuristics_enabled {
        apply_heuristics(feature, desc, table)
    } else {
        HeuristicOutcome::default()
    };
    if let Some(reason) = &heuristics.restriction {
        if s_type > 0.0 {
            trace.push(TraceStep::Note {
                label: reason.clone(),
            });
        }
        s_type = 0.0;
    }

    let pair = route_dimension(desc, feature, config.semantic_routing_enabled);
    let dim = score_dim(pair, dimensional_value(desc).is_some(), config.epsilon_mm);
    let s_ctx = score_context(desc, desc.spatial_cues);

    let mut candidate = ScoredCandidate {
        feature_id: feature.id.clone(),
        entity_id: desc.entity_id.clone(),
        s_type,
        s_dim: dim.score,
        s_ctx,
        h_adjust: 0.0,
        multiplicative_factors: Vec::new(),
        numeric_mismatch: dim.numeric_mismatch,
        s_final: 0.0,
        trace,
    };

    if s_type == 0.0 {
        candidate.trace.push(TraceStep::Gate {
            label: format!(
                "type {} incompatible with {}",
                feature.feature_type,
                desc.normalized_type.label()
            ),
        });
        return candidate;
    }

    let w_ctx = config.effective_w_ctx();
    candidate.trace.push(TraceStep::Add {
        label: format!("type {} x {}", config.w_type, s_type),
        value: config.w_type * s_type,
    });
    candidate.trace.push(TraceStep::Add {
        label: format!("dim {} x {}", config.w_dim, dim.score),
        value: config.w_dim * dim.score,
    });
    candidate.trace.push(TraceStep::Add {
        label: format!("ctx {} x {}", w_ctx, s_ctx),
        value: w_ctx * s_ctx,
    });

    let mut h_total = 0.0;
    for (label, value) in &heuristics.bonuses {
        let allowed = (HEURISTIC_CAP - h_total).min(*value).max(0.0);
        if allowed > 0.0 {
            candidate.trace.push(TraceStep::Add {
                label: label.clone(),
                value: allowed,
            });
            h_total += allowed;
        }
        if allowed < *value {
            candidate.trace.push(TraceStep::Note {
                label: format!("{label} capped at {HEURISTIC_CAP}"),
            });
        }
    }
    candidate.h_adjust = h_total;

    if dim.numeric_mismatch {
        candidate.multiplicative_factors.push(Factor {
            label: "numeric mismatch".into(),
            factor: MISMATCH_FACTOR,
        });
    }
    candidate.multiplicative_factors.extend(heuristics.factors);
    for f in &candidate.multiplicative_factors {
        candidate.trace.push(TraceStep::Mul {
            label: f.label.clone(),
            factor: f.factor,
        });
    }

    candidate.s_final = candidate.replay_trace();
    candidate
}

/// Scores every (feature, descriptor) pair. Output is ordered by feature,
/// then descriptor, in input order.
pub fn score_all(
    features: &[Feature3D],
    descriptors: &[EnrichedDescriptor],
    config: &PipelineConfig,
    table: &CompatibilityTable,
) -> Vec<ScoredCandidate> {
    features
        .par_iter()
        .flat_map_iter(|f| {
            descriptors
                .iter()
                .map(move |d| score_pair(f, d, config, table))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Quantity;

    fn desc(
        kind: NormalizedType,
        value: Option<f64>,
        target: Option<FeatureType>,
    ) -> EnrichedDescriptor {
        let mut d = EnrichedDescriptor::new("E1", kind);
        d.numeric_value = value.map(Quantity::mm);
        d.target_category = target;
        d.enrich_confidence = 0.95;
        d
    }

    fn hole(d: f64) -> Feature3D {
        Feature3D::new("F1", FeatureType::Hole).with_param("diameter", d)
    }

    #[test]
    fn type_compatibility_levels() {
        let t = CompatibilityTable::default();
        let h = hole(10.0);
        assert_eq!(
            score_type(
                &h,
                &desc(NormalizedType::Diameter, None, Some(FeatureType::Hole)),
                &t
            ),
            1.0
        );
        assert_eq!(
            score_type(
                &h,
                &desc(NormalizedType::Diameter, None, Some(FeatureType::Bore)),
                &t
            ),
            0.9
        );
        let fillet = Feature3D::new("F2", FeatureType::Fillet);
        assert_eq!(
            score_type(
                &fillet,
                &desc(NormalizedType::Linear, None, Some(FeatureType::Slot)),
                &t
            ),
            0.0
        );
    }

    #[test]
    fn unknown_other_labels_gate() {
        let t = CompatibilityTable::default();
        let gusset =
            Feature3D::new("F3", FeatureType::Other("gusset".into())).with_param("width", 8.0);
        assert_eq!(
            score_type(&gusset, &desc(NormalizedType::Linear, Some(8.0), None), &t),
            0.0
        );
        assert_eq!(
            score_type(&hole(5.0), &desc(NormalizedType::Unknown, None, None), &t),
            0.0
        );
    }

    #[test]
    fn routing_examples() {
        let f = hole(10.0);
        assert_eq!(
            route_dimension(&desc(NormalizedType::Radius, Some(5.0), None), &f, true),
            Some((5.0, 5.0))
        );
        let slot = Feature3D::new("F2", FeatureType::Slot).with_param("width", 10.0);
        assert_eq!(
            route_dimension(
                &desc(NormalizedType::Diameter, Some(10.0), None),
                &slot,
                true
            ),
            None
        );
        let blind = Feature3D::new("F3", FeatureType::Hole).with_param("depth", 12.0);
        assert_eq!(
            route_dimension(&desc(NormalizedType::Depth, Some(12.0), None), &blind, true),
            Some((12.0, 12.0))
        );
        let slot = Feature3D::new("F4", FeatureType::Slot)
            .with_param("width", 8.0)
            .with_param("length", 30.0);
        assert_eq!(
            route_dimension(
                &desc(NormalizedType::Linear, Some(30.05), None),
                &slot,
                true
            ),
            Some((30.05, 30.0))
        );
        // unrouted: diameter value compared against the slot width
        assert_eq!(
            route_dimension(
                &desc(NormalizedType::Diameter, Some(8.0), None),
                &slot,
                false
            ),
            Some((8.0, 8.0))
        );
    }

    #[test]
    fn dimension_steps() {
        assert_eq!(score_dim(Some((10.0, 10.05)), true, 0.1).score, 1.0);
        assert_eq!(score_dim(Some((10.0, 10.15)), true, 0.1).score, 0.7);
        let o = score_dim(Some((10.0, 12.0)), true, 0.1);
        assert_eq!((o.score, o.numeric_mismatch), (0.0, true));
        assert!(score_dim(None, true, 0.1).numeric_mismatch);
        assert!(!score_dim(None, false, 0.1).numeric_mismatch);
    }

    #[test]
    fn context_branches() {
        let mut d = desc(NormalizedType::Diameter, None, None);
        assert_eq!(score_context(&d, false), 0.5);
        d.enrich_confidence = 0.92;
        assert_eq!(score_context(&d, true), 0.92);
        d.enrich_confidence = 0.0;
        assert_eq!(score_context(&d, true), 0.0);
    }

    #[test]
    fn heuristic_examples() {
        let t = CompatibilityTable::default();
        let mut d = desc(
            NormalizedType::Diameter,
            Some(10.0),
            Some(FeatureType::Hole),
        );
        d.has_diameter_symbol = true;
        let h = apply_heuristics(&hole(10.0), &d, &t);
        assert!((h.h_adjust() - 0.1).abs() < 1e-15);
        assert!(h.factors.is_empty());

        d.has_diameter_symbol = false;
        let h = apply_heuristics(&hole(10.0), &d, &t);
        assert_eq!(
            h.factors,
            vec![Factor {
                label: "diameter without symbol".into(),
                factor: 0.7
            }]
        );

        let thread = desc(NormalizedType::Thread, Some(8.0), Some(FeatureType::Hole));
        let slot = Feature3D::new("F2", FeatureType::Slot).with_param("width", 8.0);
        assert!(apply_heuristics(&slot, &thread, &t).restriction.is_some());
        let cfg = PipelineConfig {
            heuristics_enabled: true,
            ..PipelineConfig::default()
        };
        let mut thread_any = thread.clone();
        thread_any.target_category = Some(FeatureType::Slot);
        assert_eq!(score_pair(&slot, &thread_any, &cfg, &t).s_type, 0.0);
    }

    #[test]
    fn gdt_priors_are_soft() {
        let t = CompatibilityTable::default();
        let pos = desc(NormalizedType::GdtPosition, None, None);
        assert_eq!(apply_heuristics(&hole(5.0), &pos, &t).h_adjust(), 0.1);
        let plane = Feature3D::new("F9", FeatureType::Plane);
        assert_eq!(apply_heuristics(&plane, &pos, &t).h_adjust(), 0.0);
        let datum = desc(NormalizedType::DatumRef, None, None);
        assert_eq!(apply_heuristics(&plane, &datum, &t).h_adjust(), 0.1);
        let runout = desc(NormalizedType::GdtRunout, None, None);
        let boss = Feature3D::new("F8", FeatureType::Boss);
        assert_eq!(apply_heuristics(&boss, &runout, &t).h_adjust(), 0.1);
    }

    #[test]
    fn composite_examples() {
        let t = CompatibilityTable::default();
        let cfg = PipelineConfig {
            heuristics_enabled: false,
            ..PipelineConfig::default()
        };
        let d = desc(
            NormalizedType::Diameter,
            Some(10.0),
            Some(FeatureType::Hole),
        );
        let c = score_pair(&hole(10.0), &d, &cfg, &t);
        assert!((c.s_final - 0.90).abs() < 1e-12);

        let c = score_pair(&hole(12.0), &d, &cfg, &t);
        assert!(c.numeric_mismatch);
        assert!((c.s_final - 0.15).abs() < 1e-12);

        let mut d = desc(
            NormalizedType::Diameter,
            Some(10.0),
            Some(FeatureType::Hole),
        );
        d.has_diameter_symbol = true;
        d.enrich_confidence = 0.9;
        d.spatial_cues = true;
        let c = score_pair(&hole(10.0), &d, &PipelineConfig::default(), &t);
        assert!((c.s_final - 1.08).abs() < 1e-12);
        assert!((c.h_adjust - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gate_zeroes_score() {
        let t = CompatibilityTable::default();
        let d = desc(NormalizedType::Radius, Some(5.0), None);
        let c = score_pair(&hole(10.0), &d, &PipelineConfig::default(), &t);
        assert_eq!(c.s_type, 0.0);
        assert_eq!(c.s_final, 0.0);
        assert_eq!(c.replay_trace(), 0.0);
    }

    #[test]
    fn no_context_zeroes_ctx_term() {
        let t = CompatibilityTable::default();
        let cfg = PipelineConfig::for_variant(crate::config::AblationVariant::NoContext);
        let mut d = desc(
            NormalizedType::Diameter,
            Some(10.0),
            Some(FeatureType::Hole),
        );
        d.has_diameter_symbol = true;
        let c = score_pair(&hole(10.0), &d, &cfg, &t);
        assert!((c.s_final - 0.9).abs() < 1e-12);
    }
}
