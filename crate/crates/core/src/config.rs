//! Pipeline constants and ablation switches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Confidence emitted by the rule-based enricher per grammar outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichConfidenceTable {
    pub exact: f64,
    pub partial: f64,
    pub fallback: f64,
}

impl Default for EnrichConfidenceTable {
    fn default() -> Self {
        EnrichConfidenceTable {
            exact: 0.95,
            partial: 0.7,
            fallback: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub w_type: f64,
    pub w_dim: f64,
    pub w_ctx: f64,
    pub theta_cand: f64,
    pub rho: f64,
    pub epsilon_mm: f64,
    /// Minimum score for a singleton near-tie set to be accepted without
    /// escalation.
    pub theta_escal: f64,
    pub heuristics_enabled: bool,
    pub context_enabled: bool,
    /// Route each dimension kind to its matching 3D parameter. When off,
    /// a dimension is compared against every scalar parameter.
    pub semantic_routing_enabled: bool,
    pub vlm_selection_enabled: bool,
    pub llm_escalation_enabled: bool,
    /// Accept the top-ranked candidate whenever escalation would otherwise
    /// be required.
    pub argmax_accept: bool,
    /// Under `no_heuristics`, keep semantic dimension routing on instead of
    /// comparing against every scalar parameter.
    pub no_heuristics_keeps_routing: bool,
    pub enrich_confidence: EnrichConfidenceTable,
    /// Upper bound on concurrent escalation calls.
    pub max_in_flight: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<AblationVariant>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            w_type: 0.4,
            w_dim: 0.4,
            w_ctx: 0.2,
            theta_cand: 0.3,
            rho: 0.9,
            epsilon_mm: 0.1,
            theta_escal: 0.6,
            heuristics_enabled: true,
            context_enabled: true,
            semantic_routing_enabled: true,
            vlm_selection_enabled: true,
            llm_escalation_enabled: true,
            argmax_accept: false,
            no_heuristics_keeps_routing: false,
            enrich_confidence: EnrichConfidenceTable::default(),
            max_in_flight: 4,
            variant: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let weights = [self.w_type, self.w_dim, self.w_ctx];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::Weights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.context_enabled {
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ConfigError::Weights(format!(
                    "w_type + w_dim + w_ctx = {sum}, expected 1"
                )));
            }
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(ConfigError::Range("rho", self.rho));
        }
        if !(self.epsilon_mm > 0.0 && self.epsilon_mm.is_finite()) {
            return Err(ConfigError::Range("epsilon_mm", self.epsilon_mm));
        }
        if !self.theta_cand.is_finite() {
            return Err(ConfigError::Range("theta_cand", self.theta_cand));
        }
        if !self.theta_escal.is_finite() {
            return Err(ConfigError::Range("theta_escal", self.theta_escal));
        }
        let t = &self.enrich_confidence;
        for (name, v) in [
            ("exact", t.exact),
            ("partial", t.partial),
            ("fallback", t.fallback),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Range(name, v));
            }
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Range("max_in_flight", 0.0));
        }
        Ok(())
    }

    /// Effective context weight after the context switch.
    pub fn effective_w_ctx(&self) -> f64 {
        if self.context_enabled {
            self.w_ctx
        } else {
            0.0
        }
    }

    pub fn for_variant(variant: AblationVariant) -> Self {
        let mut cfg = PipelineConfig::default();
        variant.apply(&mut cfg);
        cfg
    }
}

/// Degraded pipeline configurations used to measure component contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    DeterministicOnly,
    NoHeuristics,
    NoLlmEscalation,
    NoContext,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::DeterministicOnly,
        AblationVariant::NoHeuristics,
        AblationVariant::NoLlmEscalation,
        AblationVariant::NoContext,
        AblationVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::DeterministicOnly => "deterministic_only",
            AblationVariant::NoHeuristics => "no_heuristics",
            AblationVariant::NoLlmEscalation => "no_llm_escalation",
            AblationVariant::NoContext => "no_context",
            AblationVariant::Full => "full",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            AblationVariant::DeterministicOnly => "Deterministic only",
            AblationVariant::NoHeuristics => "No engineering heuristics",
            AblationVariant::NoLlmEscalation => "No LLM escalation",
            AblationVariant::NoContext => "No context scoring (w_c=0)",
            AblationVariant::Full => "Full pipeline",
        }
    }

    /// Switches the relevant flags on an existing configuration.
    pub fn apply(self, cfg: &mut PipelineConfig) {
        match self {
            AblationVariant::DeterministicOnly => {
                cfg.heuristics_enabled = false;
                cfg.semantic_routing_enabled = false;
                cfg.vlm_selection_enabled = false;
                cfg.llm_escalation_enabled = false;
                cfg.argmax_accept = true;
            }
            AblationVariant::NoHeuristics => {
                cfg.heuristics_enabled = false;
                if !cfg.no_heuristics_keeps_routing {
                    cfg.semantic_routing_enabled = false;
                }
            }
            AblationVariant::NoLlmEscalation => {
                cfg.vlm_selection_enabled = false;
                cfg.llm_escalation_enabled = false;
            }
            AblationVariant::NoContext => {
                cfg.context_enabled = false;
                cfg.w_ctx = 0.0;
            }
            AblationVariant::Full => {}
        }
        cfg.variant = Some(self);
    }

    /// Parses a comma-separated list; `all` expands to every variant.
    pub fn parse_list(s: &str) -> Result<Vec<AblationVariant>, ConfigError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(AblationVariant::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| ConfigError::UnknownVariant(s.to_string()))
    }
}
