use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::model::FeatureType;

/// Type compatibility between feature types and annotation target
/// categories, by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityTable {
    /// Direct (feature type, target category) matches.
    pub omega_exact: BTreeSet<(String, String)>,
    /// Groups of mutually compatible type labels.
    pub omega_semantic: Vec<BTreeSet<String>>,
}

/// On-disk override. Entries extend the defaults unless `replace` is set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CompatibilityOverride {
    #[serde(default)]
    pub replace: bool,
    #[serde(default)]
    pub omega_exact: Vec<(String, String)>,
    #[serde(default)]
    pub omega_semantic: Vec<Vec<String>>,
}

fn group(labels: &[&str]) -> BTreeSet<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

impl Default for CompatibilityTable {
    fn default() -> Self {
        let mut omega_exact: BTreeSet<(String, String)> = FeatureType::BUILTIN
            .iter()
            .map(|t| (t.label().to_string(), t.label().to_string()))
            .collect();
        // A tapped hole is what a thread callout targets.
        omega_exact.insert(("thread_hole".into(), "hole".into()));
        CompatibilityTable {
            omega_exact,
            omega_semantic: vec![
                group(&["hole", "bore", "drill"]),
                group(&["slot", "pocket", "groove"]),
                group(&["fillet", "round", "radius"]),
            ],
        }
    }
}

impl CompatibilityTable {
    pub fn apply_override(&mut self, ov: CompatibilityOverride) {
        if ov.replace {
            self.omega_exact.clear();
            self.omega_semantic.clear();
        }
        for (f, t) in ov.omega_exact {
            self.omega_exact
                .insert((f.to_ascii_lowercase(), t.to_ascii_lowercase()));
        }
        for g in ov.omega_semantic {
            self.omega_semantic
                .push(g.into_iter().map(|s| s.to_ascii_lowercase()).collect());
        }
    }

    pub fn load_override(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|source| IoError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let ov: CompatibilityOverride =
            serde_json::from_str(&text).map_err(|e| IoError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let mut table = CompatibilityTable::default();
        table.apply_override(ov);
        Ok(table)
    }

    pub fn is_exact(&self, feature: &str, target: &str) -> bool {
        self.omega_exact
            .contains(&(feature.to_string(), target.to_string()))
    }

    pub fn same_group(&self, a: &str, b: &str) -> bool {
        self.omega_semantic
            .iter()
            .any(|g| g.contains(a) && g.contains(b))
    }

    /// Whether a label appears anywhere in the table.
    pub fn knows(&self, label: &str) -> bool {
        self.omega_exact
            .iter()
            .any(|(f, t)| f == label || t == label)
            || self.omega_semantic.iter().any(|g| g.contains(label))
    }

    /// Holes and their semantic equivalents, plus tapped holes.
    pub fn is_hole_family(&self, feature: &FeatureType) -> bool {
        let label = feature.label();
        label == "hole" || *feature == FeatureType::ThreadHole || self.same_group(label, "hole")
    }
}
