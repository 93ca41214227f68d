//! Visual-census reports: strict enumeration of visible entities.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::scene::SceneDocument;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusInteraction {
    pub verb: String,
    #[serde(default)]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusEntry {
    pub census_id: String,
    pub class: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<CensusInteraction>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusReport {
    pub entries: Vec<CensusEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CensusError {
    #[error("census reply does not match the census schema: {0}")]
    Schema(String),
    #[error("duplicate census id {0}")]
    DuplicateId(String),
    #[error("census entry {entry} references unknown id {target}")]
    DanglingTarget { entry: String, target: String },
}

impl CensusReport {
    pub fn validate(&self) -> Result<(), CensusError> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(e.census_id.as_str()) {
                return Err(CensusError::DuplicateId(e.census_id.clone()));
            }
        }
        for e in &self.entries {
            for i in &e.interactions {
                if let Some(t) = &i.target {
                    if !ids.contains(t.as_str()) {
                        return Err(CensusError::DanglingTarget {
                            entry: e.census_id.clone(),
                            target: t.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a census exactly from a scene: placeholders are not visible,
    /// and only attributes the scene actually carries are listed.
    pub fn from_scene(scene: &SceneDocument) -> Self {
        let visible: Vec<_> = scene.entities.iter().filter(|e| !e.placeholder).collect();
        let ids: BTreeMap<&str, String> = visible
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), format!("P{}", i + 1)))
            .collect();
        let entries = visible
            .iter()
            .map(|e| CensusEntry {
                census_id: ids[e.id.as_str()].clone(),
                class: e.class.clone(),
                attributes: e.attribute_values(),
                interactions: e
                    .interactions
                    .iter()
                    .map(|i| CensusInteraction {
                        verb: i.verb.clone(),
                        target: i.target.as_deref().and_then(|t| ids.get(t).cloned()),
                    })
                    .collect(),
            })
            .collect();
        Self { entries }
    }

    /// Strict parse of a model reply. The reply must be one JSON object in
    /// the census schema, optionally wrapped in a single code fence.
    pub fn parse_strict(reply: &str) -> Result<Self, CensusError> {
        let mut text = reply.trim();
        if let Some(rest) = text.strip_prefix("```") {
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            text = rest
                .strip_suffix("```")
                .ok_or_else(|| CensusError::Schema("unterminated code fence".into()))?
                .trim();
        }
        let report: CensusReport =
            serde_json::from_str(text).map_err(|e| CensusError::Schema(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }
}
