//! Structured scene documents: the mock backend's stand-in for pixels.
//!
//! Every metric in this crate can be checked against a scene document
//! exactly, which is what makes the mock backend a usable oracle.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canonical;

pub const PLACEHOLDER_COLOR: &str = "gray";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Left,
    Right,
    Top,
    Bottom,
    Center,
}

impl Position {
    pub const ALL: [Position; 5] = [
        Position::Left,
        Position::Right,
        Position::Center,
        Position::Top,
        Position::Bottom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Left => "left",
            Position::Right => "right",
            Position::Top => "top",
            Position::Bottom => "bottom",
            Position::Center => "center",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "left" => Some(Position::Left),
            "right" => Some(Position::Right),
            "top" => Some(Position::Top),
            "bottom" => Some(Position::Bottom),
            "center" | "centre" | "middle" => Some(Position::Center),
            _ => None,
        }
    }

    /// Horizontal rank, left to right.
    pub fn column(self) -> u8 {
        match self {
            Position::Left => 0,
            Position::Top | Position::Center | Position::Bottom => 1,
            Position::Right => 2,
        }
    }

    /// Vertical rank, top to bottom.
    pub fn row(self) -> u8 {
        match self {
            Position::Top => 0,
            Position::Left | Position::Center | Position::Right => 1,
            Position::Bottom => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub verb: String,
    #[serde(default)]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneEntity {
    pub id: String,
    pub class: String,
    #[serde(default)]
    pub color: Option<String>,
    #[serde(default)]
    pub shape: Option<String>,
    #[serde(default)]
    pub texture: Option<String>,
    /// Free-form visual descriptors ("wearing glasses") beyond the three
    /// typed attribute slots.
    #[serde(default)]
    pub features: Vec<String>,
    pub position: Position,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default)]
    pub locked: bool,
    #[serde(default)]
    pub placeholder: bool,
}

impl SceneEntity {
    pub fn placeholder(id: &str, class: &str, position: Position) -> Self {
        Self {
            id: id.to_string(),
            class: class.to_string(),
            color: Some(PLACEHOLDER_COLOR.to_string()),
            shape: None,
            texture: None,
            features: Vec::new(),
            position,
            interactions: Vec::new(),
            locked: false,
            placeholder: true,
        }
    }

    /// Visible attribute strings, in slot order.
    pub fn attribute_values(&self) -> Vec<String> {
        let mut out: Vec<String> = [&self.color, &self.shape, &self.texture]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        out.extend(self.features.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub entities: Vec<SceneEntity>,
    #[serde(default)]
    pub background: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error("scene document does not parse: {0}")]
    Parse(String),
    #[error("duplicate entity id {0}")]
    DuplicateId(String),
    #[error("entity {entity} interacts with unknown entity {target}")]
    DanglingInteraction { entity: String, target: String },
    #[error("placeholder {0} must be gray and untextured")]
    PlaceholderNotGray(String),
}

impl SceneDocument {
    pub fn entity(&self, id: &str) -> Option<&SceneEntity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn entity_mut(&mut self, id: &str) -> Option<&mut SceneEntity> {
        self.entities.iter_mut().find(|e| e.id == id)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids = BTreeSet::new();
        for e in &self.entities {
            if !ids.insert(e.id.as_str()) {
                return Err(SceneError::DuplicateId(e.id.clone()));
            }
        }
        for e in &self.entities {
            if e.placeholder
                && (e.color.as_deref() != Some(PLACEHOLDER_COLOR) || e.texture.is_some())
            {
                return Err(SceneError::PlaceholderNotGray(e.id.clone()));
            }
            for i in &e.interactions {
                if let Some(t) = &i.target {
                    if !ids.contains(t.as_str()) {
                        return Err(SceneError::DanglingInteraction {
                            entity: e.id.clone(),
                            target: t.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_bytes(self).expect("scene documents always serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SceneError> {
        let scene: SceneDocument =
            canonical::from_slice(bytes).map_err(|e| SceneError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }
}
