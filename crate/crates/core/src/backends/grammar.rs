//! The constrained action grammar understood by the mock image backend.
//!
//! ```text
//! Add placeholder <id>: <class> at <position>
//! Detail <id> [(<class>)][: <key>=<value>{, <key>=<value>}]    keys: color, shape, texture, feature
//! Interact <id> [(<class>)]: <verb> [<target_id>]
//! Delete <id>
//! Fill background: <text>
//! ```
//!
//! Actions are separated by newlines or by a period followed by whitespace.

use std::sync::LazyLock;

use regex::Regex;

use super::scene::{Interaction, Position, SceneDocument, SceneEntity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrKey {
    Color,
    Shape,
    Texture,
    Feature,
}

impl AttrKey {
    pub fn as_str(self) -> &'static str {
        match self {
            AttrKey::Color => "color",
            AttrKey::Shape => "shape",
            AttrKey::Texture => "texture",
            AttrKey::Feature => "feature",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "color" | "colour" => Some(AttrKey::Color),
            "shape" => Some(AttrKey::Shape),
            "texture" => Some(AttrKey::Texture),
            "feature" => Some(AttrKey::Feature),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    AddPlaceholder {
        id: String,
        class: String,
        position: Position,
    },
    Detail {
        id: String,
        class: Option<String>,
        attributes: Vec<(AttrKey, String)>,
    },
    Interact {
        id: String,
        class: Option<String>,
        verb: String,
        target: Option<String>,
    },
    Delete {
        id: String,
    },
    FillBackground {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("prompt contains no actions")]
    Empty,
    #[error("cannot parse action {0:?}")]
    Unparseable(String),
    #[error("unknown attribute key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("entity {0} already exists")]
    DuplicateEntity(String),
    #[error("edit would alter locked entity {0}, which it does not target")]
    LockedEntityMutation(String),
    #[error("entity {id} is a {actual}, not a {annotated}")]
    ClassMismatch {
        id: String,
        annotated: String,
        actual: String,
    },
}

static ID: &str = r"[A-Za-z_][A-Za-z0-9_\-]*";

static ADD_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^add\s+placeholder\s+({ID})\s*:\s*(.+?)\s+at\s+(?:the\s+)?(left|right|top|bottom|center|centre|middle)$"
    ))
    .unwrap()
});
static DETAIL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^detail\s+({ID})(?:\s*\(([^()]+)\))?\s*(?::\s*(.*))?$"
    ))
    .unwrap()
});
static INTERACT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^interact\s+({ID})(?:\s*\(([^()]+)\))?\s*:\s*(.+)$"
    ))
    .unwrap()
});
static DELETE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)^delete\s+({ID})$")).unwrap());
static BACKGROUND_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^fill\s+background\s*:\s*(.+)$").unwrap());
static SPLIT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\.(?:\s+|$)|\n").unwrap());
static TARGET_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_\-]*[0-9][A-Za-z0-9_\-]*$").unwrap());

/// True when `token` has the shape of an entity id (identifier containing a digit).
pub fn looks_like_entity_id(token: &str) -> bool {
    TARGET_RE.is_match(token)
}

pub fn parse_actions(prompt: &str) -> Result<Vec<Action>, GrammarError> {
    let mut actions = Vec::new();
    for piece in SPLIT_RE.split(prompt) {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        actions.push(parse_action(piece)?);
    }
    if actions.is_empty() {
        return Err(GrammarError::Empty);
    }
    Ok(actions)
}

pub fn parse_action(text: &str) -> Result<Action, GrammarError> {
    let text = text.trim().trim_end_matches('.');
    if let Some(c) = ADD_RE.captures(text) {
        return Ok(Action::AddPlaceholder {
            id: c[1].to_string(),
            class: c[2].trim().to_string(),
            position: Position::parse(&c[3]).expect("regex admits only positions"),
        });
    }
    if let Some(c) = DETAIL_RE.captures(text) {
        let mut attributes = Vec::new();
        if let Some(body) = c.get(3) {
            for pair in body.as_str().split(',') {
                let pair = pair.trim();
                if pair.is_empty() {
                    continue;
                }
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| GrammarError::Unparseable(text.to_string()))?;
                let key = AttrKey::parse(key)
                    .ok_or_else(|| GrammarError::UnknownKey(key.trim().into()))?;
                let value = value.trim();
                if value.is_empty() {
                    return Err(GrammarError::Unparseable(text.to_string()));
                }
                attributes.push((key, value.to_string()));
            }
        }
        return Ok(Action::Detail {
            id: c[1].to_string(),
            class: c.get(2).map(|m| m.as_str().trim().to_string()),
            attributes,
        });
    }
    if let Some(c) = INTERACT_RE.captures(text) {
        let rest = c[3].trim();
        let (verb, target) = match rest.rsplit_once(char::is_whitespace) {
            Some((verb, last)) if looks_like_entity_id(last) => {
                (verb.trim().to_string(), Some(last.to_string()))
            }
            _ => (rest.to_string(), None),
        };
        return Ok(Action::Interact {
            id: c[1].to_string(),
            class: c.get(2).map(|m| m.as_str().trim().to_string()),
            verb,
            target,
        });
    }
    if let Some(c) = DELETE_RE.captures(text) {
        return Ok(Action::Delete {
            id: c[1].to_string(),
        });
    }
    if let Some(c) = BACKGROUND_RE.captures(text) {
        return Ok(Action::FillBackground {
            text: c[1].trim().to_string(),
        });
    }
    Err(GrammarError::Unparseable(text.to_string()))
}

impl Action {
    /// Entity id this action writes to, if any.
    pub fn subject(&self) -> Option<&str> {
        match self {
            Action::AddPlaceholder { id, .. }
            | Action::Detail { id, .. }
            | Action::Interact { id, .. }
            | Action::Delete { id } => Some(id),
            Action::FillBackground { .. } => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Action::AddPlaceholder {
                id,
                class,
                position,
            } => {
                format!("Add placeholder {id}: {class} at {}", position.as_str())
            }
            Action::Detail {
                id,
                class,
                attributes,
            } => {
                let mut out = format!("Detail {id}");
                if let Some(class) = class {
                    out.push_str(&format!(" ({class})"));
                }
                if !attributes.is_empty() {
                    let pairs: Vec<String> = attributes
                        .iter()
                        .map(|(k, v)| format!("{}={v}", k.as_str()))
                        .collect();
                    out.push_str(": ");
                    out.push_str(&pairs.join(", "));
                }
                out
            }
            Action::Interact {
                id,
                class,
                verb,
                target,
            } => {
                let mut out = format!("Interact {id}");
                if let Some(class) = class {
                    out.push_str(&format!(" ({class})"));
                }
                out.push_str(": ");
                out.push_str(verb);
                if let Some(t) = target {
                    out.push(' ');
                    out.push_str(t);
                }
                out
            }
            Action::Delete { id } => format!("Delete {id}"),
            Action::FillBackground { text } => format!("Fill background: {text}"),
        }
    }
}

pub fn render_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(Action::render)
        .collect::<Vec<_>>()
        .join(". ")
}

/// Applies `actions` to `scene` under the compositional lock: only the
/// entities an action names are touched, and touching one finalizes it.
pub fn apply_actions(scene: &mut SceneDocument, actions: &[Action]) -> Result<(), ApplyError> {
    for action in actions {
        apply_action(scene, action)?;
    }
    Ok(())
}

fn check_class(entity: &SceneEntity, class: &Option<String>) -> Result<(), ApplyError> {
    match class {
        Some(c) if !c.eq_ignore_ascii_case(&entity.class) => Err(ApplyError::ClassMismatch {
            id: entity.id.clone(),
            annotated: c.clone(),
            actual: entity.class.clone(),
        }),
        _ => Ok(()),
    }
}

fn finalize(entity: &mut SceneEntity) {
    if entity.placeholder {
        entity.placeholder = false;
        entity.color = None;
    }
    entity.locked = true;
}

fn apply_action(scene: &mut SceneDocument, action: &Action) -> Result<(), ApplyError> {
    match action {
        Action::AddPlaceholder {
            id,
            class,
            position,
        } => {
            if scene.entity(id).is_some() {
                return Err(ApplyError::DuplicateEntity(id.clone()));
            }
            scene
                .entities
                .push(SceneEntity::placeholder(id, class, *position));
        }
        Action::Detail {
            id,
            class,
            attributes,
        } => {
            let entity = scene
                .entity_mut(id)
                .ok_or_else(|| ApplyError::UnknownEntity(id.clone()))?;
            check_class(entity, class)?;
            finalize(entity);
            for (key, value) in attributes {
                match key {
                    AttrKey::Color => entity.color = Some(value.clone()),
                    AttrKey::Shape => entity.shape = Some(value.clone()),
                    AttrKey::Texture => entity.texture = Some(value.clone()),
                    AttrKey::Feature => {
                        if !entity
                            .features
                            .iter()
                            .any(|f| f.eq_ignore_ascii_case(value))
                        {
                            entity.features.push(value.clone());
                        }
                    }
                }
            }
        }
        Action::Interact {
            id,
            class,
            verb,
            target,
        } => {
            if let Some(t) = target {
                if scene.entity(t).is_none() {
                    return Err(ApplyError::UnknownEntity(t.clone()));
                }
            }
            let entity = scene
                .entity_mut(id)
                .ok_or_else(|| ApplyError::UnknownEntity(id.clone()))?;
            check_class(entity, class)?;
            finalize(entity);
            let interaction = Interaction {
                verb: verb.clone(),
                target: target.clone(),
            };
            if !entity.interactions.contains(&interaction) {
                entity.interactions.push(interaction);
            }
        }
        Action::Delete { id } => {
            if scene.entity(id).is_none() {
                return Err(ApplyError::UnknownEntity(id.clone()));
            }
            for other in scene.entities.iter_mut().filter(|e| e.id != *id) {
                let refers = other
                    .interactions
                    .iter()
                    .any(|i| i.target.as_deref() == Some(id));
                if refers {
                    if other.locked {
                        return Err(ApplyError::LockedEntityMutation(other.id.clone()));
                    }
                    other
                        .interactions
                        .retain(|i| i.target.as_deref() != Some(id));
                }
            }
            scene.entities.retain(|e| e.id != *id);
        }
        Action::FillBackground { text } => scene.background = Some(text.clone()),
    }
    Ok(())
}
