//! Yes/no QA question templates and their parser.
//!
//! Templates: `Is the <object> present?`, `Is it <value> in <slot>[ and <value> in <slot>]?`,
//! `Is the <object> <value> in <slot>?` and
//! `Is the <object> [to the ](left of|right of|above|below) the <object>?`.
//! Later sentences in one question refer back to the last named object.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::scene::{SceneDocument, SceneEntity};
use crate::caption::singularize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Count,
    Color,
    Shape,
    Texture,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Count => "count",
            Slot::Color => "color",
            Slot::Shape => "shape",
            Slot::Texture => "texture",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "count" => Some(Slot::Count),
            "color" | "colour" => Some(Slot::Color),
            "shape" => Some(Slot::Shape),
            "texture" => Some(Slot::Texture),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .as_str()
        {
            "left of" | "to the left of" => Some(Relation::LeftOf),
            "right of" | "to the right of" => Some(Relation::RightOf),
            "above" => Some(Relation::Above),
            "below" => Some(Relation::Below),
            _ => None,
        }
    }

    fn holds(self, a: &SceneEntity, b: &SceneEntity) -> bool {
        match self {
            Relation::LeftOf => a.position.column() < b.position.column(),
            Relation::RightOf => a.position.column() > b.position.column(),
            Relation::Above => a.position.row() < b.position.row(),
            Relation::Below => a.position.row() > b.position.row(),
        }
    }
}

/// One clause of a question, all about the same object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Clause {
    Present {
        object: String,
    },
    Attributes {
        object: String,
        constraints: Vec<(Slot, String)>,
    },
    Relation {
        object: String,
        relation: Relation,
        other: String,
    },
    /// Free-form descriptor, e.g. "Is it sporting white hair?".
    Feature {
        object: String,
        feature: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("question does not follow a QA template: {0:?}")]
pub struct QuestionParseError(pub String);

static PRESENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^is\s+the\s+(.+?)\s+present$").unwrap());
static IT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^is\s+it\s+(.+)$").unwrap());
static RELATION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^is\s+the\s+(.+?)\s+((?:to\s+the\s+)?(?:left\s+of|right\s+of)|above|below)\s+the\s+(.+)$")
        .unwrap()
});
static ATTR_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^is\s+the\s+(.+?)\s+(\S+\s+in\s+\w+(?:\s+and\s+\S+\s+in\s+\w+)*)$").unwrap()
});
static CONSTRAINT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(.+?)\s+in\s+(count|colou?r|shape|texture)$").unwrap());

fn parse_constraints(text: &str, whole: &str) -> Result<Vec<(Slot, String)>, QuestionParseError> {
    text.split(" and ")
        .map(|part| {
            let c = CONSTRAINT_RE
                .captures(part.trim())
                .ok_or_else(|| QuestionParseError(whole.to_string()))?;
            let slot = Slot::parse(&c[2].to_ascii_lowercase()).expect("regex admits only slots");
            Ok((slot, c[1].trim().to_string()))
        })
        .collect()
}

pub fn parse_question(question: &str) -> Result<Vec<Clause>, QuestionParseError> {
    let err = || QuestionParseError(question.to_string());
    let mut clauses = Vec::new();
    let mut last_object: Option<String> = None;
    for sentence in question.split('?').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(c) = PRESENT_RE.captures(sentence) {
            let object = c[1].to_ascii_lowercase();
            last_object = Some(object.clone());
            clauses.push(Clause::Present { object });
        } else if let Some(c) = IT_RE.captures(sentence) {
            let object = last_object.clone().ok_or_else(err)?;
            match parse_constraints(&c[1], question) {
                Ok(constraints) => clauses.push(Clause::Attributes {
                    object,
                    constraints,
                }),
                Err(_) => clauses.push(Clause::Feature {
                    object,
                    feature: c[1].trim().to_string(),
                }),
            }
        } else if let Some(c) = RELATION_RE.captures(sentence) {
            let object = c[1].to_ascii_lowercase();
            let relation = Relation::parse(&c[2].to_ascii_lowercase()).ok_or_else(err)?;
            last_object = Some(object.clone());
            clauses.push(Clause::Relation {
                object,
                relation,
                other: c[3].to_ascii_lowercase(),
            });
        } else if let Some(c) = ATTR_RE.captures(sentence) {
            let object = c[1].to_ascii_lowercase();
            let constraints = parse_constraints(&c[2], question)?;
            last_object = Some(object.clone());
            clauses.push(Clause::Attributes {
                object,
                constraints,
            });
        } else {
            return Err(err());
        }
    }
    if clauses.is_empty() {
        return Err(err());
    }
    Ok(clauses)
}

pub fn presence_question(object: &str) -> String {
    format!("Is the {object} present?")
}

pub fn attribute_question(object: &str, constraints: &[(Slot, String)]) -> String {
    let parts: Vec<String> = constraints
        .iter()
        .map(|(slot, value)| format!("{value} in {}", slot.as_str()))
        .collect();
    format!("Is the {object} present? Is it {}?", parts.join(" and "))
}

/// Single-sentence form: `Is the <object> <v> in <slot>[ and ...]?`.
pub fn direct_attribute_question(object: &str, constraints: &[(Slot, String)]) -> String {
    let parts: Vec<String> = constraints
        .iter()
        .map(|(slot, value)| format!("{value} in {}", slot.as_str()))
        .collect();
    format!("Is the {object} {}?", parts.join(" and "))
}

pub fn feature_question(object: &str, feature: &str) -> String {
    format!("Is the {object} present? Is it {feature}?")
}

pub fn relation_question(object: &str, relation: Relation, other: &str) -> String {
    format!("Is the {object} {} the {other}?", relation.phrase())
}

fn class_matches(entity: &SceneEntity, object: &str) -> bool {
    entity.class.eq_ignore_ascii_case(object)
        || singularize(&entity.class.to_ascii_lowercase()) == singularize(object)
}

fn visible<'a>(scene: &'a SceneDocument, object: &'a str) -> impl Iterator<Item = &'a SceneEntity> {
    scene
        .entities
        .iter()
        .filter(move |e| !e.placeholder && class_matches(e, object))
}

fn parse_count(text: &str) -> Option<usize> {
    match text.to_ascii_lowercase().as_str() {
        "one" => Some(1),
        "two" => Some(2),
        "three" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        other => other.parse().ok(),
    }
}

fn slot_value(entity: &SceneEntity, slot: Slot) -> Option<&str> {
    match slot {
        Slot::Color => entity.color.as_deref(),
        Slot::Shape => entity.shape.as_deref(),
        Slot::Texture => entity.texture.as_deref(),
        Slot::Count => None,
    }
}

/// Answers a parsed question against a scene exactly. Placeholders are never
/// visible; attribute comparison is case-insensitive exact match.
pub fn answer_against_scene(scene: &SceneDocument, clauses: &[Clause]) -> bool {
    clauses.iter().all(|clause| match clause {
        Clause::Present { object } => visible(scene, object).next().is_some(),
        Clause::Attributes {
            object,
            constraints,
        } => {
            let count_ok = constraints
                .iter()
                .filter(|(s, _)| *s == Slot::Count)
                .all(|(_, v)| parse_count(v) == Some(visible(scene, object).count()));
            let attrs: Vec<_> = constraints
                .iter()
                .filter(|(s, _)| *s != Slot::Count)
                .collect();
            let attrs_ok = attrs.is_empty()
                || visible(scene, object).any(|e| {
                    attrs.iter().all(|(slot, value)| {
                        slot_value(e, *slot).is_some_and(|v| v.eq_ignore_ascii_case(value))
                    })
                });
            count_ok && attrs_ok && visible(scene, object).next().is_some()
        }
        Clause::Relation {
            object,
            relation,
            other,
        } => visible(scene, object)
            .any(|a| visible(scene, other).any(|b| a.id != b.id && relation.holds(a, b))),
        Clause::Feature { object, feature } => visible(scene, object)
            .any(|e| e.features.iter().any(|f| f.eq_ignore_ascii_case(feature))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scene::{Position, SceneEntity};

    fn dog(color: &str, placeholder: bool) -> SceneDocument {
        let mut e = SceneEntity::placeholder("e1", "dog", Position::Left);
        if !placeholder {
            e.placeholder = false;
            e.color = Some(color.into());
        }
        SceneDocument {
            entities: vec![e],
            background: None,
        }
    }

    fn ask(scene: &SceneDocument, q: &str) -> bool {
        answer_against_scene(scene, &parse_question(q).unwrap())
    }

    #[test]
    fn template_answers() {
        let red = dog("red", false);
        assert!(ask(&red, "Is the dog present? Is it red in color?"));
        assert!(ask(&red, "Is the dog RED in colour?"));
        assert!(!ask(&red, "Is the cat present?"));
        assert!(!ask(&dog("", true), "Is the dog red in color?"));
        assert!(!ask(&dog("", true), "Is the dog present?"));
        assert!(ask(
            &red,
            "Is the dog present? Is it one in count and red in color?"
        ));
        assert!(!ask(&red, "Is the dog present? Is it 2 in count?"));
    }

    #[test]
    fn relations() {
        let mut scene = dog("red", false);
        let mut cat = SceneEntity::placeholder("e2", "cat", Position::Right);
        cat.placeholder = false;
        cat.color = None;
        scene.entities.push(cat);
        assert!(ask(&scene, "Is the dog to the left of the cat?"));
        assert!(!ask(&scene, "Is the dog to the right of the cat?"));
        assert!(!ask(&scene, "Is the dog above the cat?"));
    }

    #[test]
    fn rendered_templates_parse() {
        let q = attribute_question("apple", &[(Slot::Color, "red".into())]);
        assert_eq!(q, "Is the apple present? Is it red in color?");
        assert_eq!(parse_question(&q).unwrap().len(), 2);
        assert!(parse_question(&relation_question("apple", Relation::LeftOf, "bowl")).is_ok());
        assert!(parse_question(&presence_question("apple")).is_ok());
        let f = parse_question(&feature_question("airman", "sporting white hair")).unwrap();
        assert_eq!(
            f[1],
            Clause::Feature {
                object: "airman".into(),
                feature: "sporting white hair".into()
            }
        );
    }

    #[test]
    fn malformed_questions() {
        assert!(parse_question("What is this?").is_err());
        assert!(parse_question("Is it red in color?").is_err());
        assert!(parse_question("").is_err());
    }
}
