//! QA-template scoring for GenEval-, T2I-CompBench- and ConceptMix-style
//! prompt files.
//!
//! Record schema (one JSON object per line):
//! `{"id": "...", "prompt": "...", "group": "...",
//!   "objects": [{"name": "apple", "count": 1, "color": "red", "shape": null, "texture": null}],
//!   "relations": [{"subject": "apple", "relation": "left of", "object": "bowl"}],
//!   "questions": ["..."]}`
//! Only `id` and `prompt` are required. Without `objects`, simple captions are
//! parsed from `prompt`. ConceptMix-style records must carry `questions`.

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::artifact::ImageArtifact;
use crate::backends::question::{
    direct_attribute_question, presence_question, relation_question, Relation, Slot,
};
use crate::backends::{Answer, VisionModel};
use crate::caption::{parse_simple_caption, singularize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaBenchmark {
    GenevalStyle,
    CompbenchStyle,
    ConceptmixStyle,
}

impl QaBenchmark {
    pub fn as_str(self) -> &'static str {
        match self {
            QaBenchmark::GenevalStyle => "geneval_style",
            QaBenchmark::CompbenchStyle => "compbench_style",
            QaBenchmark::ConceptmixStyle => "conceptmix_style",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaObject {
    pub name: String,
    #[serde(default)]
    pub count: Option<u32>,
    #[serde(default)]
    pub color: Option<String>,
    #[serde(default)]
    pub shape: Option<String>,
    #[serde(default)]
    pub texture: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRelation {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<QaObject>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<QaRelation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub expected: Answer,
}

fn item(question: String) -> QaItem {
    QaItem {
        question,
        expected: Answer::Yes,
    }
}

pub fn parse_records(text: &str) -> Result<Vec<QaRecord>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Schema(format!("line {}: {e}", n + 1)))
        })
        .collect()
}

fn objects_from_prompt(prompt: &str) -> Option<(Vec<QaObject>, Vec<QaRelation>)> {
    let scene = parse_simple_caption(prompt)?;
    let objects: Vec<QaObject> = scene
        .entities
        .iter()
        .map(|e| QaObject {
            name: e.class.clone(),
            count: (e.count > 1).then_some(e.count),
            color: e.color.clone(),
            shape: e.shape.clone(),
            texture: e.texture.clone(),
        })
        .collect();
    let relations = scene
        .relation
        .iter()
        .map(|(a, phrase, b)| QaRelation {
            subject: objects[*a].name.clone(),
            relation: phrase.clone(),
            object: objects[*b].name.clone(),
        })
        .collect();
    Some((objects, relations))
}

/// Instantiates the QA templates for one record: a presence question per
/// object, one attribute question per constrained object (count plus
/// whichever of color/shape/texture the prompt fixes), and one question per
/// spatial relation.
pub fn build_qa(record: &QaRecord, benchmark: QaBenchmark) -> Result<Vec<QaItem>, BenchError> {
    let schema = |msg: &str| BenchError::Schema(format!("record {:?}: {msg}", record.id));
    if record.id.trim().is_empty() {
        return Err(schema("empty id"));
    }
    if benchmark == QaBenchmark::ConceptmixStyle {
        return match &record.questions {
            Some(qs) if !qs.is_empty() && qs.iter().all(|q| !q.trim().is_empty()) => {
                Ok(qs.iter().cloned().map(item).collect())
            }
            _ => Err(schema(
                "conceptmix-style records must carry their questions",
            )),
        };
    }
    let (objects, relations) = match &record.objects {
        Some(objects) => (
            objects.clone(),
            record.relations.clone().unwrap_or_default(),
        ),
        None => objects_from_prompt(&record.prompt)
            .ok_or_else(|| schema("prompt is not a parseable caption and no objects are given"))?,
    };
    if objects.is_empty() || objects.iter().any(|o| o.name.trim().is_empty()) {
        return Err(schema("objects must be non-empty and named"));
    }
    let mut items = Vec::new();
    for o in &objects {
        let name = singularize(&o.name.to_ascii_lowercase());
        items.push(item(presence_question(&name)));
        let mut constraints = Vec::new();
        if let Some(n) = o.count.filter(|n| *n > 1) {
            constraints.push((Slot::Count, n.to_string()));
        }
        for (slot, value) in [
            (Slot::Color, &o.color),
            (Slot::Shape, &o.shape),
            (Slot::Texture, &o.texture),
        ] {
            if let Some(v) = value {
                constraints.push((slot, v.clone()));
            }
        }
        if !constraints.is_empty() {
            items.push(item(direct_attribute_question(&name, &constraints)));
        }
    }
    for r in &relations {
        let relation = Relation::parse(&r.relation)
            .ok_or_else(|| schema(&format!("unknown relation {:?}", r.relation)))?;
        items.push(item(relation_question(
            &singularize(&r.subject.to_ascii_lowercase()),
            relation,
            &singularize(&r.object.to_ascii_lowercase()),
        )));
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaScore {
    /// Yes answers over answered items.
    pub fraction: f64,
    /// Every answered item came back yes (strict scoring).
    pub all_yes: bool,
    pub answered: usize,
    pub abstentions: usize,
}

/// Backend errors on individual items count as abstentions and are left out
/// of the denominator.
pub fn score_qa(
    image: &ImageArtifact,
    items: &[QaItem],
    vision: &dyn VisionModel,
) -> Result<QaScore, BenchError> {
    if items.is_empty() {
        return Err(BenchError::PreconditionViolated("no QA items".into()));
    }
    let mut yes = 0usize;
    let mut answered = 0usize;
    let mut abstentions = 0usize;
    for it in items {
        match vision.answer(image, &it.question) {
            Ok(a) => {
                answered += 1;
                if a == it.expected {
                    yes += 1;
                }
            }
            Err(e) => {
                tracing::warn!(question = %it.question, %e, "QA item abstained");
                abstentions += 1;
            }
        }
    }
    Ok(QaScore {
        fraction: if answered == 0 {
            0.0
        } else {
            yes as f64 / answered as f64
        },
        all_yes: answered > 0 && yes == answered,
        answered,
        abstentions,
    })
}
