//! Caption vocabulary and the two caption families the mock backends can
//! read back: simple attribute captions ("a red apple and a blue bowl on a
//! table") and the entity-collapse prompt template.

use std::sync::LazyLock;

use regex::Regex;

use crate::backends::scene::Position;

pub const COLORS: &[&str] = &[
    "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown", "black", "white", "gray",
];
pub const SHAPES: &[&str] = &[
    "round",
    "square",
    "rectangular",
    "triangular",
    "oval",
    "cylindrical",
    "spherical",
    "cubic",
    "circular",
    "hexagonal",
];
pub const TEXTURES: &[&str] = &[
    "glossy", "metallic", "wooden", "fluffy", "furry", "rough", "smooth", "leather", "glass",
    "plastic", "fabric", "rubber", "velvet", "marble",
];

/// Colors usable as perturbation targets (everything but the placeholder gray).
pub fn perturbation_colors() -> impl Iterator<Item = &'static str> {
    COLORS.iter().copied().filter(|c| *c != "gray")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaptionEntity {
    pub class: String,
    pub count: u32,
    pub color: Option<String>,
    pub shape: Option<String>,
    pub texture: Option<String>,
    pub position: Option<Position>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaptionScene {
    pub entities: Vec<CaptionEntity>,
    pub background: Option<String>,
    /// (subject index, relation phrase, object index)
    pub relation: Option<(usize, String, usize)>,
}

static BACKGROUND_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(.+?)\s+(?:on|in|at|inside|under)\s+(?:a|an|the)\s+([a-z][a-z ]*)$").unwrap()
});
static RELATION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(.+?)\s+(?:(?:is|are)\s+)?(?:to\s+the\s+|on\s+the\s+)?(left\s+of|right\s+of|above|below)\s+(.+)$")
        .unwrap()
});
static LIST_SPLIT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r",\s*(?:and\s+)?|\s+and\s+").unwrap());

fn number_word(word: &str) -> Option<u32> {
    match word {
        "a" | "an" | "the" | "one" => Some(1),
        "two" => Some(2),
        "three" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        _ => None,
    }
}

pub fn singularize(noun: &str) -> String {
    if let Some(stem) = noun.strip_suffix("men") {
        return format!("{stem}man");
    }
    if let Some(stem) = noun.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["ches", "shes", "sses", "xes"] {
        if noun.ends_with(suffix) {
            return noun[..noun.len() - 2].to_string();
        }
    }
    noun.strip_suffix('s')
        .filter(|s| !s.ends_with('s'))
        .unwrap_or(noun)
        .to_string()
}

fn parse_entity(phrase: &str) -> Option<CaptionEntity> {
    let mut words: Vec<&str> = phrase.split_whitespace().collect();
    let count = match words.first().and_then(|w| number_word(w)) {
        Some(n) => {
            words.remove(0);
            n
        }
        None => 1,
    };
    let noun = words.pop()?;
    if !noun.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let mut entity = CaptionEntity {
        class: if count > 1 {
            singularize(noun)
        } else {
            noun.to_string()
        },
        count,
        ..Default::default()
    };
    for word in words {
        let slot = if COLORS.contains(&word) || word == "grey" {
            &mut entity.color
        } else if SHAPES.contains(&word) {
            &mut entity.shape
        } else if TEXTURES.contains(&word) {
            &mut entity.texture
        } else {
            return None;
        };
        if slot.is_some() {
            return None;
        }
        *slot = Some(if word == "grey" {
            "gray".into()
        } else {
            word.into()
        });
    }
    Some(entity)
}

fn parse_entity_list(text: &str) -> Option<Vec<CaptionEntity>> {
    LIST_SPLIT_RE
        .split(text)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_entity)
        .collect()
}

/// Parses a simple attribute caption. Returns `None` for anything outside
/// the supported shape, such as free-form sentences.
pub fn parse_simple_caption(caption: &str) -> Option<CaptionScene> {
    let text = caption.trim().trim_end_matches('.').to_ascii_lowercase();
    if text.is_empty() {
        return None;
    }
    let (body, background) = match BACKGROUND_RE.captures(&text) {
        Some(c) => (c[1].to_string(), Some(c[2].trim().to_string())),
        None => (text.clone(), None),
    };
    let mut scene = CaptionScene {
        background,
        ..Default::default()
    };
    if let Some(c) = RELATION_RE.captures(&body) {
        let mut subject = parse_entity(c[1].trim())?;
        let mut object = parse_entity(c[3].trim())?;
        let relation: String = c[2].split_whitespace().collect::<Vec<_>>().join(" ");
        let (a, b) = match relation.as_str() {
            "left of" => (Position::Left, Position::Right),
            "right of" => (Position::Right, Position::Left),
            "above" => (Position::Top, Position::Bottom),
            _ => (Position::Bottom, Position::Top),
        };
        subject.position = Some(a);
        object.position = Some(b);
        scene.entities = vec![subject, object];
        scene.relation = Some((0, relation, 1));
    } else {
        scene.entities = parse_entity_list(&body)?;
    }
    if scene.entities.is_empty() {
        return None;
    }
    Some(scene)
}

impl CaptionScene {
    /// Expands counts into one record per instance and assigns positions.
    pub fn instances(&self) -> Vec<(CaptionEntity, Position)> {
        let mut out = Vec::new();
        let mut free = Position::ALL.iter().copied().cycle();
        for entity in &self.entities {
            for _ in 0..entity.count.max(1) {
                let position = entity.position.unwrap_or_else(|| free.next().unwrap());
                out.push((entity.clone(), position));
            }
        }
        out
    }
}

/// Version tag of the entity-collapse prompt template rendered below.
pub const EC_TEMPLATE_VERSION: u32 = 1;

/// Slots (0-based) joined by each of the two prompted interactions.
pub const EC_INTERACTION_PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];

pub fn render_ec_text(
    plural: &str,
    attributes: &[String; 4],
    interactions: &[String; 2],
) -> String {
    format!(
        "Four {plural} are in a room. The first is {} and {} the second, who is {}. \
         The third is {} and {} the fourth, who is {}.",
        attributes[0],
        interactions[0],
        attributes[1],
        attributes[2],
        interactions[1],
        attributes[3]
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EcCaption {
    pub job: String,
    pub attributes: [String; 4],
    pub interactions: [String; 2],
}

static EC_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^Four (.+?) are in a room\. The first is (.+?) and (.+?) the second, who is (.+?)\. The third is (.+?) and (.+?) the fourth, who is (.+?)\.$",
    )
    .unwrap()
});

pub fn parse_ec_text(text: &str) -> Option<EcCaption> {
    let c = EC_RE.captures(text.trim())?;
    Some(EcCaption {
        job: singularize(&c[1]),
        attributes: [c[2].into(), c[4].into(), c[5].into(), c[7].into()],
        interactions: [c[3].into(), c[6].into()],
    })
}

/// The background every entity-collapse prompt names.
pub const EC_BACKGROUND: &str = "room";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_captions() {
        let s = parse_simple_caption("A red apple and a blue bowl on a table").unwrap();
        assert_eq!(s.background.as_deref(), Some("table"));
        assert_eq!(s.entities.len(), 2);
        assert_eq!(s.entities[0].class, "apple");
        assert_eq!(s.entities[0].color.as_deref(), Some("red"));
        assert_eq!(s.entities[1].class, "bowl");
        assert_eq!(s.entities[1].color.as_deref(), Some("blue"));

        let dog = parse_simple_caption("a dog").unwrap();
        assert_eq!(dog.entities.len(), 1);
        assert_eq!(dog.background, None);

        let rel = parse_simple_caption("a red apple left of a blue bowl").unwrap();
        assert_eq!(rel.entities[0].position, Some(Position::Left));
        assert_eq!(rel.entities[1].position, Some(Position::Right));
        assert_eq!(rel.relation.as_ref().unwrap().1, "left of");

        let two = parse_simple_caption("two fluffy cats").unwrap();
        assert_eq!(two.entities[0].count, 2);
        assert_eq!(two.entities[0].class, "cat");
        assert_eq!(two.instances().len(), 2);
    }

    #[test]
    fn free_text_is_rejected() {
        assert!(parse_simple_caption("paint something nice").is_none());
        assert!(parse_simple_caption("").is_none());
        assert!(parse_simple_caption("a red red apple").is_none());
    }

    #[test]
    fn ec_template_round_trips() {
        let attrs = [
            "smiling".to_string(),
            "holding a bottle".into(),
            "wearing glasses".into(),
            "sporting white hair".into(),
        ];
        let inter = ["talking to".to_string(), "glaring at".into()];
        let text = render_ec_text("airmen", &attrs, &inter);
        assert!(text.starts_with("Four airmen are in a room. The first is smiling and talking to the second, who is holding a bottle."));
        let parsed = parse_ec_text(&text).unwrap();
        assert_eq!(parsed.job, "airman");
        assert_eq!(parsed.attributes, attrs);
        assert_eq!(parsed.interactions, inter);
        assert!(parse_ec_text("Four airmen.").is_none());
    }

    #[test]
    fn singular_forms() {
        for (p, s) in [
            ("airmen", "airman"),
            ("nurses", "nurse"),
            ("baristas", "barista"),
            ("police officers", "police officer"),
            ("boxes", "box"),
            ("glass", "glass"),
        ] {
            assert_eq!(singularize(p), s);
        }
    }
}
