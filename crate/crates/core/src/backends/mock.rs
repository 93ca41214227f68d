//! Deterministic mock backends. They hold no mutable state, so identical
//! inputs give byte-identical outputs in any process.

use super::census::CensusReport;
use super::grammar::{self, Action};
use super::question;
use super::scene::{Interaction, SceneDocument, SceneEntity};
use super::{
    require_non_empty, Answer, BackendConfig, BackendError, ImageModel, MockFault, TextModel,
    VisionModel,
};
use crate::artifact::ImageArtifact;
use crate::caption::{self, EC_BACKGROUND, EC_INTERACTION_PAIRS};
use crate::planner::template;

/// Label preceding the imperative part of a rendered step prompt.
pub const ACTION_LABEL: &str = "This Step's Action:";

fn check_available(fault: Option<MockFault>) -> Result<(), BackendError> {
    if fault == Some(MockFault::Unavailable) {
        return Err(BackendError::Transport(
            "mock backend is unavailable".into(),
        ));
    }
    Ok(())
}

/// Returns the step-action part of a dual-context prompt, or the whole
/// prompt when it carries no action label.
pub fn step_action(prompt: &str) -> &str {
    match prompt.find(ACTION_LABEL) {
        Some(at) => prompt[at + ACTION_LABEL.len()..].trim(),
        None => prompt.trim(),
    }
}

#[derive(Debug, Clone)]
pub struct MockText {
    model: String,
    fault: Option<MockFault>,
}

impl MockText {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            model: config.model_name.clone(),
            fault: config.fault,
        }
    }
}

pub const MOCK_REFUSAL: &str = "I could not identify concrete entities to draw in this request.";

impl TextModel for MockText {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        require_non_empty("system prompt", system_prompt)?;
        require_non_empty("user prompt", user_prompt)?;
        check_available(self.fault)?;
        let caption = user_prompt.split("\n\n").next().unwrap_or("").trim();
        Ok(template::mock_reply(caption).unwrap_or_else(|| MOCK_REFUSAL.to_string()))
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

#[derive(Debug, Clone)]
pub struct MockImage {
    fault: Option<MockFault>,
    latency: std::time::Duration,
}

impl MockImage {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            fault: config.fault,
            latency: std::time::Duration::from_millis(config.mock_latency_ms),
        }
    }
}

/// Renders a whole caption in one pass, the way a single-shot model would.
pub fn render_caption(text: &str) -> Option<SceneDocument> {
    if let Some(ec) = caption::parse_ec_text(text) {
        let mut entities: Vec<SceneEntity> = (0..4)
            .map(|i| SceneEntity {
                id: format!("e{}", i + 1),
                class: ec.job.clone(),
                color: None,
                shape: None,
                texture: None,
                features: vec![ec.attributes[i].clone()],
                position: template::slot_position(i),
                interactions: Vec::new(),
                locked: false,
                placeholder: false,
            })
            .collect();
        for (verb, (a, b)) in ec.interactions.iter().zip(EC_INTERACTION_PAIRS) {
            entities[a].interactions.push(Interaction {
                verb: verb.clone(),
                target: Some(format!("e{}", b + 1)),
            });
        }
        return Some(SceneDocument {
            entities,
            background: Some(EC_BACKGROUND.into()),
        });
    }
    let parsed = caption::parse_simple_caption(text)?;
    let entities = parsed
        .instances()
        .into_iter()
        .enumerate()
        .map(|(i, (e, position))| SceneEntity {
            id: format!("e{}", i + 1),
            class: e.class,
            color: e.color,
            shape: e.shape,
            texture: e.texture,
            features: Vec::new(),
            position,
            interactions: Vec::new(),
            locked: false,
            placeholder: false,
        })
        .collect();
    Some(SceneDocument {
        entities,
        background: parsed.background,
    })
}

fn drop_last_entity(scene: &mut SceneDocument) {
    if let Some(last) = scene.entities.pop() {
        for e in &mut scene.entities {
            e.interactions
                .retain(|i| i.target.as_deref() != Some(last.id.as_str()));
        }
    }
}

impl ImageModel for MockImage {
    fn generate(&self, prompt: &str) -> Result<ImageArtifact, BackendError> {
        require_non_empty("prompt", prompt)?;
        check_available(self.fault)?;
        std::thread::sleep(self.latency);
        let action_text = step_action(prompt);
        let mut scene = match grammar::parse_actions(action_text) {
            Ok(actions) => {
                let mut scene = SceneDocument::default();
                grammar::apply_actions(&mut scene, &actions)?;
                scene
            }
            Err(err) if !prompt.contains(ACTION_LABEL) => {
                render_caption(prompt).ok_or(BackendError::Grammar(err))?
            }
            Err(err) => return Err(err.into()),
        };
        if self.fault == Some(MockFault::DropLastEntity) {
            drop_last_entity(&mut scene);
        }
        scene
            .validate()
            .map_err(|e| BackendError::InvalidEdit(e.to_string()))?;
        Ok(ImageArtifact::from_scene(&scene))
    }

    fn edit(&self, image: &ImageArtifact, prompt: &str) -> Result<ImageArtifact, BackendError> {
        require_non_empty("prompt", prompt)?;
        check_available(self.fault)?;
        std::thread::sleep(self.latency);
        let before = image
            .scene()
            .map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        let actions = grammar::parse_actions(step_action(prompt))?;
        let mut after = before.clone();
        grammar::apply_actions(&mut after, &actions)?;
        let targeted: Vec<&str> = actions.iter().filter_map(Action::subject).collect();
        for old in before.entities.iter().filter(|e| e.locked) {
            if targeted.contains(&old.id.as_str()) {
                continue;
            }
            if after.entity(&old.id) != Some(old) {
                return Err(BackendError::LockedEntityMutation(old.id.clone()));
            }
        }
        after
            .validate()
            .map_err(|e| BackendError::InvalidEdit(e.to_string()))?;
        Ok(ImageArtifact::from_scene(&after))
    }
}

#[derive(Debug, Clone)]
pub struct MockVision {
    fault: Option<MockFault>,
}

impl MockVision {
    pub fn new(config: &BackendConfig) -> Self {
        Self {
            fault: config.fault,
        }
    }
}

impl VisionModel for MockVision {
    fn answer(&self, image: &ImageArtifact, question_text: &str) -> Result<Answer, BackendError> {
        check_available(self.fault)?;
        let clauses = question::parse_question(question_text)?;
        let scene = image
            .scene()
            .map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        Ok(Answer::from_bool(question::answer_against_scene(
            &scene, &clauses,
        )))
    }

    fn census(&self, image: &ImageArtifact) -> Result<CensusReport, BackendError> {
        check_available(self.fault)?;
        let scene = image
            .scene()
            .map_err(|e| BackendError::InvalidImage(e.to_string()))?;
        Ok(CensusReport::from_scene(&scene))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{mllm_answer, mllm_census, t2i_edit, t2i_generate};

    fn cfg() -> BackendConfig {
        BackendConfig::mock()
    }

    #[test]
    fn generate_single_and_double_placeholder() {
        let one = t2i_generate("Add placeholder e1: dog at left", &cfg()).unwrap();
        let scene = one.scene().unwrap();
        assert_eq!(scene.entities.len(), 1);
        assert!(scene.entities[0].placeholder);
        assert_eq!(scene.entities[0].color.as_deref(), Some("gray"));

        let two = t2i_generate(
            "Add placeholder e1: dog at left. Add placeholder e2: dog at right",
            &cfg(),
        )
        .unwrap()
        .scene()
        .unwrap();
        let ids: Vec<_> = two.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["e1", "e2"]);
    }

    #[test]
    fn generate_rejects_free_text() {
        assert!(matches!(
            t2i_generate("paint something nice", &cfg()),
            Err(BackendError::Grammar(_))
        ));
        assert!(matches!(
            t2i_generate("", &cfg()),
            Err(BackendError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn edit_examples() {
        let base = t2i_generate("Add placeholder e1: dog at left", &cfg()).unwrap();
        let edited = t2i_edit(&base, "Detail e1: color=red, texture=glossy", &cfg()).unwrap();
        assert_ne!(edited.id, base.id);
        let e1 = edited.scene().unwrap().entities[0].clone();
        assert_eq!(e1.color.as_deref(), Some("red"));
        assert_eq!(e1.texture.as_deref(), Some("glossy"));
        assert!(!e1.placeholder && e1.locked);

        assert!(matches!(
            t2i_edit(&base, "Detail e9: color=red", &cfg()),
            Err(BackendError::UnknownEntity(id)) if id == "e9"
        ));

        let bg = t2i_edit(&edited, "Fill background: park", &cfg()).unwrap();
        let scene = bg.scene().unwrap();
        assert_eq!(scene.background.as_deref(), Some("park"));
        assert_eq!(scene.entities, edited.scene().unwrap().entities);
    }

    #[test]
    fn edit_reads_the_action_line_of_a_dual_context_prompt() {
        let base = t2i_generate("Add placeholder e1: apple at left", &cfg()).unwrap();
        let prompt = "Final Goal: a red apple\nThis Step's Action: Detail e1 (apple): color=red";
        let scene = t2i_edit(&base, prompt, &cfg()).unwrap().scene().unwrap();
        assert_eq!(scene.entities[0].color.as_deref(), Some("red"));
    }

    #[test]
    fn answers_follow_the_scene() {
        let base = t2i_generate("Add placeholder e1: dog at left", &cfg()).unwrap();
        let red = t2i_edit(&base, "Detail e1: color=red", &cfg()).unwrap();
        let yes = mllm_answer(&red, "Is the dog present? Is it red in color?", &cfg()).unwrap();
        assert_eq!(yes, Answer::Yes);
        assert_eq!(
            mllm_answer(&base, "Is the dog red in color?", &cfg()).unwrap(),
            Answer::No
        );
        assert_eq!(
            mllm_answer(&red, "Is the cat present?", &cfg()).unwrap(),
            Answer::No
        );
        assert!(matches!(
            mllm_answer(&red, "how many dogs", &cfg()),
            Err(BackendError::QuestionParse(_))
        ));
    }

    #[test]
    fn census_counts_only_detailed_entities() {
        let scene = t2i_generate(
            "Add placeholder e1: nurse at left. Add placeholder e2: nurse at right. \
             Add placeholder e3: nurse at center. Add placeholder e4: nurse at top. \
             Detail e1: feature=smiling. Detail e2: feature=bald. Detail e3: feature=laughing",
            &cfg(),
        )
        .unwrap();
        assert_eq!(mllm_census(&scene, &cfg()).unwrap().entries.len(), 3);
        assert_eq!(
            mllm_census(&ImageArtifact::blank(), &cfg())
                .unwrap()
                .entries
                .len(),
            0
        );
    }

    #[test]
    fn single_pass_renders_captions_and_drop_fault_merges() {
        let text = caption::render_ec_text(
            "nurses",
            &[
                "smiling".into(),
                "bald".into(),
                "laughing".into(),
                "bearded".into(),
            ],
            &["talking to".into(), "hugging".into()],
        );
        let full = t2i_generate(&text, &cfg()).unwrap().scene().unwrap();
        assert_eq!(full.entities.len(), 4);
        assert_eq!(full.background.as_deref(), Some("room"));
        let merged = t2i_generate(&text, &cfg().with_fault(MockFault::DropLastEntity))
            .unwrap()
            .scene()
            .unwrap();
        assert_eq!(merged.entities.len(), 3);
        merged.validate().unwrap();
    }

    #[test]
    fn unavailable_fault() {
        let down = cfg().with_fault(MockFault::Unavailable);
        assert!(matches!(
            t2i_generate("Add placeholder e1: dog at left", &down),
            Err(BackendError::Transport(_))
        ));
    }

    #[test]
    fn outputs_are_deterministic() {
        let a = t2i_generate("A red apple and a blue bowl on a table", &cfg()).unwrap();
        let b = t2i_generate("A red apple and a blue bowl on a table", &cfg()).unwrap();
        assert_eq!(a, b);
    }
}
