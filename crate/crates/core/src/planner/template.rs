//! The mock planner's deterministic decomposition template.
//!
//! Layout placeholders first, then one detail step per entity, one step per
//! interaction, and the background last.

use chrono::{DateTime, Utc};
use serde_json::json;

use super::{ChainPlan, PlanStep, StepKind};
use crate::backends::grammar::{render_actions, Action, AttrKey};
use crate::backends::scene::Position;
use crate::canonical;
use crate::caption::{self, EC_BACKGROUND, EC_INTERACTION_PAIRS};

pub fn slot_position(slot: usize) -> Position {
    Position::ALL[slot % Position::ALL.len()]
}

pub fn entity_id(slot: usize) -> String {
    format!("e{}", slot + 1)
}

struct Builder {
    goal: String,
    steps: Vec<PlanStep>,
}

impl Builder {
    fn push(&mut self, kind: StepKind, actions: &[Action], target: Option<String>) {
        self.steps.push(PlanStep {
            index: self.steps.len() as u32 + 1,
            kind,
            final_goal: self.goal.clone(),
            step_action: render_actions(actions),
            target_entity: target,
        });
    }
}

/// Plans a caption the mock backends understand; `None` for anything else.
pub fn mock_plan(caption_text: &str) -> Option<ChainPlan> {
    let mut b = Builder {
        goal: caption_text.to_string(),
        steps: Vec::new(),
    };
    if let Some(ec) = caption::parse_ec_text(caption_text) {
        let layout: Vec<Action> = (0..4)
            .map(|i| Action::AddPlaceholder {
                id: entity_id(i),
                class: ec.job.clone(),
                position: slot_position(i),
            })
            .collect();
        b.push(StepKind::FoundationalLayout, &layout, None);
        for (i, attribute) in ec.attributes.iter().enumerate() {
            let detail = Action::Detail {
                id: entity_id(i),
                class: Some(ec.job.clone()),
                attributes: vec![(AttrKey::Feature, attribute.clone())],
            };
            b.push(StepKind::EntityDetail, &[detail], Some(entity_id(i)));
        }
        for (verb, (from, to)) in ec.interactions.iter().zip(EC_INTERACTION_PAIRS) {
            let interact = Action::Interact {
                id: entity_id(from),
                class: Some(ec.job.clone()),
                verb: verb.clone(),
                target: Some(entity_id(to)),
            };
            b.push(StepKind::Interaction, &[interact], Some(entity_id(from)));
        }
        let bg = Action::FillBackground {
            text: EC_BACKGROUND.into(),
        };
        b.push(StepKind::Background, &[bg], None);
    } else {
        let scene = caption::parse_simple_caption(caption_text)?;
        let instances = scene.instances();
        let layout: Vec<Action> = instances
            .iter()
            .enumerate()
            .map(|(i, (e, position))| Action::AddPlaceholder {
                id: entity_id(i),
                class: e.class.clone(),
                position: *position,
            })
            .collect();
        b.push(StepKind::FoundationalLayout, &layout, None);
        for (i, (e, _)) in instances.iter().enumerate() {
            let attributes: Vec<(AttrKey, String)> = [
                (AttrKey::Color, &e.color),
                (AttrKey::Shape, &e.shape),
                (AttrKey::Texture, &e.texture),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
            let detail = Action::Detail {
                id: entity_id(i),
                class: Some(e.class.clone()),
                attributes,
            };
            b.push(StepKind::EntityDetail, &[detail], Some(entity_id(i)));
        }
        if let Some(background) = scene.background {
            b.push(
                StepKind::Background,
                &[Action::FillBackground { text: background }],
                None,
            );
        }
    }
    Some(ChainPlan {
        original_prompt: caption_text.to_string(),
        steps: b.steps,
        planner_model: "mock".into(),
        created_at: DateTime::<Utc>::UNIX_EPOCH,
    })
}

/// The mock LLM's reply: a short preamble and a fenced plan block.
pub fn mock_reply(caption_text: &str) -> Option<String> {
    let plan = mock_plan(caption_text)?;
    let block = json!({ "original_prompt": plan.original_prompt, "steps": plan.steps });
    let text = canonical::to_string(&block).expect("plan block serializes");
    Some(format!(
        "Here is the step-by-step plan.\n\n```json\n{text}```\n"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::validate_plan;

    #[test]
    fn ec_prompt_gives_eight_steps() {
        let text = caption::render_ec_text(
            "airmen",
            &[
                "smiling".into(),
                "bald".into(),
                "bearded".into(),
                "laughing".into(),
            ],
            &["talking to".into(), "glaring at".into()],
        );
        let plan = mock_plan(&text).unwrap();
        let kinds: Vec<StepKind> = plan.steps.iter().map(|s| s.kind).collect();
        assert_eq!(plan.steps.len(), 8);
        assert_eq!(kinds[0], StepKind::FoundationalLayout);
        assert_eq!(
            kinds
                .iter()
                .filter(|k| **k == StepKind::EntityDetail)
                .count(),
            4
        );
        assert_eq!(
            kinds
                .iter()
                .filter(|k| **k == StepKind::Interaction)
                .count(),
            2
        );
        assert_eq!(kinds[7], StepKind::Background);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn unreadable_captions_have_no_plan() {
        assert!(mock_plan("paint something nice").is_none());
        assert!(mock_reply("paint something nice").is_none());
    }
}
