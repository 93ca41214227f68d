use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ChainPlan, PlanStep, StepKind};
use crate::backends::grammar::{self, looks_like_entity_id, Action};

/// Which decomposition rule a violation breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Step 1 must be a layout sketch or the background.
    MissingFoundation,
    /// Entity steps must address exactly one entity.
    MultiEntityStep,
    /// Every step must carry the full original caption as its final goal.
    MissingFinalGoal,
    /// Finalized entities must not be re-detailed, replaced or deleted.
    DestructiveEdit,
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub step_index: u32,
    pub rule: Rule,
    pub message: String,
}

fn violation(step_index: u32, rule: Rule, message: impl Into<String>) -> PlanViolation {
    PlanViolation {
        step_index,
        rule,
        message: message.into(),
    }
}

/// Ids mentioned in free text: whole words that look like entity ids.
fn mentioned_ids(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        .filter(|w| looks_like_entity_id(w))
        .map(str::to_string)
        .collect()
}

fn check_single_entity(step: &PlanStep, actions: Option<&[Action]>, out: &mut Vec<PlanViolation>) {
    let Some(target) = step.target_entity.as_deref() else {
        out.push(violation(
            step.index,
            Rule::MultiEntityStep,
            "entity step names no target entity",
        ));
        return;
    };
    let (addressed, limit): (BTreeSet<String>, usize) = match actions {
        Some(actions) => (
            actions
                .iter()
                .filter_map(Action::subject)
                .map(str::to_string)
                .collect(),
            1,
        ),
        // Free text: an interaction legitimately names its recipient too.
        None => (
            mentioned_ids(&step.step_action),
            if step.kind == StepKind::Interaction {
                2
            } else {
                1
            },
        ),
    };
    if addressed.len() > limit {
        out.push(violation(
            step.index,
            Rule::MultiEntityStep,
            format!(
                "step addresses {} entities: {:?}",
                addressed.len(),
                addressed
            ),
        ));
    } else if actions.is_some() && !addressed.contains(target) {
        out.push(violation(
            step.index,
            Rule::MultiEntityStep,
            format!("step action does not address its target {target}"),
        ));
    }
}

/// Checks a plan against the four decomposition rules. Violations are data:
/// the result is empty iff every rule holds.
pub fn validate_plan(plan: &ChainPlan) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    if plan.steps.is_empty() {
        out.push(violation(0, Rule::Malformed, "plan has no steps"));
        return out;
    }
    for (i, step) in plan.steps.iter().enumerate() {
        if step.index != i as u32 + 1 {
            out.push(violation(
                step.index,
                Rule::Malformed,
                format!("expected index {}, found {}", i + 1, step.index),
            ));
        }
        if step.step_action.trim().is_empty() {
            out.push(violation(step.index, Rule::Malformed, "empty step action"));
        }
    }

    let first = &plan.steps[0];
    if !first.kind.is_foundation() {
        out.push(violation(
            first.index,
            Rule::MissingFoundation,
            format!(
                "step 1 is {:?}, not a layout or background step",
                first.kind
            ),
        ));
    }

    for step in &plan.steps {
        if step.final_goal.trim().is_empty() || step.final_goal != plan.original_prompt {
            out.push(violation(
                step.index,
                Rule::MissingFinalGoal,
                "final goal differs from the original prompt",
            ));
        }
    }

    let mut placed: BTreeSet<String> = BTreeSet::new();
    let mut finalized: BTreeSet<String> = BTreeSet::new();
    for step in &plan.steps {
        let parsed = grammar::parse_actions(&step.step_action).ok();
        if step.kind.needs_target() {
            check_single_entity(step, parsed.as_deref(), &mut out);
        }
        let correction = step.kind == StepKind::Correction;
        let mut destructive = |what: String| {
            if !correction {
                out.push(violation(step.index, Rule::DestructiveEdit, what));
            }
        };
        match parsed {
            Some(actions) => {
                for action in &actions {
                    match action {
                        Action::AddPlaceholder { id, .. } => {
                            if placed.contains(id) || finalized.contains(id) {
                                destructive(format!("re-creates existing entity {id}"));
                            }
                            placed.insert(id.clone());
                        }
                        Action::Detail { id, .. } => {
                            if finalized.contains(id) {
                                destructive(format!("re-details finalized entity {id}"));
                            }
                            finalized.insert(id.clone());
                        }
                        Action::Interact { id, .. } => {
                            finalized.insert(id.clone());
                        }
                        Action::Delete { id } => {
                            destructive(format!("deletes entity {id}"));
                            placed.remove(id);
                            finalized.remove(id);
                        }
                        Action::FillBackground { .. } => {}
                    }
                }
            }
            None => {
                if let Some(target) = &step.target_entity {
                    if step.kind == StepKind::EntityDetail && finalized.contains(target) {
                        destructive(format!("re-details finalized entity {target}"));
                    }
                    if step.kind.needs_target() {
                        finalized.insert(target.clone());
                    }
                }
            }
        }
    }
    out
}
