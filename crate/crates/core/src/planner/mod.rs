//! Compositional planning: decompose one caption into an ordered plan of
//! single-entity steps, and check plans against the decomposition rules.

mod parse;
pub mod template;
mod validate;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::{self, BackendConfig, BackendError, TextModel};
use crate::canonical;

pub use parse::{parse_planner_output, ParsedPlan};
pub use validate::{validate_plan, PlanViolation, Rule};

/// Versioned system prompt sent with every decomposition request.
pub const SYSTEM_PROMPT: &str = include_str!("../../assets/prompts/planner_system.v1.txt");
pub const SYSTEM_PROMPT_VERSION: u32 = 1;

const REFORMAT_REMINDER: &str = "Your previous reply could not be read. Reply again with only one \
fenced ```json block containing the fields original_prompt and steps, exactly as specified.";

pub const DEFAULT_STEP_CAP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    FoundationalLayout,
    Background,
    EntityDetail,
    Interaction,
    Correction,
}

impl StepKind {
    pub fn is_foundation(self) -> bool {
        matches!(self, StepKind::FoundationalLayout | StepKind::Background)
    }

    pub fn needs_target(self) -> bool {
        matches!(self, StepKind::EntityDetail | StepKind::Interaction)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub kind: StepKind,
    pub final_goal: String,
    pub step_action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entity: Option<String>,
}

impl PlanStep {
    /// The dual-context prompt sent to the image model for this step.
    pub fn render_prompt(&self) -> String {
        format!(
            "Final Goal: {}\n{} {}",
            self.final_goal,
            backends::mock::ACTION_LABEL,
            self.step_action
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainPlan {
    pub original_prompt: String,
    pub steps: Vec<PlanStep>,
    pub planner_model: String,
    pub created_at: DateTime<Utc>,
}

impl ChainPlan {
    pub fn step(&self, index: u32) -> Option<&PlanStep> {
        index
            .checked_sub(1)
            .and_then(|i| self.steps.get(i as usize))
    }

    pub fn len(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Rewrites step indices to 1..=n in list order.
    pub fn renumber(&mut self) {
        for (i, step) in self.steps.iter_mut().enumerate() {
            step.index = i as u32 + 1;
        }
    }

    /// The on-disk plan file / plan block encoding.
    pub fn to_canonical_string(&self) -> String {
        canonical::to_string(self).expect("plans always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("planner output unusable: {0}")]
    PlannerOutput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Clone, Debug)]
pub struct PlannerOptions {
    pub step_cap: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

/// Asks the LLM for a plan, with one reformat retry when the reply does not
/// contain a readable plan block.
pub fn decompose_with(
    llm: &dyn TextModel,
    prompt: &str,
    options: &PlannerOptions,
) -> Result<ChainPlan, PlannerError> {
    if prompt.trim().is_empty() {
        return Err(PlannerError::PreconditionViolated("prompt is empty".into()));
    }
    let reply = llm.complete(SYSTEM_PROMPT, prompt)?;
    let parsed = match parse_planner_output(&reply) {
        Ok(p) => p,
        Err(first) => {
            tracing::warn!(%first, "planner reply unreadable, asking again");
            let retry = llm.complete(SYSTEM_PROMPT, &format!("{prompt}\n\n{REFORMAT_REMINDER}"))?;
            parse_planner_output(&retry)?
        }
    };
    for w in &parsed.warnings {
        tracing::warn!("{w}");
    }
    let mut plan = parsed.plan;
    if plan.steps.len() > options.step_cap {
        return Err(PlannerError::PlannerOutput(format!(
            "plan has {} steps, the cap is {}",
            plan.steps.len(),
            options.step_cap
        )));
    }
    plan.original_prompt = prompt.to_string();
    plan.planner_model = llm.model_name().to_string();
    plan.created_at = Utc::now();
    Ok(plan)
}

pub fn decompose(prompt: &str, backend: &BackendConfig) -> Result<ChainPlan, PlannerError> {
    let llm = backends::text_model(backend)?;
    decompose_with(llm.as_ref(), prompt, &PlannerOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendConfig;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn apple_and_bowl_plan() {
        let plan = decompose(
            "A red apple and a blue bowl on a table",
            &BackendConfig::mock(),
        )
        .unwrap();
        let actions: Vec<_> = plan.steps.iter().map(|s| s.step_action.as_str()).collect();
        assert_eq!(
            actions,
            [
                "Add placeholder e1: apple at left. Add placeholder e2: bowl at right",
                "Detail e1 (apple): color=red",
                "Detail e2 (bowl): color=blue",
                "Fill background: table",
            ]
        );
        assert_eq!(plan.steps[0].kind, StepKind::FoundationalLayout);
        assert_eq!(plan.steps[1].target_entity.as_deref(), Some("e1"));
        assert!(plan
            .steps
            .iter()
            .all(|s| s.final_goal == "A red apple and a blue bowl on a table"));
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn minimal_prompt() {
        let plan = decompose("a dog", &BackendConfig::mock()).unwrap();
        assert!((2..=3).contains(&plan.steps.len()));
        assert!(plan.steps[0].kind.is_foundation());
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn empty_prompt_is_rejected() {
        assert!(matches!(
            decompose("  ", &BackendConfig::mock()),
            Err(PlannerError::PreconditionViolated(_))
        ));
    }

    struct Flaky {
        calls: AtomicUsize,
        replies: Vec<String>,
    }

    impl TextModel for Flaky {
        fn complete(&self, _s: &str, _u: &str) -> Result<String, BackendError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.replies[i.min(self.replies.len() - 1)].clone())
        }
        fn model_name(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn one_reformat_retry() {
        let good = template::mock_reply("a dog").unwrap();
        let llm = Flaky {
            calls: AtomicUsize::new(0),
            replies: vec!["Sure! I'd love to help.".into(), good],
        };
        let plan = decompose_with(&llm, "a dog", &PlannerOptions::default()).unwrap();
        assert_eq!(plan.planner_model, "flaky");
        assert_eq!(llm.calls.load(Ordering::SeqCst), 2);

        let hopeless = Flaky {
            calls: AtomicUsize::new(0),
            replies: vec!["no plan here".into()],
        };
        assert!(matches!(
            decompose_with(&hopeless, "a dog", &PlannerOptions::default()),
            Err(PlannerError::PlannerOutput(_))
        ));
        assert_eq!(hopeless.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn step_cap_is_enforced() {
        let llm = Flaky {
            calls: AtomicUsize::new(0),
            replies: vec![template::mock_reply("A red apple and a blue bowl on a table").unwrap()],
        };
        let err = decompose_with(&llm, "x", &PlannerOptions { step_cap: 3 }).unwrap_err();
        assert!(matches!(err, PlannerError::PlannerOutput(_)));
    }

    #[test]
    fn rendered_prompt_carries_both_contexts() {
        let plan = decompose("a dog", &BackendConfig::mock()).unwrap();
        let text = plan.steps[1].render_prompt();
        assert_eq!(
            text,
            "Final Goal: a dog\nThis Step's Action: Detail e1 (dog)"
        );
    }
}
