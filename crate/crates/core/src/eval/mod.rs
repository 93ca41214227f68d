//! Monitorability metrics over executed runs: per-step readability
//! (before/after QA) and causal relevance of a perturbed step.

mod causal;
mod readability;

use serde::{Deserialize, Serialize};

use crate::artifact::ImageArtifact;
use crate::backends::grammar::{self, Action, AttrKey};
use crate::backends::question::{attribute_question, feature_question, Slot};
use crate::backends::BackendError;
use crate::executor::{ChainRun, ExecError, StepStatus};
use crate::planner::ChainPlan;
use crate::runstore::{RunStore, StoreError};

pub use causal::{
    choose_perturbation, eval_causal, make_perturbation, merge_causal_reports, run_causal_case,
    CausalCase, CausalReport, PerturbationField, PerturbationSpec, DEFAULT_CAUSAL_CASES,
};
pub use readability::{
    build_probes, eval_readability, KindAggregate, ProbeResult, ReadabilityProbe, ReadabilityReport,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no artifact for step {0}; the step has not succeeded")]
    MissingArtifact(u32),
    #[error("step {step} carries no {field} value {value:?}")]
    FieldAbsent {
        step: u32,
        field: String,
        value: String,
    },
    #[error("gray is reserved for placeholders and cannot be a perturbation target")]
    GrayForbidden,
    #[error("runs do not match the perturbation: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Color,
    Shape,
    Texture,
    /// Free-form descriptor, as used by entity-collapse prompts.
    Feature,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 4] = [
        AttributeKind::Color,
        AttributeKind::Shape,
        AttributeKind::Texture,
        AttributeKind::Feature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Color => "color",
            AttributeKind::Shape => "shape",
            AttributeKind::Texture => "texture",
            AttributeKind::Feature => "feature",
        }
    }

    fn from_key(key: AttrKey) -> Option<Self> {
        match key {
            AttrKey::Color => Some(AttributeKind::Color),
            AttrKey::Shape => Some(AttributeKind::Shape),
            AttrKey::Texture => Some(AttributeKind::Texture),
            AttrKey::Feature => Some(AttributeKind::Feature),
        }
    }

    /// QA question checking that `class` shows this attribute value.
    fn question(self, class: &str, value: &str) -> String {
        let slot = match self {
            AttributeKind::Color => Slot::Color,
            AttributeKind::Shape => Slot::Shape,
            AttributeKind::Texture => Slot::Texture,
            AttributeKind::Feature => return feature_question(class, value),
        };
        attribute_question(class, &[(slot, value.to_string())])
    }
}

/// Entity class by id, taken from `(class)` annotations and layout actions of
/// the plan's steps.
fn entity_class(plan: &ChainPlan, id: &str) -> Option<String> {
    plan.steps
        .iter()
        .filter_map(|s| grammar::parse_actions(&s.step_action).ok())
        .flatten()
        .find_map(|a| match a {
            Action::AddPlaceholder { id: i, class, .. } if i == id => Some(class),
            Action::Detail {
                id: i,
                class: Some(class),
                ..
            } if i == id => Some(class),
            Action::Interact {
                id: i,
                class: Some(class),
                ..
            } if i == id => Some(class),
            _ => None,
        })
}

/// Artifact of the live succeeded record for step `index`.
fn step_image(run: &ChainRun, store: &RunStore, index: u32) -> Result<ImageArtifact, EvalError> {
    let reference = run
        .active_step(index)
        .filter(|r| r.status == StepStatus::Succeeded)
        .and_then(|r| r.image.as_ref())
        .ok_or(EvalError::MissingArtifact(index))?;
    Ok(store.get_artifact(reference)?)
}

fn final_image(run: &ChainRun, store: &RunStore) -> Result<ImageArtifact, EvalError> {
    if run.completed_prefix() < run.plan.len() {
        return Err(EvalError::MissingArtifact(run.plan.len()));
    }
    step_image(run, store, run.plan.len())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
