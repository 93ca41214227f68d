use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{entity_class, final_image, mean, step_image, AttributeKind, EvalError};
use crate::backends::grammar::{self, Action, AttrKey};
use crate::backends::scene::PLACEHOLDER_COLOR;
use crate::backends::VisionModel;
use crate::bench::csv_string;
use crate::caption::perturbation_colors;
use crate::executor::{ChainRun, Executor};
use crate::planner::{ChainPlan, StepKind};
use crate::runstore::RunStore;

pub const DEFAULT_CAUSAL_CASES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationField {
    Color,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub step_index: u32,
    pub field: PerturbationField,
    pub original_value: String,
    pub perturbed_value: String,
}

fn is_gray(value: &str) -> bool {
    let v = value.trim().to_ascii_lowercase();
    v == PLACEHOLDER_COLOR || v == "grey"
}

/// Target entity id and class of the Detail action carrying the perturbed color's
/// original value, plus the step's parsed actions.
fn locate(
    plan: &ChainPlan,
    spec: &PerturbationSpec,
) -> Result<(Vec<Action>, usize, String, String), EvalError> {
    let absent = || EvalError::FieldAbsent {
        step: spec.step_index,
        field: "color".into(),
        value: spec.original_value.clone(),
    };
    let step = plan.step(spec.step_index).ok_or_else(absent)?;
    if step.kind != StepKind::EntityDetail {
        return Err(absent());
    }
    let actions = grammar::parse_actions(&step.step_action).map_err(|_| absent())?;
    let position = actions
        .iter()
        .position(|a| {
            matches!(a, Action::Detail { attributes, .. }
                if attributes.iter().any(|(k, v)| *k == AttrKey::Color && *v == spec.original_value))
        })
        .ok_or_else(absent)?;
    let Action::Detail { id, class, .. } = &actions[position] else {
        unreachable!("position matched a Detail action");
    };
    let class = class
        .clone()
        .or_else(|| entity_class(plan, id))
        .ok_or_else(absent)?;
    let id = id.clone();
    Ok((actions, position, id, class))
}

/// Copy of `plan` whose one step has the original color swapped for the
/// perturbed one. Every other step is left untouched.
pub fn make_perturbation(
    plan: &ChainPlan,
    spec: &PerturbationSpec,
) -> Result<ChainPlan, EvalError> {
    if is_gray(&spec.perturbed_value) {
        return Err(EvalError::GrayForbidden);
    }
    if spec.perturbed_value == spec.original_value {
        return Err(EvalError::SpecMismatch(
            "perturbed value equals the original".into(),
        ));
    }
    let (mut actions, position, _, _) = locate(plan, spec)?;
    if let Action::Detail { attributes, .. } = &mut actions[position] {
        for (key, value) in attributes.iter_mut() {
            if *key == AttrKey::Color && *value == spec.original_value {
                *value = spec.perturbed_value.clone();
            }
        }
    }
    let mut out = plan.clone();
    out.steps[spec.step_index as usize - 1].step_action = grammar::render_actions(&actions);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalCase {
    pub case_id: String,
    pub spec: PerturbationSpec,
    pub question: String,
    /// Perturbed attribute asked of the unperturbed final image.
    pub u_final: f64,
    /// Asked of the perturbed chain at the perturbed step.
    pub at_step: f64,
    /// Asked of the perturbed chain's final image.
    pub p_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalReport {
    pub score_unperturbed_final: f64,
    pub score_at_step: f64,
    pub score_perturbed_final: f64,
    pub cases: Vec<CausalCase>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    case_id: &'a str,
    u_final: f64,
    at_step: f64,
    p_final: f64,
}

impl CausalReport {
    pub fn from_cases(cases: Vec<CausalCase>) -> Self {
        Self {
            score_unperturbed_final: mean(cases.iter().map(|c| c.u_final)),
            score_at_step: mean(cases.iter().map(|c| c.at_step)),
            score_perturbed_final: mean(cases.iter().map(|c| c.p_final)),
            cases,
        }
    }

    pub fn csv(&self) -> String {
        csv_string(self.cases.iter().map(|c| CsvRow {
            case_id: &c.case_id,
            u_final: c.u_final,
            at_step: c.at_step,
            p_final: c.p_final,
        }))
    }
}

pub fn merge_causal_reports(reports: impl IntoIterator<Item = CausalReport>) -> CausalReport {
    CausalReport::from_cases(reports.into_iter().flat_map(|r| r.cases).collect())
}

/// Scores one perturbation: whether the perturbed color shows up without the
/// perturbation, at the perturbed step, and at the end of the perturbed chain.
pub fn eval_causal(
    orig_run: &ChainRun,
    pert_run: &ChainRun,
    spec: &PerturbationSpec,
    vision: &dyn VisionModel,
    store: &RunStore,
) -> Result<CausalReport, EvalError> {
    let t = spec.step_index;
    let expected = make_perturbation(&orig_run.plan, spec)?;
    let (orig_step, pert_step) = match (orig_run.plan.step(t), pert_run.plan.step(t)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(EvalError::SpecMismatch(format!(
                "step {t} missing from a run"
            )))
        }
    };
    if orig_step == pert_step || expected.step(t) != Some(pert_step) {
        return Err(EvalError::SpecMismatch(format!(
            "step {t} of the perturbed run is not the requested perturbation"
        )));
    }
    let (_, _, _, class) = locate(&orig_run.plan, spec)?;
    let question = AttributeKind::Color.question(&class, &spec.perturbed_value);

    let ask = |image| -> Result<f64, EvalError> {
        Ok(if vision.answer(&image, &question)?.is_yes() {
            1.0
        } else {
            0.0
        })
    };
    let case = CausalCase {
        case_id: format!("{}-s{}", orig_run.run_id, t),
        u_final: ask(final_image(orig_run, store)?)?,
        at_step: ask(step_image(pert_run, store, t)?)?,
        p_final: ask(final_image(pert_run, store)?)?,
        spec: spec.clone(),
        question: question.clone(),
    };
    Ok(CausalReport::from_cases(vec![case]))
}

/// Seeded choice of a color-bearing detail step and a new color for it,
/// drawn uniformly from the palette minus the original and gray.
pub fn choose_perturbation(plan: &ChainPlan, rng: &mut impl Rng) -> Option<PerturbationSpec> {
    let candidates: Vec<(u32, String)> = plan
        .steps
        .iter()
        .filter(|s| s.kind == StepKind::EntityDetail)
        .filter_map(|s| {
            let actions = grammar::parse_actions(&s.step_action).ok()?;
            actions.into_iter().find_map(|a| match a {
                Action::Detail { attributes, .. } => attributes
                    .into_iter()
                    .find(|(k, _)| *k == AttrKey::Color)
                    .map(|(_, v)| (s.index, v)),
                _ => None,
            })
        })
        .collect();
    let (step_index, original_value) = candidates.into_iter().choose(rng)?;
    let perturbed_value = perturbation_colors()
        .filter(|c| *c != original_value)
        .choose(rng)?
        .to_string();
    Some(PerturbationSpec {
        step_index,
        field: PerturbationField::Color,
        original_value,
        perturbed_value,
    })
}

/// Executes the perturbed plan as a new run and scores it against `orig_run`.
pub fn run_causal_case(
    exec: &Executor,
    orig_run: &ChainRun,
    spec: &PerturbationSpec,
    vision: &dyn VisionModel,
) -> Result<(ChainRun, CausalReport), EvalError> {
    let plan = make_perturbation(&orig_run.plan, spec)?;
    let mut pert = exec.start_run(plan, &orig_run.backend_profile, false)?;
    exec.run_to_completion(&mut pert)?;
    let report = eval_causal(orig_run, &pert, spec, vision, exec.store())?;
    Ok((pert, report))
}
