use super::{ExecError, Intervention, InterventionKind};
use crate::planner::{validate_plan, ChainPlan, PlanStep};

fn check_range(at: u32, upper: u32) -> Result<(), ExecError> {
    if at == 0 || at > upper {
        return Err(ExecError::IndexOutOfRange { at, upper });
    }
    Ok(())
}

fn payload(iv: &Intervention, plan: &ChainPlan) -> Result<PlanStep, ExecError> {
    let mut step = iv.payload.clone().ok_or_else(|| {
        ExecError::InvalidIntervention(format!("{:?} needs a payload step", iv.kind))
    })?;
    if step.final_goal.is_empty() {
        step.final_goal = plan.original_prompt.clone();
    }
    Ok(step)
}

/// Plan that results from one intervention. Rerun requests leave the plan
/// unchanged; plan-changing interventions must keep the plan valid.
pub fn apply_to_plan(plan: &ChainPlan, iv: &Intervention) -> Result<ChainPlan, ExecError> {
    let n = plan.len();
    let mut next = plan.clone();
    let slot = iv.at_index.saturating_sub(1) as usize;
    match iv.kind {
        InterventionKind::EditStep => {
            check_range(iv.at_index, n)?;
            next.steps[slot] = payload(iv, plan)?;
        }
        InterventionKind::InsertStep => {
            check_range(iv.at_index, n + 1)?;
            next.steps.insert(slot, payload(iv, plan)?);
        }
        InterventionKind::DeleteStep => {
            check_range(iv.at_index, n)?;
            next.steps.remove(slot);
        }
        InterventionKind::RerunFrom => {
            check_range(iv.at_index, n)?;
            return Ok(next);
        }
    }
    next.renumber();
    let violations = validate_plan(&next);
    if !violations.is_empty() {
        return Err(ExecError::PlanInvalid(violations));
    }
    Ok(next)
}

/// Rebuilds a plan from its original version and the intervention log.
pub fn replay_interventions(
    original: &ChainPlan,
    interventions: &[Intervention],
) -> Result<ChainPlan, ExecError> {
    interventions
        .iter()
        .try_fold(original.clone(), |plan, iv| apply_to_plan(&plan, iv))
}
