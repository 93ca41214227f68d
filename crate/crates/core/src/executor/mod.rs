//! Stepwise chain execution: I_1 = generate(P_1), I_t = edit(I_{t-1}, P_t),
//! with a checkpoint after every step and human interventions between steps.

mod intervention;
mod run;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::Utc;

use crate::backends::{BackendError, Backends};
use crate::planner::{validate_plan, ChainPlan, PlanViolation};
use crate::runstore::{RunStore, StoreError};

pub use intervention::{apply_to_plan, replay_interventions};
pub use run::{
    Author, ChainRun, Intervention, InterventionKind, RunStatus, StepEvent, StepRecord, StepStatus,
};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("plan is invalid ({} violations)", .0.len())]
    PlanInvalid(Vec<PlanViolation>),
    #[error("no more steps to execute")]
    NoMoreSteps,
    #[error("step {0} failed; retry it or intervene before advancing")]
    PriorStepFailed(u32),
    #[error("index {at} out of range 1..={upper}")]
    IndexOutOfRange { at: u32, upper: u32 },
    #[error("run is {}; pause it first", .0.as_str())]
    RunNotPaused(RunStatus),
    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),
    #[error("artifact for step {0} is missing")]
    MissingArtifact(u32),
    #[error("step {index} failed: {source}")]
    StepFailed { index: u32, source: BackendError },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Observer = Arc<dyn Fn(&StepEvent) + Send + Sync>;

/// Drives runs against one set of backends, checkpointing into a store.
/// A run must only be driven by one executor at a time.
#[derive(Clone)]
pub struct Executor {
    backends: Backends,
    store: RunStore,
    observer: Option<Observer>,
    stop: Option<Arc<AtomicBool>>,
}

impl Executor {
    pub fn new(backends: Backends, store: RunStore) -> Self {
        Self {
            backends,
            store,
            observer: None,
            stop: None,
        }
    }

    /// Called after every finished step, after the checkpoint is written.
    pub fn with_observer(mut self, observer: Observer) -> Self {
        self.observer = Some(observer);
        self
    }

    /// Checked between steps; when set, `run_to_completion` pauses the run.
    pub fn with_stop_flag(mut self, flag: Arc<AtomicBool>) -> Self {
        self.stop = Some(flag);
        self
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    /// Validates the plan and persists a fresh run without executing anything.
    pub fn create_run(
        &self,
        plan: ChainPlan,
        backend_profile: &str,
        step_mode: bool,
    ) -> Result<ChainRun, ExecError> {
        let violations = validate_plan(&plan);
        if !violations.is_empty() {
            return Err(ExecError::PlanInvalid(violations));
        }
        let run = ChainRun {
            run_id: uuid::Uuid::new_v4().to_string(),
            original_plan: plan.clone(),
            plan,
            steps: Vec::new(),
            interventions: Vec::new(),
            events: Vec::new(),
            status: RunStatus::Running,
            backend_profile: backend_profile.to_string(),
            step_mode,
            created_at: Utc::now(),
        };
        self.store.save_run(&run)?;
        Ok(run)
    }

    /// Creates a run and executes its first step. A failing first step is
    /// recorded in the returned run rather than reported as an error.
    pub fn start_run(
        &self,
        plan: ChainPlan,
        backend_profile: &str,
        step_mode: bool,
    ) -> Result<ChainRun, ExecError> {
        let mut run = self.create_run(plan, backend_profile, step_mode)?;
        match self.advance(&mut run) {
            Ok(_) | Err(ExecError::StepFailed { .. }) => Ok(run),
            Err(e) => Err(e),
        }
    }

    /// Executes the next plan step and checkpoints the result.
    pub fn advance(&self, run: &mut ChainRun) -> Result<StepRecord, ExecError> {
        if let Some(failed) = run.failed_step() {
            return Err(ExecError::PriorStepFailed(failed.index));
        }
        let t = run.cursor();
        let Some(step) = run.plan.step(t).cloned() else {
            return Err(ExecError::NoMoreSteps);
        };
        let parent = if t == 1 {
            None
        } else {
            let reference = run
                .active_step(t - 1)
                .and_then(|r| r.image.clone())
                .ok_or(ExecError::MissingArtifact(t - 1))?;
            Some(self.store.get_artifact(&reference)?)
        };

        let prompt = step.render_prompt();
        run.steps.push(StepRecord {
            index: t,
            prompt_used: step,
            image: None,
            parent: parent.as_ref().map(|p| p.id.clone()),
            started_at: Utc::now(),
            finished_at: None,
            status: StepStatus::Pending,
            error: None,
        });
        run.status = RunStatus::Running;
        self.store.save_run(run)?;

        tracing::debug!(run_id = %run.run_id, step = t, "executing step");
        let outcome = match &parent {
            None => self.backends.image.generate(&prompt),
            Some(image) => self.backends.image.edit(image, &prompt),
        };
        let outcome = match outcome {
            Ok(image) => Ok(self.store.put_artifact(&image)?),
            Err(e) => Err(e),
        };

        let last = run.plan.len();
        let record = run
            .steps
            .last_mut()
            .expect("pending record was just pushed");
        record.finished_at = Some(Utc::now());
        let failure = match outcome {
            Ok(reference) => {
                record.status = StepStatus::Succeeded;
                record.image = Some(reference);
                run.status = if t == last {
                    RunStatus::Completed
                } else if run.step_mode {
                    RunStatus::Paused
                } else {
                    RunStatus::Running
                };
                None
            }
            Err(e) => {
                tracing::warn!(run_id = %run.run_id, step = t, %e, "step failed");
                record.status = StepStatus::Failed;
                record.error = Some(e.to_string());
                run.status = if e.is_transient() {
                    RunStatus::Paused
                } else {
                    RunStatus::Failed
                };
                Some(e)
            }
        };
        let record = record.clone();
        let event = StepEvent {
            run_id: run.run_id.clone(),
            seq: run.steps.len() as u64 - 1,
            step_index: t,
            status: record.status,
            artifact_id: record.image.as_ref().map(|i| i.id.clone()),
            timestamp: record.finished_at.unwrap_or_else(Utc::now),
        };
        run.events.push(event.clone());
        self.store.save_run(run)?;
        if let Some(observer) = &self.observer {
            observer(&event);
        }
        match failure {
            None => Ok(record),
            Some(source) => Err(ExecError::StepFailed { index: t, source }),
        }
    }

    /// Advances until the plan is exhausted, a step fails, or the stop flag
    /// is raised. Step failures are reflected in the run status.
    pub fn run_to_completion(&self, run: &mut ChainRun) -> Result<(), ExecError> {
        loop {
            if run.failed_step().is_none() && run.cursor() > run.plan.len() {
                if run.status != RunStatus::Completed {
                    run.status = RunStatus::Completed;
                    self.store.save_run(run)?;
                }
                return Ok(());
            }
            if self.stop.as_ref().is_some_and(|f| f.load(Ordering::SeqCst)) {
                run.status = RunStatus::Paused;
                self.store.save_run(run)?;
                return Ok(());
            }
            match self.advance(run) {
                Ok(_) => {}
                Err(ExecError::StepFailed { .. }) => return Ok(()),
                Err(e) => return Err(e),
            }
        }
    }

    /// Continues a run: one step in step mode, otherwise to the end.
    pub fn resume(&self, run: &mut ChainRun) -> Result<(), ExecError> {
        if run.step_mode {
            match self.advance(run) {
                Ok(_) | Err(ExecError::StepFailed { .. }) => Ok(()),
                Err(e) => Err(e),
            }
        } else {
            self.run_to_completion(run)
        }
    }

    /// Retires the failed record so the step can be attempted again.
    pub fn retry_failed(&self, run: &mut ChainRun) -> Result<(), ExecError> {
        for record in run.steps.iter_mut() {
            if record.status == StepStatus::Failed {
                record.status = StepStatus::Superseded;
            }
        }
        run.status = RunStatus::Paused;
        self.store.save_run(run)?;
        Ok(())
    }

    pub fn pause(&self, run: &mut ChainRun) -> Result<(), ExecError> {
        pause(run);
        self.store.save_run(run)?;
        Ok(())
    }

    pub fn apply_intervention(
        &self,
        run: &mut ChainRun,
        iv: Intervention,
    ) -> Result<(), ExecError> {
        apply_intervention(run, iv)?;
        self.store.save_run(run)?;
        Ok(())
    }
}

/// Moves a run into the paused state. Completed runs are reopened so they
/// can be intervened on; failed runs stay failed.
pub fn pause(run: &mut ChainRun) {
    if matches!(run.status, RunStatus::Running | RunStatus::Completed) {
        run.status = RunStatus::Paused;
    }
}

/// Applies an intervention to a paused run. Any change at or before an
/// executed step retires that step and everything after it, so execution
/// resumes from the checkpoint just before `at_index`.
pub fn apply_intervention(run: &mut ChainRun, mut iv: Intervention) -> Result<(), ExecError> {
    if !run.status.accepts_interventions() {
        return Err(ExecError::RunNotPaused(run.status));
    }
    let plan = apply_to_plan(&run.plan, &iv)?;
    for record in run.steps.iter_mut() {
        if record.index >= iv.at_index && record.status != StepStatus::Superseded {
            record.status = StepStatus::Superseded;
        }
    }
    iv.applied_at = Utc::now();
    if let Some(step) = iv.payload.as_mut() {
        step.index = iv.at_index;
        if step.final_goal.is_empty() {
            step.final_goal = run.plan.original_prompt.clone();
        }
    }
    run.plan = plan;
    run.interventions.push(iv);
    run.status = if run.failed_step().is_some() {
        RunStatus::Failed
    } else {
        RunStatus::Paused
    };
    Ok(())
}

/// Repairs a run loaded after a crash: a step left pending was interrupted
/// and is marked failed so it can be retried.
pub fn recover(run: &mut ChainRun) -> bool {
    let mut changed = false;
    for record in run.steps.iter_mut() {
        if record.status == StepStatus::Pending {
            record.status = StepStatus::Failed;
            record.error = Some("interrupted before the step finished".into());
            changed = true;
        }
    }
    if run.status == RunStatus::Running {
        run.status = RunStatus::Paused;
        changed = true;
    }
    changed
}
