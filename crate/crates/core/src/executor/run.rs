use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactId, ArtifactRef};
use crate::planner::{ChainPlan, PlanStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Succeeded,
    Failed,
    Superseded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Paused,
    Completed,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Paused => "paused",
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        [
            RunStatus::Running,
            RunStatus::Paused,
            RunStatus::Completed,
            RunStatus::Failed,
        ]
        .into_iter()
        .find(|s| s.as_str() == text)
    }

    /// Interventions are accepted only while nothing is executing.
    pub fn accepts_interventions(self) -> bool {
        matches!(self, RunStatus::Paused | RunStatus::Failed)
    }
}

/// One execution attempt of one plan step. Records are append-only: a rerun
/// adds new records and marks the old ones superseded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u32,
    pub prompt_used: PlanStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ArtifactRef>,
    /// Artifact this step edited; absent for the generating first step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ArtifactId>,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    EditStep,
    InsertStep,
    DeleteStep,
    RerunFrom,
}

impl InterventionKind {
    pub fn parse(text: &str) -> Option<Self> {
        match text.replace('-', "_").as_str() {
            "edit_step" | "edit" => Some(Self::EditStep),
            "insert_step" | "insert" => Some(Self::InsertStep),
            "delete_step" | "delete" => Some(Self::DeleteStep),
            "rerun_from" | "rerun" => Some(Self::RerunFrom),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    #[default]
    Human,
    AutoMonitor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub kind: InterventionKind,
    pub at_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<PlanStep>,
    #[serde(default)]
    pub author: Author,
    /// Overwritten with the actual time when the intervention is applied.
    #[serde(default = "Utc::now")]
    pub applied_at: DateTime<Utc>,
}

impl Intervention {
    pub fn new(kind: InterventionKind, at_index: u32, payload: Option<PlanStep>) -> Self {
        Self {
            kind,
            at_index,
            payload,
            author: Author::Human,
            applied_at: Utc::now(),
        }
    }
}

/// A finished step transition, as delivered to observers. `seq` is the
/// ordinal of the underlying record and never repeats within a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub run_id: String,
    pub seq: u64,
    pub step_index: u32,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_id: Option<ArtifactId>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRun {
    pub run_id: String,
    /// Current plan, after all interventions.
    pub plan: ChainPlan,
    /// Plan the run was started with; `plan` is this plus the interventions.
    pub original_plan: ChainPlan,
    pub steps: Vec<StepRecord>,
    pub interventions: Vec<Intervention>,
    pub events: Vec<StepEvent>,
    pub status: RunStatus,
    pub backend_profile: String,
    /// Pause after every step instead of running freely.
    pub step_mode: bool,
    pub created_at: DateTime<Utc>,
}

impl ChainRun {
    /// Records that are not superseded, in execution order.
    pub fn active_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps
            .iter()
            .filter(|r| r.status != StepStatus::Superseded)
    }

    /// The live record for plan step `index`, if it has been attempted.
    pub fn active_step(&self, index: u32) -> Option<&StepRecord> {
        self.active_steps().find(|r| r.index == index)
    }

    /// Number of leading plan steps with a live succeeded record.
    pub fn completed_prefix(&self) -> u32 {
        let mut k = 0;
        while self
            .active_step(k + 1)
            .is_some_and(|r| r.status == StepStatus::Succeeded)
        {
            k += 1;
        }
        k
    }

    /// Index of the next step `advance` would execute.
    pub fn cursor(&self) -> u32 {
        self.completed_prefix() + 1
    }

    pub fn failed_step(&self) -> Option<&StepRecord> {
        self.active_steps().find(|r| r.status == StepStatus::Failed)
    }

    /// Artifact of the latest succeeded live step.
    pub fn latest_image(&self) -> Option<&ArtifactRef> {
        let k = self.completed_prefix();
        self.active_step(k).and_then(|r| r.image.as_ref())
    }

    /// Final artifact, present once every plan step has succeeded.
    pub fn final_image(&self) -> Option<&ArtifactRef> {
        (self.completed_prefix() == self.plan.len())
            .then(|| self.latest_image())
            .flatten()
    }

    /// Every artifact id the manifest mentions, superseded records included.
    pub fn referenced_artifacts(&self) -> Vec<&ArtifactId> {
        let mut ids: Vec<&ArtifactId> = self
            .steps
            .iter()
            .flat_map(|r| {
                r.image
                    .as_ref()
                    .map(|i| &i.id)
                    .into_iter()
                    .chain(r.parent.as_ref())
            })
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}
