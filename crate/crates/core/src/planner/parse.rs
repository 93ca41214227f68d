use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::Deserialize;

use super::{ChainPlan, PlanStep, PlannerError};

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedPlan {
    pub plan: ChainPlan,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct PlanBlock {
    #[serde(default)]
    original_prompt: String,
    steps: Vec<PlanStep>,
    #[serde(default)]
    planner_model: Option<String>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
}

static FENCE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*[ \t]*\r?\n(.*?)```").unwrap());

fn try_block(text: &str) -> Option<ChainPlan> {
    let block: PlanBlock = serde_json::from_str(text.trim()).ok()?;
    if block.steps.is_empty() {
        return None;
    }
    Some(ChainPlan {
        original_prompt: block.original_prompt,
        steps: block.steps,
        planner_model: block.planner_model.unwrap_or_default(),
        created_at: block.created_at.unwrap_or_else(Utc::now),
    })
}

/// Extracts the first plan block from an LLM reply. Fenced blocks are tried
/// in order; a reply with no fences may itself be the plan document.
pub fn parse_planner_output(text: &str) -> Result<ParsedPlan, PlannerError> {
    if text.trim().is_empty() {
        return Err(PlannerError::PlannerOutput("reply is empty".into()));
    }
    let plans: Vec<ChainPlan> = FENCE_RE
        .captures_iter(text)
        .filter_map(|c| try_block(&c[1]))
        .collect();
    let mut warnings = Vec::new();
    if plans.len() > 1 {
        warnings.push(format!(
            "reply contained {} plan blocks; using the first",
            plans.len()
        ));
    }
    let plan = match plans.into_iter().next() {
        Some(p) => p,
        None => {
            let (start, end) = (text.find('{'), text.rfind('}'));
            match (start, end) {
                (Some(s), Some(e)) if s < e => try_block(&text[s..=e]),
                _ => None,
            }
            .ok_or_else(|| PlannerError::PlannerOutput("no plan block found in reply".into()))?
        }
    };
    Ok(ParsedPlan { plan, warnings })
}
