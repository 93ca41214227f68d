use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{entity_class, mean, step_image, AttributeKind, EvalError};
use crate::artifact::ImageArtifact;
use crate::backends::grammar::{self, Action};
use crate::backends::VisionModel;
use crate::bench::csv_string;
use crate::executor::ChainRun;
use crate::planner::{ChainPlan, StepKind};
use crate::runstore::RunStore;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadabilityProbe {
    pub probe_id: String,
    pub step_index: u32,
    pub attribute_kind: AttributeKind,
    pub attribute_value: String,
    pub target_entity: String,
    pub entity_class: String,
    pub question: String,
}

/// One probe per attribute set by an entity-detail step.
pub fn build_probes(plan: &ChainPlan) -> Vec<ReadabilityProbe> {
    let mut probes = Vec::new();
    for step in plan
        .steps
        .iter()
        .filter(|s| s.kind == StepKind::EntityDetail)
    {
        let Ok(actions) = grammar::parse_actions(&step.step_action) else {
            continue;
        };
        for action in actions {
            let Action::Detail {
                id,
                class,
                attributes,
            } = action
            else {
                continue;
            };
            let Some(class) = class.or_else(|| entity_class(plan, &id)) else {
                continue;
            };
            for (key, value) in attributes {
                let Some(kind) = AttributeKind::from_key(key) else {
                    continue;
                };
                probes.push(ReadabilityProbe {
                    probe_id: format!("s{}-{}-{}", step.index, id, kind.as_str()),
                    step_index: step.index,
                    attribute_kind: kind,
                    question: kind.question(&class, &value),
                    attribute_value: value,
                    target_entity: id.clone(),
                    entity_class: class.clone(),
                });
            }
        }
    }
    probes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe: ReadabilityProbe,
    pub before_score: f64,
    pub after_score: f64,
    /// The before image was the blank stand-in for the missing I_0.
    pub before_is_blank: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindAggregate {
    pub probes: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityReport {
    pub run_id: String,
    pub probes: Vec<ProbeResult>,
    pub aggregates: BTreeMap<AttributeKind, KindAggregate>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    probe_id: &'a str,
    attribute_kind: &'a str,
    before: f64,
    after: f64,
}

impl ReadabilityReport {
    pub fn csv(&self) -> String {
        csv_string(self.probes.iter().map(|p| CsvRow {
            probe_id: &p.probe.probe_id,
            attribute_kind: p.probe.attribute_kind.as_str(),
            before: p.before_score,
            after: p.after_score,
        }))
    }
}

fn score(
    vision: &dyn VisionModel,
    image: &ImageArtifact,
    question: &str,
) -> Result<f64, EvalError> {
    Ok(if vision.answer(image, question)?.is_yes() {
        1.0
    } else {
        0.0
    })
}

/// Asks each probe of I_{t-1} and of I_t. Probes are evaluated in parallel;
/// the report keeps probe order.
pub fn eval_readability(
    run: &ChainRun,
    probes: &[ReadabilityProbe],
    vision: &dyn VisionModel,
    store: &RunStore,
) -> Result<ReadabilityReport, EvalError> {
    let probes_out = probes
        .par_iter()
        .map(|probe| {
            let t = probe.step_index;
            let after = step_image(run, store, t)?;
            let before_is_blank = t == 1;
            let before = if before_is_blank {
                ImageArtifact::blank()
            } else {
                step_image(run, store, t - 1)?
            };
            Ok(ProbeResult {
                before_score: score(vision, &before, &probe.question)?,
                after_score: score(vision, &after, &probe.question)?,
                before_is_blank,
                probe: probe.clone(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut aggregates = BTreeMap::new();
    for kind in AttributeKind::ALL {
        let of_kind: Vec<&ProbeResult> = probes_out
            .iter()
            .filter(|p| p.probe.attribute_kind == kind)
            .collect();
        if of_kind.is_empty() {
            continue;
        }
        aggregates.insert(
            kind,
            KindAggregate {
                probes: of_kind.len(),
                before: mean(of_kind.iter().map(|p| p.before_score)),
                after: mean(of_kind.iter().map(|p| p.after_score)),
            },
        );
    }
    Ok(ReadabilityReport {
        run_id: run.run_id.clone(),
        probes: probes_out,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::template::mock_plan;

    #[test]
    fn detail_step_yields_presence_and_color_probe() {
        let plan = mock_plan("A red apple and a blue bowl on a table").unwrap();
        let probes = build_probes(&plan);
        assert_eq!(probes.len(), 2);
        assert_eq!(
            probes[0].question,
            "Is the apple present? Is it red in color?"
        );
        assert_eq!(probes[0].step_index, 2);
        assert_eq!(probes[1].target_entity, "e2");
    }

    #[test]
    fn entity_collapse_plan_probes_every_entity() {
        let text = crate::caption::render_ec_text(
            "airmen",
            &[
                "smiling".to_string(),
                "holding a bottle".to_string(),
                "sporting white hair".to_string(),
                "wearing glasses".to_string(),
            ],
            &["talking to".to_string(), "glaring at".to_string()],
        );
        let probes = build_probes(&mock_plan(&text).unwrap());
        assert!(probes.len() >= 4);
        assert!(probes
            .iter()
            .any(|p| p.question == "Is the airman present? Is it sporting white hair?"));
    }

    #[test]
    fn layout_only_plan_has_no_probes() {
        let mut plan = mock_plan("a red apple").unwrap();
        plan.steps.truncate(1);
        assert!(build_probes(&plan).is_empty());
    }

    #[test]
    fn class_falls_back_to_layout() {
        let mut plan = mock_plan("a red apple").unwrap();
        plan.steps[1].step_action = "Detail e1: texture=glossy".into();
        let probes = build_probes(&plan);
        assert_eq!(probes[0].entity_class, "apple");
        assert_eq!(probes[0].attribute_kind, AttributeKind::Texture);
    }
}
