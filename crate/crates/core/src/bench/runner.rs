use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ec::EcPrompt;
use super::qa::{build_qa, score_qa, QaBenchmark, QaRecord, QaScore};
use super::score::{score_ec, EcScore};
use super::BenchError;
use crate::artifact::ImageArtifact;
use crate::backends::Backends;
use crate::executor::{Executor, RunStatus};
use crate::planner::{decompose_with, PlannerOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Coig,
    SinglePass,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Coig => "coig",
            Pipeline::SinglePass => "single_pass",
        }
    }
}

/// What a benchmark run needs: model clients, an executor that checkpoints
/// chain runs, and the profile name recorded in those runs.
#[derive(Clone)]
pub struct BenchContext {
    pub backends: Backends,
    pub executor: Executor,
    pub profile: String,
}

/// Final image for one prompt, plus the chain run id when one was created.
fn render(
    ctx: &BenchContext,
    text: &str,
    pipeline: Pipeline,
) -> Result<(ImageArtifact, Option<String>), BenchError> {
    match pipeline {
        Pipeline::SinglePass => Ok((ctx.backends.image.generate(text)?, None)),
        Pipeline::Coig => {
            let plan = decompose_with(ctx.backends.llm.as_ref(), text, &PlannerOptions::default())?;
            let mut run = ctx.executor.start_run(plan, &ctx.profile, false)?;
            ctx.executor.run_to_completion(&mut run)?;
            if run.status != RunStatus::Completed {
                let why = run
                    .failed_step()
                    .and_then(|r| r.error.clone())
                    .unwrap_or_else(|| "run did not complete".into());
                return Err(BenchError::Pipeline(format!(
                    "run {} {}: {why}",
                    run.run_id,
                    run.status.as_str()
                )));
            }
            let final_ref = run
                .final_image()
                .expect("completed runs have a final image");
            let image = ctx.executor.store().get_artifact(final_ref)?;
            Ok((image, Some(run.run_id)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcRow {
    pub prompt_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<EcScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EcMeans {
    pub entity_count: f64,
    pub attribute_binding: f64,
    pub interaction: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcScorecard {
    pub pipeline: Pipeline,
    pub prompts: usize,
    pub failed: usize,
    /// Over all prompts; a failed prompt scores zero on every component.
    pub means: EcMeans,
    pub rows: Vec<EcRow>,
}

pub fn run_ec_benchmark(
    prompts: &[EcPrompt],
    pipeline: Pipeline,
    ctx: &BenchContext,
) -> EcScorecard {
    let rows: Vec<EcRow> = prompts
        .par_iter()
        .map(|p| {
            let scored = render(ctx, &p.text, pipeline).and_then(|(image, run_id)| {
                let census = ctx.backends.vision.census(&image)?;
                Ok((score_ec(&census, p), run_id))
            });
            match scored {
                Ok((score, run_id)) => EcRow {
                    prompt_id: p.id,
                    run_id,
                    score: Some(score),
                    error: None,
                },
                Err(e) => {
                    tracing::warn!(prompt = p.id, %e, "prompt failed");
                    EcRow {
                        prompt_id: p.id,
                        run_id: None,
                        score: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&EcScore) -> u32| {
        rows.iter()
            .filter_map(|r| r.score.as_ref())
            .map(|s| f(s) as f64)
            .sum::<f64>()
            / n
    };
    EcScorecard {
        pipeline,
        prompts: rows.len(),
        failed: rows.iter().filter(|r| r.score.is_none()).count(),
        means: EcMeans {
            entity_count: sum(|s| s.entity_count),
            attribute_binding: sum(|s| s.attribute_binding),
            interaction: sum(|s| s.interaction),
            total: sum(|s| s.total),
        },
        rows,
    }
}

#[derive(Serialize)]
struct EcCsvRow<'a> {
    prompt_id: u32,
    entity_count: Option<u32>,
    attribute_binding: Option<u32>,
    interaction: Option<u32>,
    total: Option<u32>,
    error: Option<&'a str>,
}

impl EcScorecard {
    pub fn rows_csv(&self) -> String {
        super::csv_string(self.rows.iter().map(|r| EcCsvRow {
            prompt_id: r.prompt_id,
            entity_count: r.score.map(|s| s.entity_count),
            attribute_binding: r.score.map(|s| s.attribute_binding),
            interaction: r.score.map(|s| s.interaction),
            total: r.score.map(|s| s.total),
            error: r.error.as_deref(),
        }))
    }
}

/// Component means with one column per pipeline and one row per rubric line.
type MeanLine = (&'static str, fn(&EcMeans) -> f64);

pub fn table_csv(cards: &[EcScorecard]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string()];
    header.extend(cards.iter().map(|c| c.pipeline.as_str().to_string()));
    writer.write_record(&header).expect("in-memory csv");
    let lines: [MeanLine; 4] = [
        ("Entity Count (out of 1)", |m| m.entity_count),
        ("Attribute Binding (out of 4)", |m| m.attribute_binding),
        ("Interaction (out of 2)", |m| m.interaction),
        ("Total (out of 7)", |m| m.total),
    ];
    for (label, get) in lines {
        let mut row = vec![label.to_string()];
        row.extend(cards.iter().map(|c| format!("{:.3}", get(&c.means))));
        writer.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaRow {
    pub id: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<QaScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaScorecard {
    pub benchmark: QaBenchmark,
    pub pipeline: Pipeline,
    /// Mean per-record fraction by group key.
    pub groups: BTreeMap<String, f64>,
    pub overall: f64,
    pub failed: usize,
    pub rows: Vec<QaRow>,
}

pub fn run_qa_benchmark(
    records: &[QaRecord],
    benchmark: QaBenchmark,
    pipeline: Pipeline,
    ctx: &BenchContext,
) -> QaScorecard {
    let rows: Vec<QaRow> = records
        .par_iter()
        .map(|r| {
            let group = r.group.clone().unwrap_or_else(|| "all".into());
            let scored = build_qa(r, benchmark).and_then(|items| {
                let (image, _) = render(ctx, &r.prompt, pipeline)?;
                score_qa(&image, &items, ctx.backends.vision.as_ref())
            });
            match scored {
                Ok(score) => QaRow {
                    id: r.id.clone(),
                    group,
                    score: Some(score),
                    error: None,
                },
                Err(e) => QaRow {
                    id: r.id.clone(),
                    group,
                    score: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let fraction = |r: &QaRow| r.score.as_ref().map_or(0.0, |s| s.fraction);
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        grouped
            .entry(r.group.clone())
            .or_default()
            .push(fraction(r));
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    QaScorecard {
        benchmark,
        pipeline,
        groups: grouped.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
        overall: mean(&rows.iter().map(fraction).collect::<Vec<_>>()),
        failed: rows.iter().filter(|r| r.score.is_none()).count(),
        rows,
    }
}
