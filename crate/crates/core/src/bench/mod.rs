//! Benchmarks: the entity-collapse prompt generator and rubric, and generic
//! QA-template scoring.

pub mod ec;
pub mod qa;
mod runner;
pub mod score;

use serde::Serialize;

use crate::backends::BackendError;
use crate::executor::ExecError;
use crate::planner::PlannerError;
use crate::runstore::StoreError;

pub use ec::{from_jsonl, generate_ec_prompts, to_jsonl, EcPrompt, EcVocab, JobNoun};
pub use qa::{build_qa, parse_records, score_qa, QaBenchmark, QaItem, QaRecord, QaScore};
pub use runner::{
    run_ec_benchmark, run_qa_benchmark, table_csv, BenchContext, EcMeans, EcRow, EcScorecard,
    Pipeline, QaRow, QaScorecard,
};
pub use score::{max_bipartite_matching, score_ec, EcScore};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("vocabulary list {list} needs {needed} distinct entries, has {have}")]
    VocabTooSmall {
        list: String,
        needed: usize,
        have: usize,
    },
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("pipeline failed: {0}")]
    Pipeline(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub(crate) fn csv_string<R: Serialize>(rows: impl IntoIterator<Item = R>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("rows serialize to csv");
    }
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}
