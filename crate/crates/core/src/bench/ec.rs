//! Entity-collapse prompt vocabulary and the seeded prompt generator.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::canonical;
use crate::caption::{render_ec_text, EC_TEMPLATE_VERSION};

const JOBS: &str = include_str!("../../assets/ec_vocab/jobs.txt");
const ATTRIBUTES: &str = include_str!("../../assets/ec_vocab/attributes.txt");
const INTERACTIONS: &str = include_str!("../../assets/ec_vocab/interactions.txt");

pub const EC_ENTITY_COUNT: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobNoun {
    pub singular: String,
    pub plural: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcVocab {
    pub jobs: Vec<JobNoun>,
    pub attributes: Vec<String>,
    pub interactions: Vec<String>,
}

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn parse_jobs(text: &str) -> Result<Vec<JobNoun>, BenchError> {
    lines(text)
        .map(|l| {
            let mut parts = l.split('\t').map(str::trim).filter(|p| !p.is_empty());
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(p), None) => Ok(JobNoun {
                    singular: s.to_string(),
                    plural: p.to_string(),
                }),
                (Some(s), None, None) => Ok(JobNoun {
                    singular: s.to_string(),
                    plural: format!("{s}s"),
                }),
                _ => Err(BenchError::Vocab(format!("bad job line {l:?}"))),
            }
        })
        .collect()
}

fn check_list<'a>(
    name: &str,
    items: impl IntoIterator<Item = &'a str>,
    needed: usize,
) -> Result<(), BenchError> {
    let mut seen = BTreeSet::new();
    for item in items {
        // Separators of the rendered template must not appear inside a phrase.
        if item.contains(['.', ',', '=', '\t']) || item.contains(" and ") {
            return Err(BenchError::Vocab(format!(
                "{name} entry {item:?} contains a separator"
            )));
        }
        if !seen.insert(item.to_ascii_lowercase()) {
            return Err(BenchError::Vocab(format!(
                "duplicate {name} entry {item:?}"
            )));
        }
    }
    if seen.len() < needed {
        return Err(BenchError::VocabTooSmall {
            list: name.to_string(),
            needed,
            have: seen.len(),
        });
    }
    Ok(())
}

impl EcVocab {
    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(JOBS, ATTRIBUTES, INTERACTIONS).expect("shipped vocabulary is valid")
    }

    pub fn parse(jobs: &str, attributes: &str, interactions: &str) -> Result<Self, BenchError> {
        let vocab = Self {
            jobs: parse_jobs(jobs)?,
            attributes: lines(attributes).map(str::to_string).collect(),
            interactions: lines(interactions).map(str::to_string).collect(),
        };
        vocab.validate()?;
        Ok(vocab)
    }

    /// Reads `jobs.txt`, `attributes.txt` and `interactions.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, BenchError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
        };
        Self::parse(
            &read("jobs.txt")?,
            &read("attributes.txt")?,
            &read("interactions.txt")?,
        )
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        check_list("jobs", self.jobs.iter().map(|j| j.singular.as_str()), 1)?;
        check_list("attributes", self.attributes.iter().map(String::as_str), 4)?;
        check_list(
            "interactions",
            self.interactions.iter().map(String::as_str),
            2,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcPrompt {
    pub id: u32,
    pub job: String,
    pub attributes: [String; 4],
    pub interactions: [String; 2],
    pub text: String,
    pub expected_entity_count: u32,
    pub template: u32,
}

fn pick<const N: usize>(rng: &mut impl Rng, items: &[String]) -> [String; N] {
    let idx = sample(rng, items.len(), N);
    std::array::from_fn(|i| items[idx.index(i)].clone())
}

/// Deterministic in (vocab, count, seed).
pub fn generate_ec_prompts(
    vocab: &EcVocab,
    count: usize,
    seed: u64,
) -> Result<Vec<EcPrompt>, BenchError> {
    vocab.validate()?;
    if count == 0 {
        return Err(BenchError::PreconditionViolated(
            "count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((1..=count as u32)
        .map(|id| {
            let job = &vocab.jobs[rng.gen_range(0..vocab.jobs.len())];
            let attributes: [String; 4] = pick(&mut rng, &vocab.attributes);
            let interactions: [String; 2] = pick(&mut rng, &vocab.interactions);
            EcPrompt {
                id,
                job: job.singular.clone(),
                text: render_ec_text(&job.plural, &attributes, &interactions),
                attributes,
                interactions,
                expected_entity_count: EC_ENTITY_COUNT,
                template: EC_TEMPLATE_VERSION,
            }
        })
        .collect())
}

/// One compact canonical record per line.
pub fn to_jsonl(prompts: &[EcPrompt]) -> String {
    prompts
        .iter()
        .map(|p| canonical::to_line(p).expect("prompts serialize") + "\n")
        .collect()
}

pub fn from_jsonl(text: &str) -> Result<Vec<EcPrompt>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            canonical::from_str(l).map_err(|e| BenchError::Schema(format!("line {}: {e}", n + 1)))
        })
        .collect()
}
