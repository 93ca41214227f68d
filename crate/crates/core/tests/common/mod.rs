//! Helpers shared by integration test targets: independent brute-force
//! oracles and random input generators.
#![allow(dead_code)]

pub mod http;

use coig_core::backends::census::{CensusEntry, CensusInteraction, CensusReport};
use coig_core::bench::EcPrompt;
use coig_core::caption::EC_INTERACTION_PAIRS;
use rand::seq::SliceRandom;
use rand::Rng;

/// Largest number of attributes that can be credited to pairwise distinct
/// entries, by trying every injective assignment.
pub fn brute_force_binding(census: &CensusReport, attributes: &[String]) -> u32 {
    fn go(i: usize, census: &CensusReport, attributes: &[String], used: &mut Vec<bool>) -> u32 {
        if i == attributes.len() {
            return 0;
        }
        let mut best = go(i + 1, census, attributes, used);
        for (e, entry) in census.entries.iter().enumerate() {
            if !used[e]
                && entry
                    .attributes
                    .iter()
                    .any(|a| a.eq_ignore_ascii_case(&attributes[i]))
            {
                used[e] = true;
                best = best.max(1 + go(i + 1, census, attributes, used));
                used[e] = false;
            }
        }
        best
    }
    go(
        0,
        census,
        attributes,
        &mut vec![false; census.entries.len()],
    )
}

/// Most prompted interactions realized under any injective mapping of the
/// four prompt slots onto census entries (unmapped slots allowed).
pub fn brute_force_interactions(census: &CensusReport, prompt: &EcPrompt) -> u32 {
    let n = census.entries.len();
    let realized = |from: usize, to: usize, verb: &str| {
        from != to
            && census.entries[from].interactions.iter().any(|i| {
                i.verb.eq_ignore_ascii_case(verb)
                    && i.target.as_deref() == Some(census.entries[to].census_id.as_str())
            })
    };
    let mut best = 0;
    let mut mapping = [None; 4];
    fn assign(
        slot: usize,
        n: usize,
        mapping: &mut [Option<usize>; 4],
        score: &dyn Fn(&[Option<usize>; 4]) -> u32,
        best: &mut u32,
    ) {
        if slot == 4 {
            *best = (*best).max(score(mapping));
            return;
        }
        mapping[slot] = None;
        assign(slot + 1, n, mapping, score, best);
        for e in 0..n {
            if mapping[..slot].contains(&Some(e)) {
                continue;
            }
            mapping[slot] = Some(e);
            assign(slot + 1, n, mapping, score, best);
        }
        mapping[slot] = None;
    }
    let score = |m: &[Option<usize>; 4]| -> u32 {
        EC_INTERACTION_PAIRS
            .iter()
            .zip(&prompt.interactions)
            .filter(|((a, b), verb)| match (m[*a], m[*b]) {
                (Some(x), Some(y)) => realized(x, y, verb),
                _ => false,
            })
            .count() as u32
    };
    assign(0, n, &mut mapping, &score, &mut best);
    best
}

pub fn entry(id: usize, class: &str, attributes: Vec<String>) -> CensusEntry {
    CensusEntry {
        census_id: format!("P{id}"),
        class: class.into(),
        attributes,
        interactions: Vec::new(),
    }
}

/// The census a faithful rendering of `prompt` would produce.
pub fn perfect_census(prompt: &EcPrompt) -> CensusReport {
    let mut entries: Vec<CensusEntry> = (0..4)
        .map(|i| entry(i + 1, &prompt.job, vec![prompt.attributes[i].clone()]))
        .collect();
    for ((a, b), verb) in EC_INTERACTION_PAIRS.iter().zip(&prompt.interactions) {
        entries[*a].interactions.push(CensusInteraction {
            verb: verb.clone(),
            target: Some(format!("P{}", b + 1)),
        });
    }
    CensusReport { entries }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Collapse {
    Random,
    Merge,
    Leak,
    Homogenize,
}

/// Random census built by one of the collapse constructions, or from
/// scratch. Ids stay unique and interaction targets stay valid.
pub fn random_census(prompt: &EcPrompt, kind: Collapse, rng: &mut impl Rng) -> CensusReport {
    let mut census = perfect_census(prompt);
    match kind {
        Collapse::Random => {
            let n = rng.gen_range(0..=6);
            let pool: Vec<String> = prompt
                .attributes
                .iter()
                .cloned()
                .chain(["bald".to_string(), "yawning".to_string()])
                .collect();
            census.entries = (0..n)
                .map(|i| {
                    let k = rng.gen_range(0..=3);
                    let attrs = pool.choose_multiple(rng, k).cloned().collect();
                    let class = if rng.gen_bool(0.8) {
                        prompt.job.as_str()
                    } else {
                        "dog"
                    };
                    entry(i + 1, class, attrs)
                })
                .collect();
            for i in 0..n {
                for _ in 0..rng.gen_range(0..=2) {
                    let verb = if rng.gen_bool(0.5) {
                        prompt.interactions[rng.gen_range(0..2)].clone()
                    } else {
                        "ignoring".to_string()
                    };
                    let target = rng
                        .gen_bool(0.9)
                        .then(|| format!("P{}", rng.gen_range(1..=n)));
                    census.entries[i]
                        .interactions
                        .push(CensusInteraction { verb, target });
                }
            }
        }
        Collapse::Merge => {
            // Fold one entry into another: its attributes and interactions
            // move to the survivor and references are redirected.
            let victim = rng.gen_range(0..4);
            let mut survivor = rng.gen_range(0..3);
            if survivor >= victim {
                survivor += 1;
            }
            let removed = census.entries[victim].clone();
            census.entries[survivor]
                .attributes
                .extend(removed.attributes);
            census.entries[survivor]
                .interactions
                .extend(removed.interactions);
            let survivor_id = census.entries[survivor].census_id.clone();
            census.entries.remove(victim);
            for e in &mut census.entries {
                for i in &mut e.interactions {
                    if i.target.as_deref() == Some(removed.census_id.as_str()) {
                        i.target = Some(survivor_id.clone());
                    }
                }
            }
        }
        Collapse::Leak => {
            let from = rng.gen_range(0..4);
            let mut to = rng.gen_range(0..3);
            if to >= from {
                to += 1;
            }
            let moved = std::mem::take(&mut census.entries[from].attributes);
            census.entries[to].attributes.extend(moved);
        }
        Collapse::Homogenize => {
            let source = rng.gen_range(0..4);
            let shared = census.entries[source].attributes.clone();
            for e in &mut census.entries {
                e.attributes = shared.clone();
            }
        }
    }
    census
}

const CAPTION_CLASSES: &[&str] = &[
    "apple", "bowl", "cup", "vase", "ball", "chair", "lamp", "book", "clock", "hat", "kite", "shoe",
];
const CAPTION_BACKGROUNDS: &[&str] = &["table", "floor", "shelf", "desk", "beach"];

/// A random simple caption with one to four distinct objects, each with a
/// non-gray color and optionally a shape and a texture.
pub fn random_caption(rng: &mut impl Rng) -> String {
    use coig_core::caption::{perturbation_colors, SHAPES, TEXTURES};
    let colors: Vec<&str> = perturbation_colors().collect();
    let n = rng.gen_range(1..=4);
    let phrases: Vec<String> = CAPTION_CLASSES
        .choose_multiple(rng, n)
        .map(|class| {
            let mut words = vec!["a", colors.choose(rng).unwrap()];
            if rng.gen_bool(0.5) {
                words.push(SHAPES.choose(rng).unwrap());
            }
            if rng.gen_bool(0.5) {
                words.push(TEXTURES.choose(rng).unwrap());
            }
            words.push(class);
            words.join(" ")
        })
        .collect();
    let mut caption = match phrases.split_last() {
        Some((last, rest)) if !rest.is_empty() => format!("{} and {last}", rest.join(", ")),
        _ => phrases[0].clone(),
    };
    if rng.gen_bool(0.5) {
        caption.push_str(&format!(
            " on a {}",
            CAPTION_BACKGROUNDS.choose(rng).unwrap()
        ));
    }
    caption
}
