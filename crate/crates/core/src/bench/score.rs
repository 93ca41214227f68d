//! The seven-point entity-collapse rubric over a visual census.

use serde::{Deserialize, Serialize};

use super::ec::EcPrompt;
use crate::backends::census::CensusReport;
use crate::caption::{singularize, EC_INTERACTION_PAIRS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcScore {
    pub entity_count: u32,
    pub attribute_binding: u32,
    pub interaction: u32,
    pub total: u32,
}

fn norm(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

fn same_class(a: &str, b: &str) -> bool {
    singularize(&norm(a)) == singularize(&norm(b))
}

/// Size of a maximum matching in a bipartite graph given as adjacency lists
/// from left vertices to right vertices (augmenting paths).
pub fn max_bipartite_matching(adjacency: &[Vec<usize>], right_count: usize) -> usize {
    fn augment(
        u: usize,
        adjacency: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &v in &adjacency[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adjacency, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right_count];
    (0..adjacency.len())
        .filter(|&u| augment(u, adjacency, &mut vec![false; right_count], &mut owner))
        .count()
}

/// Census entries exhibiting each prompted attribute.
pub fn attribute_adjacency(census: &CensusReport, attributes: &[String]) -> Vec<Vec<usize>> {
    attributes
        .iter()
        .map(|a| {
            let a = norm(a);
            census
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.attributes.iter().any(|x| norm(x) == a))
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Directed (subject, target) entry pairs realizing `verb` between two
/// distinct entries.
pub fn interaction_edges(census: &CensusReport, verb: &str) -> Vec<(usize, usize)> {
    let verb = norm(verb);
    let mut edges = Vec::new();
    for (i, entry) in census.entries.iter().enumerate() {
        for interaction in &entry.interactions {
            let Some(target) = &interaction.target else {
                continue;
            };
            let Some(j) = census.entries.iter().position(|e| &e.census_id == target) else {
                continue;
            };
            if i != j && norm(&interaction.verb) == verb {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Prompted interactions realized between distinct entities. The two prompted
/// pairs are disjoint, so both only count when they involve four different
/// entries; one entity carrying both interactions earns a single credit.
fn interaction_credit(census: &CensusReport, prompt: &EcPrompt) -> u32 {
    debug_assert!(EC_INTERACTION_PAIRS[0].0 != EC_INTERACTION_PAIRS[1].0);
    let first = interaction_edges(census, &prompt.interactions[0]);
    let second = interaction_edges(census, &prompt.interactions[1]);
    let disjoint = first.iter().any(|&(a, b)| {
        second
            .iter()
            .any(|&(c, d)| a != c && a != d && b != c && b != d)
    });
    if disjoint {
        2
    } else {
        u32::from(!first.is_empty() || !second.is_empty())
    }
}

pub fn score_ec(census: &CensusReport, prompt: &EcPrompt) -> EcScore {
    let of_job = census
        .entries
        .iter()
        .filter(|e| same_class(&e.class, &prompt.job))
        .count();
    let entity_count = u32::from(of_job == prompt.expected_entity_count as usize);
    let attribute_binding = max_bipartite_matching(
        &attribute_adjacency(census, &prompt.attributes),
        census.entries.len(),
    ) as u32;
    let interaction = interaction_credit(census, prompt);
    EcScore {
        entity_count,
        attribute_binding,
        interaction,
        total: entity_count + attribute_binding + interaction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::census::{CensusEntry, CensusInteraction};

    fn prompt() -> EcPrompt {
        let attributes = [
            "smiling",
            "holding a bottle",
            "sporting white hair",
            "wearing glasses",
        ]
        .map(String::from);
        let interactions = ["talking to", "glaring at"].map(String::from);
        EcPrompt {
            id: 1,
            job: "airman".into(),
            text: crate::caption::render_ec_text("airmen", &attributes, &interactions),
            attributes,
            interactions,
            expected_entity_count: 4,
            template: 1,
        }
    }

    fn entry(id: &str, attrs: &[&str], interactions: &[(&str, &str)]) -> CensusEntry {
        CensusEntry {
            census_id: id.into(),
            class: "airman".into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            interactions: interactions
                .iter()
                .map(|(v, t)| CensusInteraction {
                    verb: v.to_string(),
                    target: Some(t.to_string()),
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_census() {
        let census = CensusReport {
            entries: vec![
                entry("P1", &["smiling"], &[("talking to", "P2")]),
                entry("P2", &["holding a bottle"], &[]),
                entry("P3", &["sporting white hair"], &[("glaring at", "P4")]),
                entry("P4", &["wearing glasses"], &[]),
            ],
        };
        let s = score_ec(&census, &prompt());
        assert_eq!(
            (s.entity_count, s.attribute_binding, s.interaction, s.total),
            (1, 4, 2, 7)
        );
    }

    #[test]
    fn merged_census_with_hoarded_interactions() {
        // Three entries; P1 hoards two attributes and both interactions.
        let census = CensusReport {
            entries: vec![
                entry(
                    "P1",
                    &["smiling", "sporting white hair"],
                    &[("talking to", "P2"), ("glaring at", "P3")],
                ),
                entry("P2", &["holding a bottle"], &[]),
                entry("P3", &["wearing glasses"], &[]),
            ],
        };
        let s = score_ec(&census, &prompt());
        assert_eq!(
            (s.entity_count, s.attribute_binding, s.interaction),
            (0, 3, 1)
        );
        assert_eq!(s.total, 4);
    }

    #[test]
    fn empty_census() {
        assert_eq!(
            score_ec(&CensusReport::default(), &prompt()),
            EcScore::default()
        );
    }

    #[test]
    fn self_interaction_earns_nothing() {
        let census = CensusReport {
            entries: vec![entry("P1", &[], &[("talking to", "P1")])],
        };
        assert_eq!(score_ec(&census, &prompt()).interaction, 0);
    }

    #[test]
    fn homogenized_census_is_capped() {
        let all = entry("P", &["smiling"], &[]);
        let census = CensusReport {
            entries: (1..=4)
                .map(|i| CensusEntry {
                    census_id: format!("P{i}"),
                    ..all.clone()
                })
                .collect(),
        };
        let s = score_ec(&census, &prompt());
        assert_eq!((s.entity_count, s.attribute_binding), (1, 1));
    }

    #[test]
    fn matching_handles_augmenting_paths() {
        // Greedy would give 0->0 and strand 1; the maximum is 2.
        assert_eq!(max_bipartite_matching(&[vec![0, 1], vec![0]], 2), 2);
        assert_eq!(max_bipartite_matching(&[vec![0], vec![0], vec![0]], 1), 1);
        assert_eq!(max_bipartite_matching(&[vec![], vec![]], 0), 0);
    }
}
