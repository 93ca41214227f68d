mod common;

use coig_core::backends::{BackendConfig, BackendProfile, Backends, MockFault};
use coig_core::bench::{
    generate_ec_prompts, run_ec_benchmark, run_qa_benchmark, score_ec, table_csv, BenchContext,
    EcVocab, Pipeline, QaBenchmark, QaRecord,
};
use coig_core::executor::Executor;
use coig_core::runstore::RunStore;
use common::{brute_force_binding, brute_force_interactions, random_census, Collapse};
use proptest::prelude::*;
use rand::SeedableRng;

fn context(dir: &tempfile::TempDir, profile: &BackendProfile) -> BenchContext {
    let backends = Backends::from_profile(profile).unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    BenchContext {
        executor: Executor::new(backends.clone(), store),
        backends,
        profile: "mock".into(),
    }
}

proptest! {
    #[test]
    fn scorer_matches_oracles_and_bounds(seed in any::<u64>(), kind in 0usize..4) {
        let kind = [Collapse::Random, Collapse::Merge, Collapse::Leak, Collapse::Homogenize][kind];
        let prompt = generate_ec_prompts(&EcVocab::builtin(), 1, seed).unwrap().remove(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let census = random_census(&prompt, kind, &mut rng);
        let s = score_ec(&census, &prompt);
        prop_assert_eq!(s.attribute_binding, brute_force_binding(&census, &prompt.attributes));
        prop_assert_eq!(s.interaction, brute_force_interactions(&census, &prompt));
        prop_assert!(s.entity_count <= 1 && s.attribute_binding <= 4 && s.interaction <= 2);
        prop_assert_eq!(s.total, s.entity_count + s.attribute_binding + s.interaction);
        if kind != Collapse::Random {
            prop_assert!(s.total < 7, "collapse construction scored perfectly: {:?}", kind);
        }
    }
}

#[test]
fn mock_ec_pipelines_separate_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = generate_ec_prompts(&EcVocab::builtin(), 20, 11).unwrap();
    let coig = run_ec_benchmark(
        &prompts,
        Pipeline::Coig,
        &context(&dir, &BackendProfile::mock()),
    );
    assert_eq!(
        coig.failed,
        0,
        "{:?}",
        coig.rows.iter().find(|r| r.error.is_some())
    );
    assert_eq!(coig.means.total, 7.0);

    let merging = BackendProfile {
        image: BackendConfig::mock().with_fault(MockFault::DropLastEntity),
        ..BackendProfile::mock()
    };
    let single = run_ec_benchmark(&prompts, Pipeline::SinglePass, &context(&dir, &merging));
    assert_eq!(single.failed, 0);
    assert_eq!(single.means.entity_count, 0.0);
    assert!(single.means.total < coig.means.total);

    let table = table_csv(&[coig.clone(), single]);
    assert!(table.starts_with("metric,coig,single_pass\nEntity Count (out of 1),1.000,0.000\n"));
    assert_eq!(coig.rows_csv().lines().count(), 21);
}

#[test]
fn qa_benchmark_on_mock() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<QaRecord> = [
        ("1", "a red apple left of a blue bowl", "color"),
        ("2", "a glossy green cube", "texture"),
        ("3", "the mood of a quiet morning", "texture"),
    ]
    .into_iter()
    .map(|(id, prompt, group)| QaRecord {
        id: id.into(),
        prompt: prompt.into(),
        group: Some(group.into()),
        objects: None,
        relations: None,
        questions: None,
    })
    .collect();
    let ctx = context(&dir, &BackendProfile::mock());
    for pipeline in [Pipeline::Coig, Pipeline::SinglePass] {
        let card = run_qa_benchmark(&records, QaBenchmark::CompbenchStyle, pipeline, &ctx);
        assert_eq!(card.failed, 1);
        assert_eq!(card.groups["color"], 1.0);
        assert_eq!(card.groups["texture"], 0.5);
        assert!(card.rows[2].error.as_deref().unwrap().contains("schema"));
    }
}
