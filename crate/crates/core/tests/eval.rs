use coig_core::backends::{BackendConfig, Backends};
use coig_core::eval::{
    build_probes, eval_causal, eval_readability, run_causal_case, AttributeKind, EvalError,
    PerturbationField, PerturbationSpec,
};
use coig_core::executor::{ChainRun, Executor};
use coig_core::planner::template::mock_plan;
use coig_core::runstore::RunStore;

fn setup() -> (tempfile::TempDir, Executor) {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    (dir, Executor::new(Backends::mock(), store))
}

fn complete(exec: &Executor, caption: &str) -> ChainRun {
    let mut run = exec
        .start_run(mock_plan(caption).unwrap(), "mock", false)
        .unwrap();
    exec.run_to_completion(&mut run).unwrap();
    run
}

#[test]
fn readability_before_and_after() {
    let (_d, exec) = setup();
    let run = complete(&exec, "a red round apple and a glossy blue bowl on a table");
    let probes = build_probes(&run.plan);
    assert_eq!(probes.len(), 4);
    let vision = Backends::mock().vision;
    let report = eval_readability(&run, &probes, vision.as_ref(), exec.store()).unwrap();
    for p in &report.probes {
        assert_eq!(
            (p.before_score, p.after_score),
            (0.0, 1.0),
            "{}",
            p.probe.question
        );
    }
    let color = &report.aggregates[&AttributeKind::Color];
    assert_eq!((color.probes, color.before, color.after), (2, 0.0, 1.0));
    assert!(report
        .csv()
        .starts_with("probe_id,attribute_kind,before,after\n"));
}

#[test]
fn probe_on_failed_step_is_missing_artifact() {
    let (_d, exec) = setup();
    let mut plan = mock_plan("A red apple and a blue bowl on a table").unwrap();
    let probes = build_probes(&plan);
    plan.steps[2].step_action = "paint something nice".into();
    let mut run = exec.start_run(plan, "mock", false).unwrap();
    exec.run_to_completion(&mut run).unwrap();
    let vision = Backends::mock().vision;
    assert!(matches!(
        eval_readability(&run, &probes, vision.as_ref(), exec.store()),
        Err(EvalError::MissingArtifact(3))
    ));
}

#[test]
fn causal_case_on_mock() {
    let (_d, exec) = setup();
    let orig = complete(&exec, "A red apple and a blue bowl on a table");
    let spec = PerturbationSpec {
        step_index: 2,
        field: PerturbationField::Color,
        original_value: "red".into(),
        perturbed_value: "green".into(),
    };
    let vision = Backends::mock().vision;
    let (pert, report) = run_causal_case(&exec, &orig, &spec, vision.as_ref()).unwrap();
    assert_eq!(
        (
            report.score_unperturbed_final,
            report.score_at_step,
            report.score_perturbed_final
        ),
        (0.0, 1.0, 1.0)
    );
    assert_eq!(
        report.cases[0].question,
        "Is the apple present? Is it green in color?"
    );

    // Comparing a run with itself is not a perturbation.
    assert!(matches!(
        eval_causal(&orig, &orig, &spec, vision.as_ref(), exec.store()),
        Err(EvalError::SpecMismatch(_))
    ));
    let other = PerturbationSpec {
        perturbed_value: "pink".into(),
        ..spec
    };
    assert!(matches!(
        eval_causal(&orig, &pert, &other, vision.as_ref(), exec.store()),
        Err(EvalError::SpecMismatch(_))
    ));
}

#[test]
fn vision_outage_surfaces_as_backend_error() {
    let (_d, exec) = setup();
    let run = complete(&exec, "a red apple");
    let down = coig_core::backends::vision_model(
        &BackendConfig::mock().with_fault(coig_core::backends::MockFault::Unavailable),
    )
    .unwrap();
    assert!(matches!(
        eval_readability(&run, &build_probes(&run.plan), down.as_ref(), exec.store()),
        Err(EvalError::Backend(_))
    ));
}
