use std::path::Path;
use std::process::{Command, Output};

use coig_core::bench::{generate_ec_prompts, to_jsonl, EcVocab};
use coig_core::canonical;
use coig_core::engine::{CliConfig, Engine};
use serde_json::Value;

fn coig(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coig"))
        .args(args)
        .current_dir(dir)
        .env_remove("COIG_CONFIG")
        .env("COIG_STORE", dir.join("store"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("exactly one JSON document")
}

#[test]
fn ec_gen_writes_requested_prompts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = coig(
        dir.path(),
        &[
            "bench", "ec-gen", "--count", "300", "--seed", "7", "--out", "a.jsonl",
        ],
    );
    assert!(a.status.success(), "{}", stderr(&a));
    coig(
        dir.path(),
        &[
            "bench", "ec-gen", "--count", "300", "--seed", "7", "--out", "b.jsonl",
        ],
    );
    coig(
        dir.path(),
        &[
            "bench", "ec-gen", "--count", "300", "--seed", "8", "--out", "c.jsonl",
        ],
    );
    let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl").lines().count(), 300);
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
}

#[test]
fn run_prints_id_of_completed_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = coig(
        dir.path(),
        &["run", "a red apple and a blue bowl", "--profile", "mock"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let id = stdout(&o).trim().to_string();
    assert!(stderr(&o).contains("completed"));
    let run = json(&coig(dir.path(), &["show", &id, "--json"]));
    assert_eq!(run["status"], "completed");
    assert!(dir
        .path()
        .join("store/runs")
        .join(&id)
        .join("manifest.json")
        .is_file());
}

#[test]
fn gray_perturbation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let id = stdout(&coig(dir.path(), &["run", "a red apple and a blue bowl"]))
        .trim()
        .to_string();
    let o = coig(
        dir.path(),
        &["eval", "causal", &id, "--step", "2", "--to", "gray"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("gray"), "{}", stderr(&o));

    let ok = json(&coig(
        dir.path(),
        &[
            "eval", "causal", &id, "--step", "2", "--to", "green", "--json",
        ],
    ));
    assert_eq!(ok["report"]["score_at_step"], 1.0);
    let rd = json(&coig(dir.path(), &["eval", "readability", &id, "--json"]));
    assert_eq!(rd["aggregates"]["color"]["after"], 1.0);
    assert!(dir
        .path()
        .join("store/reports")
        .join(&id)
        .join("readability.csv")
        .is_file());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["eval", "causal", "x", "--step"], &[]] {
        let o = coig(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(coig(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn failures_exit_1_with_one_json_document() {
    let dir = tempfile::tempdir().unwrap();
    let o = coig(dir.path(), &["show", "no-such-run", "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(err["code"], "not_found");
    let o = coig(dir.path(), &["run", "paint something nice"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ambiguous_config_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("coig.toml"), "seed = 1\n").unwrap();
    assert!(coig(dir.path(), &["bench", "ec-gen", "--count", "1"])
        .status
        .success());
    std::fs::write(dir.path().join("coig.json"), "{\"seed\": 2}\n").unwrap();
    let o = coig(dir.path(), &["bench", "ec-gen", "--count", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("coig.json"));
    // An explicit file settles it.
    let o = coig(
        dir.path(),
        &[
            "--config",
            "coig.json",
            "bench",
            "ec-gen",
            "--count",
            "1",
            "--json",
        ],
    );
    let via_json = json(&o);
    let expected = generate_ec_prompts(&EcVocab::builtin(), 1, 2).unwrap();
    assert_eq!(via_json, serde_json::to_value(&expected).unwrap());
}

#[test]
fn intervention_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let id = stdout(&coig(
        dir.path(),
        &["run", "A red apple and a blue bowl on a table"],
    ))
    .trim()
    .to_string();
    let run = json(&coig(dir.path(), &["show", &id, "--json"]));
    let action = run["plan"]["steps"][1]["step_action"]
        .as_str()
        .unwrap()
        .replace("color=red", "color=blue");

    let o = coig(
        dir.path(),
        &[
            "intervene",
            &id,
            "--kind",
            "edit",
            "--at",
            "2",
            "--action",
            &action,
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(1),
        "completed runs must be paused first"
    );
    assert!(coig(dir.path(), &["pause", &id]).status.success());
    let o = coig(
        dir.path(),
        &[
            "intervene",
            &id,
            "--kind",
            "edit",
            "--at",
            "2",
            "--action",
            &action,
            "--step-kind",
            "entity-detail",
            "--target",
            "e1",
            "--json",
        ],
    );
    assert_eq!(json(&o)["status"], "paused");
    let summary = json(&coig(dir.path(), &["resume", &id, "--json"]));
    assert_eq!(summary["status"], "completed");
    let run = json(&coig(dir.path(), &["show", &id, "--json"]));
    assert_eq!(run["interventions"][0]["kind"], "edit_step");
    let list = json(&coig(dir.path(), &["list", "--json"]));
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[test]
fn bench_run_with_fault() {
    let dir = tempfile::tempdir().unwrap();
    assert!(coig(
        dir.path(),
        &["bench", "ec-gen", "--count", "5", "--seed", "3", "--out", "p.jsonl"]
    )
    .status
    .success());
    let coig_card = json(&coig(
        dir.path(),
        &[
            "bench",
            "run",
            "--suite",
            "ec",
            "--pipeline",
            "coig",
            "--prompts",
            "p.jsonl",
            "--json",
        ],
    ));
    assert_eq!(coig_card["means"]["total"], 7.0);
    let faulted = json(&coig(
        dir.path(),
        &[
            "bench",
            "run",
            "--suite",
            "ec",
            "--pipeline",
            "single-pass",
            "--prompts",
            "p.jsonl",
            "--fault",
            "drop-last-entity",
            "--json",
        ],
    ));
    assert_eq!(faulted["means"]["entity_count"], 0.0);
    let text = coig(
        dir.path(),
        &[
            "bench",
            "run",
            "--suite",
            "ec",
            "--pipeline",
            "coig",
            "--prompts",
            "p.jsonl",
        ],
    );
    assert!(stdout(&text).starts_with("metric,coig\n"));
}

/// The command line only forwards to engine operations: its output equals
/// what the engine returns for the same inputs.
#[test]
fn cli_matches_engine_operations() {
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::new(CliConfig {
        store_root: dir.path().join("store"),
        ..CliConfig::default()
    })
    .unwrap();
    let prompt = "A red apple and a blue bowl on a table";

    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = coig_core::cli::run(["coig", "plan", prompt].map(Into::into), &mut out, &mut err);
    assert_eq!(code, 0);
    let mut via_cli: Value = serde_json::from_slice(&out).unwrap();
    let mut direct = canonical::to_value(&engine.plan(prompt, None).unwrap()).unwrap();
    // Planning stamps the current time; everything else must agree.
    via_cli.as_object_mut().unwrap().remove("created_at");
    direct.as_object_mut().unwrap().remove("created_at");
    assert_eq!(via_cli, direct);

    let o = coig(
        dir.path(),
        &["bench", "ec-gen", "--count", "12", "--seed", "5"],
    );
    assert_eq!(
        stdout(&o),
        to_jsonl(&engine.ec_generate(12, Some(5)).unwrap())
    );
}
