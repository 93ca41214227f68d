//! Configuration and the operation facade shared by the CLI, the HTTP
//! service and the C ABI. Every entry point funnels through [`Engine`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, BackendProfile, Backends, MockFault, Provider};
use crate::bench::{
    generate_ec_prompts, run_ec_benchmark, run_qa_benchmark, BenchContext, BenchError, EcPrompt,
    EcScorecard, EcVocab, Pipeline, QaBenchmark, QaRecord, QaScorecard,
};
use crate::eval::{
    build_probes, eval_readability, run_causal_case, CausalReport, EvalError, PerturbationField,
    PerturbationSpec, ReadabilityReport,
};
use crate::executor::{self, ChainRun, ExecError, Executor, Intervention};
use crate::planner::{decompose_with, ChainPlan, PlannerError, PlannerOptions};
use crate::runstore::{RunStore, StoreError};

pub const CONFIG_ENV: &str = "COIG_CONFIG";
pub const STORE_ENV: &str = "COIG_STORE";
pub const DEFAULT_STORE: &str = "coig-store";
pub const DEFAULT_PROFILE: &str = "mock";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    /// Environment variable holding a static bearer token; unset disables auth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_token_env_var: Option<String>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            api_token_env_var: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub store_root: PathBuf,
    #[serde(rename = "profiles")]
    pub backend_profiles: BTreeMap<String, BackendProfile>,
    pub default_profile: String,
    pub seed: u64,
    pub service: ServiceSettings,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            store_root: PathBuf::from(DEFAULT_STORE),
            backend_profiles: BTreeMap::from([(
                DEFAULT_PROFILE.to_string(),
                BackendProfile::mock(),
            )]),
            default_profile: DEFAULT_PROFILE.into(),
            seed: 0,
            service: ServiceSettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown backend profile {0:?}")]
    UnknownProfile(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// Coarse error classes shared by HTTP status codes, CLI exit codes and C
/// status codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    NotFound,
    InvalidInput,
    Conflict,
    BackendFailure,
    Internal,
}

fn backend_kind(e: &BackendError) -> ErrorKind {
    match e {
        BackendError::Config(_) | BackendError::PreconditionViolated(_) => ErrorKind::InvalidInput,
        _ => ErrorKind::BackendFailure,
    }
}

fn store_kind(e: &StoreError) -> ErrorKind {
    match e {
        StoreError::NotFound(_) => ErrorKind::NotFound,
        StoreError::InvalidId(_) => ErrorKind::InvalidInput,
        _ => ErrorKind::Internal,
    }
}

fn exec_kind(e: &ExecError) -> ErrorKind {
    match e {
        ExecError::PlanInvalid(_)
        | ExecError::IndexOutOfRange { .. }
        | ExecError::InvalidIntervention(_) => ErrorKind::InvalidInput,
        ExecError::NoMoreSteps
        | ExecError::PriorStepFailed(_)
        | ExecError::RunNotPaused(_)
        | ExecError::MissingArtifact(_) => ErrorKind::Conflict,
        ExecError::StepFailed { .. } => ErrorKind::BackendFailure,
        ExecError::Store(s) => store_kind(s),
    }
}

impl EngineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            EngineError::Config(_)
            | EngineError::UnknownProfile(_)
            | EngineError::InvalidInput(_) => ErrorKind::InvalidInput,
            EngineError::Io(_) => ErrorKind::Internal,
            EngineError::Backend(e) => backend_kind(e),
            EngineError::Planner(PlannerError::PreconditionViolated(_)) => ErrorKind::InvalidInput,
            EngineError::Planner(PlannerError::Backend(e)) => backend_kind(e),
            EngineError::Planner(PlannerError::PlannerOutput(_)) => ErrorKind::BackendFailure,
            EngineError::Exec(e) => exec_kind(e),
            EngineError::Store(e) => store_kind(e),
            EngineError::Eval(e) => match e {
                EvalError::MissingArtifact(_) => ErrorKind::Conflict,
                EvalError::FieldAbsent { .. }
                | EvalError::GrayForbidden
                | EvalError::SpecMismatch(_) => ErrorKind::InvalidInput,
                EvalError::Backend(b) => backend_kind(b),
                EvalError::Store(s) => store_kind(s),
                EvalError::Exec(x) => exec_kind(x),
            },
            EngineError::Bench(e) => match e {
                BenchError::VocabTooSmall { .. }
                | BenchError::Vocab(_)
                | BenchError::PreconditionViolated(_)
                | BenchError::Schema(_) => ErrorKind::InvalidInput,
                BenchError::Io(_) => ErrorKind::Internal,
                BenchError::Store(s) => store_kind(s),
                _ => ErrorKind::BackendFailure,
            },
        }
    }

    /// Plan-rule violations carried by the error, if any.
    pub fn violations(&self) -> Option<&[crate::planner::PlanViolation]> {
        match self {
            EngineError::Exec(ExecError::PlanInvalid(v)) => Some(v),
            EngineError::Eval(EvalError::Exec(ExecError::PlanInvalid(v))) => Some(v),
            _ => None,
        }
    }
}

impl CliConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.backend_profiles.contains_key(&self.default_profile) {
            return Err(EngineError::Config(format!(
                "default_profile {:?} is not among the configured profiles",
                self.default_profile
            )));
        }
        for (name, p) in &self.backend_profiles {
            for c in [&p.llm, &p.image, &p.vision] {
                c.validate()
                    .map_err(|e| EngineError::Config(format!("profile {name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Registers a copy of `profile` whose mock image backend injects
    /// `fault`, and returns the new profile's name.
    pub fn add_faulted_profile(
        &mut self,
        profile: Option<&str>,
        fault: MockFault,
    ) -> Result<String, EngineError> {
        let base = profile.unwrap_or(&self.default_profile).to_string();
        let mut p = self
            .backend_profiles
            .get(&base)
            .cloned()
            .ok_or_else(|| EngineError::UnknownProfile(base.clone()))?;
        if p.image.provider != Provider::Mock {
            return Err(EngineError::Config(format!(
                "profile {base:?} has no mock image backend to fault"
            )));
        }
        p.image.fault = Some(fault);
        let name = format!(
            "{base}+{}",
            serde_json::to_value(fault)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        );
        self.backend_profiles.insert(name.clone(), p);
        Ok(name)
    }

    /// Parses TOML, or JSON when the path ends in `.json`. The built-in mock
    /// profile is always available unless the file redefines it.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let mut config: CliConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?
        };
        config
            .backend_profiles
            .entry(DEFAULT_PROFILE.to_string())
            .or_insert_with(BackendProfile::mock);
        if config.store_root.is_relative() {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                config.store_root = dir.join(&config.store_root);
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// `explicit` (a `--config` flag) wins over `$COIG_CONFIG`, which wins
    /// over `coig.toml` / `coig.json` in `cwd`. Both of the latter existing is
    /// an error. `$COIG_STORE` overrides the store root in every case.
    pub fn discover(
        explicit: Option<&Path>,
        cwd: &Path,
    ) -> Result<(Self, Option<PathBuf>), EngineError> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        let local: Vec<PathBuf> = ["coig.toml", "coig.json"]
            .iter()
            .map(|n| cwd.join(n))
            .filter(|p| p.is_file())
            .collect();
        let chosen = match (explicit, from_env) {
            (Some(p), _) => Some(p.to_path_buf()),
            (None, Some(p)) => Some(p),
            (None, None) => match local.as_slice() {
                [] => None,
                [one] => Some(one.clone()),
                _ => {
                    return Err(EngineError::Config(format!(
                        "both {} and {} exist; remove one or pass --config",
                        local[0].display(),
                        local[1].display()
                    )))
                }
            },
        };
        let mut config = match &chosen {
            Some(p) => Self::load(p)?,
            None => Self {
                store_root: cwd.join(DEFAULT_STORE),
                ..Self::default()
            },
        };
        if let Some(store) = std::env::var_os(STORE_ENV).filter(|v| !v.is_empty()) {
            config.store_root = PathBuf::from(store);
        }
        Ok((config, chosen))
    }
}

pub struct Engine {
    config: CliConfig,
    store: RunStore,
}

/// A causal evaluation together with the run that executed the perturbed plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalOutcome {
    pub perturbed_run_id: String,
    pub report: CausalReport,
}

impl Engine {
    pub fn new(config: CliConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let store = RunStore::open(&config.store_root)?;
        Ok(Self { config, store })
    }

    pub fn config(&self) -> &CliConfig {
        &self.config
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    /// Resolves a profile name (or the default) to live clients.
    pub fn backends(&self, profile: Option<&str>) -> Result<(String, Backends), EngineError> {
        let name = profile.unwrap_or(&self.config.default_profile).to_string();
        let p = self
            .config
            .backend_profiles
            .get(&name)
            .ok_or_else(|| EngineError::UnknownProfile(name.clone()))?;
        Ok((name, Backends::from_profile(p)?))
    }

    pub fn executor(&self, profile: Option<&str>) -> Result<Executor, EngineError> {
        let (_, backends) = self.backends(profile)?;
        Ok(Executor::new(backends, self.store.clone()))
    }

    pub fn plan(&self, prompt: &str, profile: Option<&str>) -> Result<ChainPlan, EngineError> {
        let (_, backends) = self.backends(profile)?;
        Ok(decompose_with(
            backends.llm.as_ref(),
            prompt,
            &PlannerOptions::default(),
        )?)
    }

    /// Reads a plan file, accepting either a bare plan document or planner
    /// output containing a plan block.
    pub fn read_plan_file(path: &Path) -> Result<ChainPlan, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        if let Ok(plan) = serde_json::from_str::<ChainPlan>(&text) {
            return Ok(plan);
        }
        let parsed = crate::planner::parse_planner_output(&text)
            .map_err(|e| EngineError::InvalidInput(format!("{}: {e}", path.display())))?;
        Ok(parsed.plan)
    }

    /// Starts a run and, unless stepping, drives it as far as it goes.
    pub fn start(
        &self,
        plan: ChainPlan,
        profile: Option<&str>,
        step_mode: bool,
    ) -> Result<ChainRun, EngineError> {
        let (name, backends) = self.backends(profile)?;
        let exec = Executor::new(backends, self.store.clone());
        let mut run = exec.start_run(plan, &name, step_mode)?;
        if !step_mode && run.status == executor::RunStatus::Running {
            exec.run_to_completion(&mut run)?;
        }
        Ok(run)
    }

    /// Loads a run, repairing the state a crash mid-step leaves behind.
    pub fn load_run(&self, run_id: &str) -> Result<ChainRun, EngineError> {
        let mut run = self.store.load_run(run_id)?;
        if executor::recover(&mut run) {
            self.store.save_run(&run)?;
        }
        Ok(run)
    }

    pub fn resume(&self, run_id: &str, retry_failed: bool) -> Result<ChainRun, EngineError> {
        let mut run = self.load_run(run_id)?;
        let exec = self.executor(Some(&run.backend_profile))?;
        if retry_failed && run.failed_step().is_some() {
            exec.retry_failed(&mut run)?;
        }
        exec.resume(&mut run)?;
        Ok(run)
    }

    pub fn pause(&self, run_id: &str) -> Result<ChainRun, EngineError> {
        let mut run = self.load_run(run_id)?;
        executor::pause(&mut run);
        self.store.save_run(&run)?;
        Ok(run)
    }

    pub fn intervene(&self, run_id: &str, iv: Intervention) -> Result<ChainRun, EngineError> {
        let mut run = self.load_run(run_id)?;
        executor::apply_intervention(&mut run, iv)?;
        self.store.save_run(&run)?;
        Ok(run)
    }

    pub fn eval_readability(&self, run_id: &str) -> Result<ReadabilityReport, EngineError> {
        let run = self.load_run(run_id)?;
        let (_, backends) = self.backends(Some(&run.backend_profile))?;
        let probes = build_probes(&run.plan);
        let report = eval_readability(&run, &probes, backends.vision.as_ref(), &self.store)?;
        self.store
            .save_report(run_id, "readability", &report, Some(&report.csv()))?;
        Ok(report)
    }

    /// Builds the perturbation for `step`, reading the original color from
    /// the plan, runs it and stores the report under the original run.
    pub fn eval_causal(
        &self,
        run_id: &str,
        step: u32,
        to: &str,
    ) -> Result<CausalOutcome, EngineError> {
        let run = self.load_run(run_id)?;
        let original_value = original_color(&run.plan, step).ok_or_else(|| {
            EngineError::Eval(EvalError::FieldAbsent {
                step,
                field: "color".into(),
                value: String::new(),
            })
        })?;
        let spec = PerturbationSpec {
            step_index: step,
            field: PerturbationField::Color,
            original_value,
            perturbed_value: to.to_string(),
        };
        self.eval_causal_spec(&run, &spec)
    }

    pub fn eval_causal_spec(
        &self,
        run: &ChainRun,
        spec: &PerturbationSpec,
    ) -> Result<CausalOutcome, EngineError> {
        let (_, backends) = self.backends(Some(&run.backend_profile))?;
        let exec = Executor::new(backends.clone(), self.store.clone());
        let (pert, report) = run_causal_case(&exec, run, spec, backends.vision.as_ref())?;
        self.store
            .save_report(&run.run_id, "causal", &report, Some(&report.csv()))?;
        Ok(CausalOutcome {
            perturbed_run_id: pert.run_id,
            report,
        })
    }

    pub fn ec_generate(
        &self,
        count: usize,
        seed: Option<u64>,
    ) -> Result<Vec<EcPrompt>, EngineError> {
        Ok(generate_ec_prompts(
            &EcVocab::builtin(),
            count,
            seed.unwrap_or(self.config.seed),
        )?)
    }

    fn bench_context(&self, profile: Option<&str>) -> Result<BenchContext, EngineError> {
        let (name, backends) = self.backends(profile)?;
        Ok(BenchContext {
            executor: Executor::new(backends.clone(), self.store.clone()),
            backends,
            profile: name,
        })
    }

    pub fn bench_ec(
        &self,
        prompts: &[EcPrompt],
        pipeline: Pipeline,
        profile: Option<&str>,
    ) -> Result<EcScorecard, EngineError> {
        Ok(run_ec_benchmark(
            prompts,
            pipeline,
            &self.bench_context(profile)?,
        ))
    }

    pub fn bench_qa(
        &self,
        records: &[QaRecord],
        benchmark: QaBenchmark,
        pipeline: Pipeline,
        profile: Option<&str>,
    ) -> Result<QaScorecard, EngineError> {
        Ok(run_qa_benchmark(
            records,
            benchmark,
            pipeline,
            &self.bench_context(profile)?,
        ))
    }
}

/// First color value set by a Detail action of plan step `step`.
fn original_color(plan: &ChainPlan, step: u32) -> Option<String> {
    use crate::backends::grammar::{parse_actions, Action, AttrKey};
    let actions = parse_actions(&plan.step(step)?.step_action).ok()?;
    actions.into_iter().find_map(|a| match a {
        Action::Detail { attributes, .. } => attributes
            .into_iter()
            .find(|(k, _)| *k == AttrKey::Color)
            .map(|(_, v)| v),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        CliConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coig.toml");
        std::fs::write(
            &path,
            r#"
store_root = "store"
default_profile = "live"
seed = 7

[profiles.live.llm]
provider = "openai"
endpoint_url = "https://example.invalid/v1"
auth_token_env_var = "COIG_TEST_TOKEN"
model_name = "some-model"
"#,
        )
        .unwrap();
        let config = CliConfig::load(&path).unwrap();
        assert_eq!(config.store_root, dir.path().join("store"));
        assert!(config.backend_profiles.contains_key("mock"));
        assert_eq!(config.backend_profiles["live"].llm.model_name, "some-model");
        assert_eq!(config.seed, 7);

        std::fs::write(&path, "default_profile = \"nope\"\n").unwrap();
        assert!(matches!(
            CliConfig::load(&path),
            Err(EngineError::Config(_))
        ));
        std::fs::write(&path, "colour = 1\n").unwrap();
        assert!(matches!(
            CliConfig::load(&path),
            Err(EngineError::Config(_))
        ));
    }
}
