//! Uniform interfaces to the three external model roles: a text LLM, an
//! image generator/editor, and a multimodal evaluator.
//!
//! Each role has an HTTP implementation speaking an OpenAI-compatible API and
//! a deterministic mock backed by [`scene::SceneDocument`]s.

pub mod census;
pub mod grammar;
pub mod http;
pub mod mock;
pub mod question;
pub mod scene;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::artifact::ImageArtifact;
use census::CensusReport;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    #[default]
    Mock,
    /// OpenAI-compatible chat/images HTTP API.
    Openai,
}

/// Fault injectors for the mock backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFault {
    /// Generation drops the last entity of the scene (entity merge).
    DropLastEntity,
    /// Every call fails with a transport error.
    Unavailable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub provider: Provider,
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token. The token
    /// itself is never written to configs or manifests.
    pub auth_token_env_var: String,
    pub model_name: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub retry_backoff_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<MockFault>,
    /// Artificial delay per mock image call, in milliseconds.
    #[serde(skip_serializing_if = "is_zero")]
    pub mock_latency_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            provider: Provider::Mock,
            endpoint_url: String::new(),
            auth_token_env_var: String::new(),
            model_name: "mock".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            retry_backoff_secs: 1.0,
            fault: None,
            mock_latency_ms: 0,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn with_fault(mut self, fault: MockFault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.retry_backoff_secs.is_nan() || self.retry_backoff_secs < 0.0 {
            return Err(BackendError::Config(
                "retry backoff must be non-negative".into(),
            ));
        }
        if self.provider == Provider::Openai && self.endpoint_url.is_empty() {
            return Err(BackendError::Config("endpoint_url is required".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Backend configuration for all three model roles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendProfile {
    pub llm: BackendConfig,
    pub image: BackendConfig,
    pub vision: BackendConfig,
}

impl BackendProfile {
    pub fn mock() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("unparseable model reply: {0}")]
    Reply(String),
    #[error(transparent)]
    Grammar(#[from] grammar::GrammarError),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("edit would alter locked entity {0}")]
    LockedEntityMutation(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    QuestionParse(#[from] question::QuestionParseError),
    #[error("census parse error: {0}")]
    CensusParse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Errors worth pausing for and retrying later; everything else is a
    /// defect in the request itself.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::RateLimited(_) | BackendError::Auth(_)
        )
    }
}

impl From<grammar::ApplyError> for BackendError {
    fn from(e: grammar::ApplyError) -> Self {
        match e {
            grammar::ApplyError::UnknownEntity(id) => BackendError::UnknownEntity(id),
            grammar::ApplyError::LockedEntityMutation(id) => BackendError::LockedEntityMutation(id),
            other => BackendError::InvalidEdit(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

pub trait TextModel: Send + Sync {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError>;
    fn model_name(&self) -> &str;
}

pub trait ImageModel: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<ImageArtifact, BackendError>;
    fn edit(&self, image: &ImageArtifact, prompt: &str) -> Result<ImageArtifact, BackendError>;
}

pub trait VisionModel: Send + Sync {
    fn answer(&self, image: &ImageArtifact, question: &str) -> Result<Answer, BackendError>;
    fn census(&self, image: &ImageArtifact) -> Result<CensusReport, BackendError>;
}

/// Instantiated clients for one profile. Cheap to clone and safe to share
/// across concurrently executing runs.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn TextModel>,
    pub image: Arc<dyn ImageModel>,
    pub vision: Arc<dyn VisionModel>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("llm", &self.llm.model_name())
            .finish_non_exhaustive()
    }
}

impl Backends {
    pub fn from_profile(profile: &BackendProfile) -> Result<Self, BackendError> {
        Ok(Self {
            llm: text_model(&profile.llm)?,
            image: image_model(&profile.image)?,
            vision: vision_model(&profile.vision)?,
        })
    }

    pub fn mock() -> Self {
        Self::from_profile(&BackendProfile::mock()).expect("mock profile is valid")
    }
}

pub fn text_model(config: &BackendConfig) -> Result<Arc<dyn TextModel>, BackendError> {
    config.validate()?;
    Ok(match config.provider {
        Provider::Mock => Arc::new(mock::MockText::new(config)),
        Provider::Openai => Arc::new(http::HttpText::new(config)),
    })
}

pub fn image_model(config: &BackendConfig) -> Result<Arc<dyn ImageModel>, BackendError> {
    config.validate()?;
    Ok(match config.provider {
        Provider::Mock => Arc::new(mock::MockImage::new(config)),
        Provider::Openai => Arc::new(http::HttpImage::new(config)),
    })
}

pub fn vision_model(config: &BackendConfig) -> Result<Arc<dyn VisionModel>, BackendError> {
    config.validate()?;
    Ok(match config.provider {
        Provider::Mock => Arc::new(mock::MockVision::new(config)),
        Provider::Openai => Arc::new(http::HttpVision::new(config)),
    })
}

fn require_non_empty(what: &str, text: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::PreconditionViolated(format!(
            "{what} is empty"
        )));
    }
    Ok(())
}

pub fn llm_complete(
    system_prompt: &str,
    user_prompt: &str,
    config: &BackendConfig,
) -> Result<String, BackendError> {
    text_model(config)?.complete(system_prompt, user_prompt)
}

pub fn t2i_generate(prompt: &str, config: &BackendConfig) -> Result<ImageArtifact, BackendError> {
    image_model(config)?.generate(prompt)
}

pub fn t2i_edit(
    image: &ImageArtifact,
    prompt: &str,
    config: &BackendConfig,
) -> Result<ImageArtifact, BackendError> {
    image_model(config)?.edit(image, prompt)
}

pub fn mllm_answer(
    image: &ImageArtifact,
    question: &str,
    config: &BackendConfig,
) -> Result<Answer, BackendError> {
    vision_model(config)?.answer(image, question)
}

pub fn mllm_census(
    image: &ImageArtifact,
    config: &BackendConfig,
) -> Result<CensusReport, BackendError> {
    vision_model(config)?.census(image)
}
