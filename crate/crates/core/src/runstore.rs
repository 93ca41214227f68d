//! Filesystem run store.
//!
//! ```text
//! <root>/runs/<run_id>/manifest.json
//! <root>/artifacts/<sha256 hex>
//! <root>/reports/<run_id>/<metric>.json (+ <metric>.csv)
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::artifact::{sniff_media_kind, ArtifactId, ArtifactRef, ImageArtifact};
use crate::canonical;
use crate::executor::{ChainRun, RunStatus};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest references missing artifact {0}")]
    Integrity(ArtifactId),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt manifest for run {run_id}: {reason}")]
    CorruptManifest { run_id: String, reason: String },
    #[error("artifact {0} failed its hash check")]
    CorruptArtifact(ArtifactId),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

/// Writes `bytes` to `path` via a sibling temp file and a rename, so readers
/// see either the old content or the new one.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        uuid::Uuid::new_v4().simple()
    ));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub created_at: DateTime<Utc>,
    pub original_prompt: String,
    pub backend_profile: String,
    pub steps_total: u32,
    pub steps_succeeded: u32,
}

impl RunSummary {
    pub fn of(run: &ChainRun) -> Self {
        Self {
            run_id: run.run_id.clone(),
            status: run.status,
            created_at: run.created_at,
            original_prompt: run.plan.original_prompt.clone(),
            backend_profile: run.backend_profile.clone(),
            steps_total: run.plan.len(),
            steps_succeeded: run.completed_prefix(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Self { root: root.into() };
        for dir in [store.runs_dir(), store.artifacts_dir(), store.reports_dir()] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id).join("manifest.json")
    }

    pub fn artifact_path(&self, id: &ArtifactId) -> PathBuf {
        self.artifacts_dir().join(id.as_str())
    }

    pub fn has_artifact(&self, id: &ArtifactId) -> bool {
        self.artifact_path(id).is_file()
    }

    /// Stores a blob under its hash. Storing the same content twice is a no-op.
    pub fn put_artifact(&self, image: &ImageArtifact) -> Result<ArtifactRef, StoreError> {
        if ArtifactId::of_bytes(&image.bytes) != image.id {
            return Err(StoreError::CorruptArtifact(image.id.clone()));
        }
        let path = self.artifact_path(&image.id);
        if !path.is_file() {
            write_atomic(&path, &image.bytes)?;
        }
        Ok(image.reference())
    }

    /// Raw blob bytes, hash-checked.
    pub fn get_blob(&self, id: &ArtifactId) -> Result<Vec<u8>, StoreError> {
        let path = self.artifact_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("artifact {id}")))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        if ArtifactId::of_bytes(&bytes) != *id {
            return Err(StoreError::CorruptArtifact(id.clone()));
        }
        Ok(bytes)
    }

    pub fn get_artifact(&self, reference: &ArtifactRef) -> Result<ImageArtifact, StoreError> {
        let bytes = self.get_blob(&reference.id)?;
        ImageArtifact::from_stored(reference, bytes)
            .map_err(|_| StoreError::CorruptArtifact(reference.id.clone()))
    }

    /// Loads a blob when only its id is known (media kind is sniffed).
    pub fn get_artifact_by_id(&self, id: &ArtifactId) -> Result<ImageArtifact, StoreError> {
        let bytes = self.get_blob(id)?;
        let reference = ArtifactRef {
            id: id.clone(),
            media_kind: sniff_media_kind(&bytes),
            width: None,
            height: None,
        };
        ImageArtifact::from_stored(&reference, bytes)
            .map_err(|_| StoreError::CorruptArtifact(id.clone()))
    }

    /// Atomically writes the run manifest. Every artifact it references must
    /// already be stored.
    pub fn save_run(&self, run: &ChainRun) -> Result<String, StoreError> {
        check_id(&run.run_id)?;
        for id in run.referenced_artifacts() {
            if !self.has_artifact(id) {
                return Err(StoreError::Integrity(id.clone()));
            }
        }
        let bytes = canonical::to_bytes(run).expect("runs always serialize");
        write_atomic(&self.manifest_path(&run.run_id), &bytes)?;
        Ok(run.run_id.clone())
    }

    /// Loads a run and verifies every blob it references.
    pub fn load_run(&self, run_id: &str) -> Result<ChainRun, StoreError> {
        let run = self.load_manifest(run_id)?;
        for id in run.referenced_artifacts() {
            match self.get_blob(id) {
                Ok(_) => {}
                Err(StoreError::CorruptArtifact(_)) | Err(StoreError::NotFound(_)) => {
                    return Err(StoreError::CorruptManifest {
                        run_id: run_id.to_string(),
                        reason: format!("artifact {id} is missing or does not match its hash"),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(run)
    }

    /// Parses a manifest without touching its blobs.
    fn load_manifest(&self, run_id: &str) -> Result<ChainRun, StoreError> {
        check_id(run_id).map_err(|_| StoreError::NotFound(format!("run {run_id}")))?;
        let path = self.manifest_path(run_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("run {run_id}")))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let run: ChainRun =
            canonical::from_slice(&bytes).map_err(|e| StoreError::CorruptManifest {
                run_id: run_id.to_string(),
                reason: e.to_string(),
            })?;
        if run.run_id != run_id {
            return Err(StoreError::CorruptManifest {
                run_id: run_id.to_string(),
                reason: format!("manifest names run {}", run.run_id),
            });
        }
        Ok(run)
    }

    /// Summaries, newest first; ties broken by run id for a stable order.
    pub fn list_runs(&self, filter: Option<RunStatus>) -> Result<Vec<RunSummary>, StoreError> {
        let dir = self.runs_dir();
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let Some(run_id) = entry.file_name().to_str().map(str::to_string) else {
                continue;
            };
            match self.load_manifest(&run_id) {
                Ok(run) => {
                    if filter.is_none_or(|s| s == run.status) {
                        out.push(RunSummary::of(&run));
                    }
                }
                Err(StoreError::NotFound(_)) => {}
                Err(e) => tracing::warn!(%run_id, %e, "skipping unreadable run"),
            }
        }
        out.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.run_id.cmp(&b.run_id))
        });
        Ok(out)
    }

    fn report_path(&self, run_id: &str, metric: &str, ext: &str) -> Result<PathBuf, StoreError> {
        check_id(run_id)?;
        check_id(metric)?;
        Ok(self
            .reports_dir()
            .join(run_id)
            .join(format!("{metric}.{ext}")))
    }

    /// Writes a report document, and optionally its flat CSV table.
    pub fn save_report<T: Serialize>(
        &self,
        run_id: &str,
        metric: &str,
        report: &T,
        csv: Option<&str>,
    ) -> Result<PathBuf, StoreError> {
        let path = self.report_path(run_id, metric, "json")?;
        write_atomic(
            &path,
            &canonical::to_bytes(report).expect("reports always serialize"),
        )?;
        if let Some(csv) = csv {
            write_atomic(&self.report_path(run_id, metric, "csv")?, csv.as_bytes())?;
        }
        Ok(path)
    }

    pub fn load_report(&self, run_id: &str, metric: &str) -> Result<serde_json::Value, StoreError> {
        let path = self
            .report_path(run_id, metric, "json")
            .map_err(|_| StoreError::NotFound(format!("report {run_id}/{metric}")))?;
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(format!("report {run_id}/{metric}")),
            _ => io_err(&path)(e),
        })?;
        canonical::from_slice(&bytes).map_err(|e| StoreError::CorruptManifest {
            run_id: run_id.to_string(),
            reason: format!("report {metric}: {e}"),
        })
    }
}
