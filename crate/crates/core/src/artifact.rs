//! Image artifacts: the explicit per-step state of a chain.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::scene::{SceneDocument, SceneError};

/// Hex-encoded SHA-256 of an artifact payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactId(String);

impl ArtifactId {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    /// Accepts only a well-formed 64-char lowercase hex digest.
    pub fn parse(text: &str) -> Option<Self> {
        let ok = text.len() == 64 && text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Self(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    RasterPng,
    SceneDocument,
}

/// Reference to a stored artifact, as recorded in run manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub id: ArtifactId,
    pub media_kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageArtifact {
    pub id: ArtifactId,
    pub media_kind: MediaKind,
    pub bytes: Vec<u8>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact id {expected} does not match payload hash {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("payload is not a PNG image")]
    NotPng,
    #[error("artifact is not a scene document")]
    NotScene,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl ImageArtifact {
    pub fn from_scene(scene: &SceneDocument) -> Self {
        let bytes = scene.to_canonical_bytes();
        Self {
            id: ArtifactId::of_bytes(&bytes),
            media_kind: MediaKind::SceneDocument,
            bytes,
            width: None,
            height: None,
        }
    }

    pub fn from_png(bytes: Vec<u8>) -> Result<Self, ArtifactError> {
        let (width, height) = png_dimensions(&bytes).ok_or(ArtifactError::NotPng)?;
        Ok(Self {
            id: ArtifactId::of_bytes(&bytes),
            media_kind: MediaKind::RasterPng,
            bytes,
            width: Some(width),
            height: Some(height),
        })
    }

    /// Rebuilds an artifact from stored bytes, checking the hash and, for
    /// scene documents, that the payload parses.
    pub fn from_stored(reference: &ArtifactRef, bytes: Vec<u8>) -> Result<Self, ArtifactError> {
        let actual = ArtifactId::of_bytes(&bytes);
        if actual != reference.id {
            return Err(ArtifactError::HashMismatch {
                expected: reference.id.to_string(),
                actual: actual.to_string(),
            });
        }
        match reference.media_kind {
            MediaKind::SceneDocument => {
                SceneDocument::from_bytes(&bytes)?;
                Ok(Self {
                    id: actual,
                    media_kind: MediaKind::SceneDocument,
                    bytes,
                    width: None,
                    height: None,
                })
            }
            MediaKind::RasterPng => Self::from_png(bytes),
        }
    }

    pub fn reference(&self) -> ArtifactRef {
        ArtifactRef {
            id: self.id.clone(),
            media_kind: self.media_kind,
            width: self.width,
            height: self.height,
        }
    }

    pub fn scene(&self) -> Result<SceneDocument, ArtifactError> {
        match self.media_kind {
            MediaKind::SceneDocument => Ok(SceneDocument::from_bytes(&self.bytes)?),
            MediaKind::RasterPng => Err(ArtifactError::NotScene),
        }
    }

    /// Empty scene standing in for the missing I_0 before the first step.
    pub fn blank() -> Self {
        Self::from_scene(&SceneDocument::default())
    }
}

/// Guesses the media kind of a stored blob from its leading bytes.
pub fn sniff_media_kind(bytes: &[u8]) -> MediaKind {
    if png_dimensions(bytes).is_some() {
        MediaKind::RasterPng
    } else {
        MediaKind::SceneDocument
    }
}

fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
    if bytes.len() < 24 || bytes[..8] != SIGNATURE || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let width = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let height = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_is_sha256_hex() {
        let id = ArtifactId::of_bytes(b"abc");
        assert_eq!(
            id.as_str(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(ArtifactId::parse(id.as_str()).is_some());
        assert!(ArtifactId::parse("../etc/passwd").is_none());
    }

    #[test]
    fn stored_bytes_are_verified() {
        let art = ImageArtifact::blank();
        let mut bytes = art.bytes.clone();
        assert!(ImageArtifact::from_stored(&art.reference(), bytes.clone()).is_ok());
        bytes[0] ^= 1;
        assert!(matches!(
            ImageArtifact::from_stored(&art.reference(), bytes),
            Err(ArtifactError::HashMismatch { .. })
        ));
    }

    #[test]
    fn png_header_is_read() {
        let mut png = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 13];
        png.extend_from_slice(b"IHDR");
        png.extend_from_slice(&640u32.to_be_bytes());
        png.extend_from_slice(&480u32.to_be_bytes());
        let art = ImageArtifact::from_png(png).unwrap();
        assert_eq!((art.width, art.height), (Some(640), Some(480)));
        assert!(ImageArtifact::from_png(b"not a png at all........".to_vec()).is_err());
    }
}
