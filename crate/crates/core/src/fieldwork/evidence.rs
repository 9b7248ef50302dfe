use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::blobs::BlobStore;
use crate::canonical::Digest;
use crate::ids::{ActorId, EvidenceId, StepId};
use crate::workflow::AuditKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvidenceKind {
    /// Information disclosed by the developers.
    Transparency,
    /// Experiments run by the auditor through some form of access.
    Examinability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessBasis {
    Disclosed,
    GrantedAccess,
    PublicInterface,
}

impl AccessBasis {
    pub const ALL: [AccessBasis; 3] = [Self::Disclosed, Self::GrantedAccess, Self::PublicInterface];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactType {
    Datasheet,
    Factsheet,
    ModelCard,
    LogExtract,
    QueryResult,
    Document,
    Other,
}

/// Transparency evidence is always disclosed material; examinability
/// evidence comes from granted access or the public interface.
pub fn access_is_legal(kind: EvidenceKind, basis: AccessBasis) -> bool {
    match kind {
        EvidenceKind::Transparency => basis == AccessBasis::Disclosed,
        EvidenceKind::Examinability => matches!(basis, AccessBasis::GrantedAccess | AccessBasis::PublicInterface),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: EvidenceId,
    pub kind: EvidenceKind,
    pub artifact_type: ArtifactType,
    pub step_tags: BTreeSet<StepId>,
    /// Where the original lives, if anywhere. Content is always stored as a blob.
    #[serde(default)]
    pub locator: Option<String>,
    pub content_digest: Digest,
    pub collected_by: ActorId,
    pub timestamp: DateTime<Utc>,
    pub access_basis: AccessBasis,
    #[serde(default)]
    pub supersedes: Option<EvidenceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvidenceError {
    #[error("evidence `{0}` already registered")]
    Duplicate(EvidenceId),
    #[error("{kind:?} evidence cannot have access basis {basis:?}")]
    IllegalAccessBasis { kind: EvidenceKind, basis: AccessBasis },
    #[error("{audit:?} audits may not use {basis:?} evidence")]
    ForbiddenForAuditKind { audit: AuditKind, basis: AccessBasis },
    #[error("step tag `{0}` does not resolve")]
    UnresolvableStepTag(StepId),
    #[error("no blob stored for evidence `{id}` (digest {digest})")]
    MissingBlob { id: EvidenceId, digest: Digest },
    #[error("digest mismatch for evidence `{id}`: recorded {expected}, content hashes to {actual}")]
    DigestMismatch { id: EvidenceId, expected: Digest, actual: Digest },
    #[error("superseded evidence `{0}` does not exist")]
    UnknownSuperseded(EvidenceId),
    #[error("evidence `{0}` is already superseded")]
    AlreadySuperseded(EvidenceId),
    #[error("unknown evidence `{0}`")]
    Unknown(EvidenceId),
    #[error("blob store: {0}")]
    Store(String),
}

/// Append-only register of evidence items for one iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLedger {
    items: BTreeMap<EvidenceId, EvidenceItem>,
}

fn hash_stored(id: &EvidenceId, digest: &Digest, blobs: &dyn BlobStore) -> Result<(), EvidenceError> {
    let bytes = blobs
        .get(digest)
        .map_err(|e| EvidenceError::Store(e.to_string()))?
        .ok_or_else(|| EvidenceError::MissingBlob { id: id.clone(), digest: digest.clone() })?;
    let actual = Digest::of_bytes(&bytes);
    if &actual != digest {
        return Err(EvidenceError::DigestMismatch { id: id.clone(), expected: digest.clone(), actual });
    }
    Ok(())
}

impl EvidenceLedger {
    /// Validates and appends `item`. Its content must already be in `blobs`
    /// and must hash to `item.content_digest`.
    pub fn register(
        &mut self,
        item: EvidenceItem,
        audit_kind: AuditKind,
        steps: &BTreeSet<StepId>,
        blobs: &dyn BlobStore,
    ) -> Result<(), EvidenceError> {
        if !access_is_legal(item.kind, item.access_basis) {
            return Err(EvidenceError::IllegalAccessBasis { kind: item.kind, basis: item.access_basis });
        }
        if !audit_kind.permits(item.access_basis) {
            return Err(EvidenceError::ForbiddenForAuditKind { audit: audit_kind, basis: item.access_basis });
        }
        if self.items.contains_key(&item.id) {
            return Err(EvidenceError::Duplicate(item.id));
        }
        if let Some(bad) = item.step_tags.iter().find(|s| !steps.contains(*s)) {
            return Err(EvidenceError::UnresolvableStepTag(bad.clone()));
        }
        if let Some(old) = &item.supersedes {
            if !self.items.contains_key(old) {
                return Err(EvidenceError::UnknownSuperseded(old.clone()));
            }
            if self.superseded_by(old).is_some() {
                return Err(EvidenceError::AlreadySuperseded(old.clone()));
            }
        }
        hash_stored(&item.id, &item.content_digest, blobs)?;
        self.items.insert(item.id.clone(), item);
        Ok(())
    }

    /// Re-reads the blob and checks it still hashes to the recorded digest.
    pub fn verify(&self, id: &EvidenceId, blobs: &dyn BlobStore) -> Result<(), EvidenceError> {
        let item = self.items.get(id).ok_or_else(|| EvidenceError::Unknown(id.clone()))?;
        hash_stored(id, &item.content_digest, blobs)
    }

    /// Ids of every item whose blob is missing or no longer matches.
    pub fn verify_all(&self, blobs: &dyn BlobStore) -> Vec<(EvidenceId, EvidenceError)> {
        self.items
            .keys()
            .filter_map(|id| self.verify(id, blobs).err().map(|e| (id.clone(), e)))
            .collect()
    }

    pub fn get(&self, id: &EvidenceId) -> Option<&EvidenceItem> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &EvidenceId) -> bool {
        self.items.contains_key(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &EvidenceItem> {
        self.items.values()
    }

    pub fn ids(&self) -> BTreeSet<EvidenceId> {
        self.items.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn superseded_by(&self, id: &EvidenceId) -> Option<&EvidenceId> {
        self.items.values().find(|i| i.supersedes.as_ref() == Some(id)).map(|i| &i.id)
    }
}
