//! Self-contained audit bundles: the full command log, every blob the log
//! refers to, referenced risk-register entries, and the resulting state,
//! all under a digest manifest. Bundles are canonical JSON, so exporting
//! the same audit twice gives the same bytes.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::blobs::{BlobStore, MemoryBlobStore};
use crate::canonical::{self, Digest};
use crate::ids::{AuditId, EntryId};
use crate::risk_register::{default_templates, Occurrence, RiskRegister, RiskRegisterEntry};
use crate::store::{Store, StoreError, StoredRevision};
use crate::workflow::{Audit, Command, CommandEnvelope, WorkflowError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub audit_id: AuditId,
    pub revision: u64,
    pub log_digest: Digest,
    pub state_digest: Digest,
    pub register_digest: Digest,
    pub blobs: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub manifest: Manifest,
    pub log: Vec<StoredRevision<CommandEnvelope>>,
    /// Base64 content keyed by digest.
    pub blobs: BTreeMap<Digest, String>,
    pub register: Vec<RiskRegisterEntry>,
    pub state: Audit,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error("unsupported bundle format version {0}")]
    UnsupportedVersion(u64),
    #[error("blob {0} does not match its digest")]
    BlobDigestMismatch(Digest),
    #[error("digest mismatch for {0}")]
    EntityDigestMismatch(&'static str),
    #[error("manifest blob list does not match the bundled blobs")]
    ManifestBlobs,
    #[error("unresolved reference: {0}")]
    UnresolvedRef(String),
    #[error("bundle bytes are not in canonical form")]
    NotCanonical,
    #[error("replaying the log does not reproduce the bundled state")]
    ReplayMismatch,
    #[error("audit `{0}` already exists; import with a new id")]
    Collision(AuditId),
    #[error("register entry `{0}` differs from the one already stored")]
    RegisterConflict(EntryId),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Blobs a command log needs for replay.
pub fn referenced_blobs<'a>(log: impl IntoIterator<Item = &'a CommandEnvelope>) -> BTreeSet<Digest> {
    let mut out = BTreeSet::new();
    for env in log {
        match &env.command {
            Command::ImportQuestions { source, .. } => {
                out.insert(source.clone());
            }
            Command::RegisterEvidence { item } => {
                out.insert(item.content_digest.clone());
            }
            Command::RunMonitor { log, .. } => {
                out.insert(log.clone());
            }
            _ => {}
        }
    }
    out
}

/// Register entries linked from the log.
pub fn referenced_entries<'a>(log: impl IntoIterator<Item = &'a CommandEnvelope>) -> BTreeSet<EntryId> {
    log.into_iter()
        .filter_map(|env| match &env.command {
            Command::LinkRegisterEntry { entry } => Some(entry.clone()),
            _ => None,
        })
        .collect()
}

/// Linked entries plus everything they point at, in register order.
fn entry_closure(linked: &BTreeSet<EntryId>, register: &RiskRegister) -> Result<Vec<RiskRegisterEntry>, BundleError> {
    let mut wanted: BTreeSet<EntryId> = BTreeSet::new();
    let mut stack: Vec<EntryId> = linked.iter().cloned().collect();
    while let Some(id) = stack.pop() {
        if !wanted.insert(id.clone()) {
            continue;
        }
        let e = register.get(&id).ok_or_else(|| BundleError::UnresolvedRef(format!("register entry `{id}`")))?;
        stack.extend(e.supersedes.iter().cloned());
        stack.extend(e.similar_occurrences.iter().filter_map(|o| match o {
            Occurrence::Entry(t) => Some(t.clone()),
            Occurrence::External(_) => None,
        }));
    }
    Ok(register.entries().iter().filter(|e| wanted.contains(&e.id)).cloned().collect())
}

fn digest<T: Serialize>(value: &T) -> Digest {
    canonical::digest_of(value).expect("bundle parts serialize")
}

pub fn assemble(
    log: Vec<StoredRevision<CommandEnvelope>>,
    blobs: &dyn BlobStore,
    register: &RiskRegister,
) -> Result<AuditBundle, BundleError> {
    let state = Audit::replay(log.iter().map(|r| &r.payload), blobs)?;
    let mut packed = BTreeMap::new();
    for d in referenced_blobs(log.iter().map(|r| &r.payload)) {
        let bytes = blobs
            .get(&d)
            .map_err(|e| BundleError::Malformed(e.to_string()))?
            .ok_or_else(|| BundleError::UnresolvedRef(format!("blob {d}")))?;
        if Digest::of_bytes(&bytes) != d {
            return Err(BundleError::BlobDigestMismatch(d));
        }
        packed.insert(d, B64.encode(bytes));
    }
    let entries = entry_closure(&referenced_entries(log.iter().map(|r| &r.payload)), register)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        audit_id: state.id.clone(),
        revision: state.revision,
        log_digest: digest(&log),
        state_digest: digest(&state),
        register_digest: digest(&entries),
        blobs: packed.keys().cloned().collect(),
    };
    Ok(AuditBundle { manifest, log, blobs: packed, register: entries, state })
}

pub fn encode(bundle: &AuditBundle) -> Vec<u8> {
    canonical::to_canonical_bytes(bundle).expect("bundles serialize")
}

/// Parses `bytes` and checks versions, digests, references and replay.
pub fn decode(bytes: &[u8]) -> Result<AuditBundle, BundleError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| BundleError::Malformed(e.to_string()))?;
    let version = raw
        .pointer("/manifest/format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| BundleError::Malformed("missing manifest.format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(BundleError::UnsupportedVersion(version));
    }
    let bundle: AuditBundle = serde_json::from_value(raw).map_err(|e| BundleError::Malformed(e.to_string()))?;

    let mut store = MemoryBlobStore::new();
    for (d, text) in &bundle.blobs {
        let bytes = B64.decode(text).map_err(|_| BundleError::BlobDigestMismatch(d.clone()))?;
        if &Digest::of_bytes(&bytes) != d {
            return Err(BundleError::BlobDigestMismatch(d.clone()));
        }
        store.insert_unchecked(d.clone(), bytes);
    }
    if bundle.manifest.blobs != bundle.blobs.keys().cloned().collect::<Vec<_>>() {
        return Err(BundleError::ManifestBlobs);
    }
    if digest(&bundle.log) != bundle.manifest.log_digest {
        return Err(BundleError::EntityDigestMismatch("log"));
    }
    if digest(&bundle.state) != bundle.manifest.state_digest {
        return Err(BundleError::EntityDigestMismatch("state"));
    }
    if digest(&bundle.register) != bundle.manifest.register_digest {
        return Err(BundleError::EntityDigestMismatch("register"));
    }

    for (i, rev) in bundle.log.iter().enumerate() {
        if rev.revision != i as u64 + 1 || rev.entity != bundle.manifest.audit_id.as_str() {
            return Err(BundleError::Malformed(format!("log entry {} is out of sequence", i + 1)));
        }
    }
    if let Some(d) = referenced_blobs(bundle.log.iter().map(|r| &r.payload)).into_iter().find(|d| !bundle.blobs.contains_key(d)) {
        return Err(BundleError::UnresolvedRef(format!("blob {d}")));
    }
    let have: BTreeSet<&EntryId> = bundle.register.iter().map(|e| &e.id).collect();
    for e in &bundle.register {
        let targets = e.supersedes.iter().chain(e.similar_occurrences.iter().filter_map(|o| match o {
            Occurrence::Entry(t) => Some(t),
            Occurrence::External(_) => None,
        }));
        for t in targets {
            if !have.contains(t) {
                return Err(BundleError::UnresolvedRef(format!("register entry `{t}`")));
            }
        }
    }
    if let Some(missing) = referenced_entries(bundle.log.iter().map(|r| &r.payload)).into_iter().find(|id| !have.contains(id)) {
        return Err(BundleError::UnresolvedRef(format!("register entry `{missing}`")));
    }

    let replayed = Audit::replay(bundle.log.iter().map(|r| &r.payload), &store)?;
    // Anything serde would silently drop or normalise shows up here.
    if encode(&bundle) != bytes {
        return Err(BundleError::NotCanonical);
    }
    if replayed != bundle.state || replayed.id != bundle.manifest.audit_id || replayed.revision != bundle.manifest.revision {
        return Err(BundleError::ReplayMismatch);
    }
    Ok(bundle)
}

pub fn export_bundle(store: &Store, id: &AuditId) -> Result<Vec<u8>, BundleError> {
    let log = store.log(id)?;
    let register = store.register()?;
    Ok(encode(&assemble(log, store.blobs(), &register)?))
}

/// Verifies and materialises a bundle. With `rename`, the audit is stored
/// under the new id; otherwise an existing id is a collision.
pub fn import_bundle(store: &Store, bytes: &[u8], rename: Option<AuditId>) -> Result<AuditId, BundleError> {
    let bundle = decode(bytes)?;
    let mut log = bundle.log;
    if let Some(new_id) = rename {
        for rev in &mut log {
            rev.entity = new_id.to_string();
        }
        if let Command::Create(c) = &mut log[0].payload.command {
            c.id = new_id;
        }
    }
    let mut blobs = MemoryBlobStore::new();
    for (d, text) in &bundle.blobs {
        let bytes = B64.decode(text).expect("checked by decode");
        blobs.insert_unchecked(d.clone(), bytes);
    }
    let audit = Audit::replay(log.iter().map(|r| &r.payload), &blobs)?;
    if store.contains(&audit.id) {
        return Err(BundleError::Collision(audit.id));
    }

    let existing = store.register()?;
    let mut templates = default_templates();
    templates.insert(audit.lifecycle.template.clone(), audit.lifecycle.step_ids());
    for e in &bundle.register {
        match existing.get(&e.id) {
            Some(have) if have == e => {}
            Some(_) => return Err(BundleError::RegisterConflict(e.id.clone())),
            None => {
                store.add_register_entry(e.clone(), None, &templates)?;
            }
        }
    }
    for (_, bytes) in blobs.iter() {
        store.put_blob(bytes)?;
    }
    let id = audit.id.clone();
    store.install(audit, &log).map_err(|e| match e {
        StoreError::AuditExists(id) => BundleError::Collision(id),
        other => other.into(),
    })?;
    Ok(id)
}
