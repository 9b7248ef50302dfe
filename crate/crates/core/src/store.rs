//! File-backed persistence: a content-addressed blob directory plus one
//! append-only revision log per audit and one for the risk register.
//!
//! ```text
//! <root>/blobs/<sha256 hex>
//! <root>/audits/<audit id>/log.ndjson
//! <root>/register/log.ndjson
//! ```
//!
//! Each log line is a [`StoredRevision`]. Appends are fsynced before the
//! write is acknowledged. Writers to one audit are serialised and must
//! name the revision they expect; readers see the latest appended state.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blobs::BlobStore;
use crate::canonical::{self, Digest};
use crate::ids::{ActorId, AuditId};
use crate::risk_register::{RegisterError, RiskRegister, RiskRegisterEntry, TemplateSteps};
use crate::workflow::{Audit, Command, CommandEnvelope, WorkflowError};

pub const REGISTER_ENTITY: &str = "register";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRevision<T> {
    pub entity: String,
    /// Gapless, starting at 1.
    pub revision: u64,
    pub payload: T,
    pub written_at: DateTime<Utc>,
    pub actor: ActorId,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unknown audit `{0}`")]
    UnknownAudit(AuditId),
    #[error("audit `{0}` already exists")]
    AuditExists(AuditId),
    #[error("corrupt log for `{entity}` at line {line}: {problem}")]
    CorruptLog { entity: String, line: usize, problem: String },
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("audit id `{0}` must be 1-128 characters of [A-Za-z0-9._-] and not start with `.`")]
    InvalidId(AuditId),
    #[error("register is at revision {actual}, caller expected {expected}")]
    StaleRegister { expected: u64, actual: u64 },
}

impl StoreError {
    /// True for optimistic-concurrency failures.
    pub fn is_conflict(&self) -> bool {
        matches!(self, StoreError::Workflow(WorkflowError::StaleRevision { .. }) | StoreError::StaleRegister { .. })
    }
}

/// Blob directory; file names are the lowercase hex digest.
#[derive(Debug, Clone)]
pub struct FileBlobStore {
    dir: PathBuf,
}

impl FileBlobStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, digest: &Digest) -> PathBuf {
        self.dir.join(digest.as_str())
    }

    pub fn digests(&self) -> io::Result<Vec<Digest>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(d) = name.to_str().and_then(Digest::parse) {
                out.push(d);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Write-once; identical content is never rewritten.
    pub fn put_bytes(&self, bytes: &[u8]) -> io::Result<Digest> {
        let digest = Digest::of_bytes(bytes);
        let path = self.path(&digest);
        if path.exists() {
            return Ok(digest);
        }
        let tmp = self.dir.join(format!(".{}.{}", digest.as_str(), uuid::Uuid::new_v4()));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(digest)
    }

    pub fn read(&self, digest: &Digest) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path(digest)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl BlobStore for FileBlobStore {
    fn put(&mut self, bytes: &[u8]) -> io::Result<Digest> {
        self.put_bytes(bytes)
    }

    fn get(&self, digest: &Digest) -> io::Result<Option<Vec<u8>>> {
        self.read(digest)
    }
}

fn check_id(id: &AuditId) -> Result<(), StoreError> {
    let s = id.as_str();
    let ok = !s.is_empty()
        && s.len() <= 128
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.clone()))
    }
}

fn read_log<T: DeserializeOwned>(path: &Path, entity: &str) -> Result<Vec<StoredRevision<T>>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out: Vec<StoredRevision<T>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let corrupt = |problem: String| StoreError::CorruptLog { entity: entity.to_owned(), line: i + 1, problem };
        let rev: StoredRevision<T> = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if rev.revision != out.len() as u64 + 1 {
            return Err(corrupt(format!("revision {} follows {}", rev.revision, out.len())));
        }
        out.push(rev);
    }
    Ok(out)
}

fn append_line<T: Serialize>(path: &Path, rev: &StoredRevision<T>) -> Result<(), StoreError> {
    let mut line = canonical::to_canonical_bytes(rev).map_err(|e| io::Error::other(e.to_string()))?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

pub struct Store {
    root: PathBuf,
    blobs: FileBlobStore,
    audits: RwLock<BTreeMap<AuditId, Arc<Audit>>>,
    writers: Mutex<BTreeMap<AuditId, Arc<Mutex<()>>>>,
    register: RwLock<Option<RiskRegister>>,
    register_writer: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("audits"))?;
        fs::create_dir_all(root.join("register"))?;
        let blobs = FileBlobStore::open(root.join("blobs"))?;
        Ok(Self {
            root,
            blobs,
            audits: RwLock::new(BTreeMap::new()),
            writers: Mutex::new(BTreeMap::new()),
            register: RwLock::new(None),
            register_writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn blobs(&self) -> &FileBlobStore {
        &self.blobs
    }

    pub fn put_blob(&self, bytes: &[u8]) -> Result<Digest, StoreError> {
        Ok(self.blobs.put_bytes(bytes)?)
    }

    fn audit_dir(&self, id: &AuditId) -> PathBuf {
        self.root.join("audits").join(id.as_str())
    }

    fn log_path(&self, id: &AuditId) -> PathBuf {
        self.audit_dir(id).join("log.ndjson")
    }

    fn writer(&self, id: &AuditId) -> Arc<Mutex<()>> {
        self.writers.lock().expect("writer table").entry(id.clone()).or_default().clone()
    }

    pub fn contains(&self, id: &AuditId) -> bool {
        self.log_path(id).exists()
    }

    pub fn list_audits(&self) -> Result<Vec<AuditId>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("audits"))? {
            let entry = entry?;
            if entry.path().join("log.ndjson").exists() {
                if let Some(name) = entry.file_name().to_str() {
                    out.push(AuditId::new(name));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn log(&self, id: &AuditId) -> Result<Vec<StoredRevision<CommandEnvelope>>, StoreError> {
        if check_id(id).is_err() || !self.contains(id) {
            return Err(StoreError::UnknownAudit(id.clone()));
        }
        read_log(&self.log_path(id), id.as_str())
    }

    /// Current state, replayed from the log on first access.
    pub fn load(&self, id: &AuditId) -> Result<Arc<Audit>, StoreError> {
        if let Some(a) = self.audits.read().expect("audit cache").get(id) {
            return Ok(a.clone());
        }
        let log = self.log(id)?;
        let audit = Arc::new(Audit::replay(log.iter().map(|r| &r.payload), &self.blobs)?);
        self.audits.write().expect("audit cache").insert(id.clone(), audit.clone());
        Ok(audit)
    }

    /// Creates a new audit from a `Create` command.
    pub fn create(&self, env: &CommandEnvelope) -> Result<Arc<Audit>, StoreError> {
        let Command::Create(c) = &env.command else {
            return Err(WorkflowError::NotCreated.into());
        };
        check_id(&c.id)?;
        let lock = self.writer(&c.id);
        let _guard = lock.lock().expect("audit writer");
        if self.contains(&c.id) {
            return Err(StoreError::AuditExists(c.id.clone()));
        }
        let audit = Audit::create(env)?;
        fs::create_dir_all(self.audit_dir(&c.id))?;
        self.append(&audit, env)?;
        let audit = Arc::new(audit);
        self.audits.write().expect("audit cache").insert(c.id.clone(), audit.clone());
        Ok(audit)
    }

    /// Applies a command under the audit's write lock and appends it.
    pub fn apply(&self, id: &AuditId, env: &CommandEnvelope) -> Result<Arc<Audit>, StoreError> {
        let lock = self.writer(id);
        let _guard = lock.lock().expect("audit writer");
        let current = self.load(id)?;
        let next = Arc::new(current.apply(env, &self.blobs)?);
        self.append(&next, env)?;
        self.audits.write().expect("audit cache").insert(id.clone(), next.clone());
        Ok(next)
    }

    fn append(&self, after: &Audit, env: &CommandEnvelope) -> Result<(), StoreError> {
        let rev = StoredRevision {
            entity: after.id.to_string(),
            revision: after.revision,
            payload: env.clone(),
            written_at: env.at,
            actor: env.actor.clone(),
        };
        append_line(&self.log_path(&after.id), &rev)
    }

    /// Writes a complete, already verified log for a new audit.
    pub(crate) fn install(&self, audit: Audit, log: &[StoredRevision<CommandEnvelope>]) -> Result<(), StoreError> {
        check_id(&audit.id)?;
        let lock = self.writer(&audit.id);
        let _guard = lock.lock().expect("audit writer");
        if self.contains(&audit.id) {
            return Err(StoreError::AuditExists(audit.id.clone()));
        }
        fs::create_dir_all(self.audit_dir(&audit.id))?;
        let mut bytes = Vec::new();
        for rev in log {
            bytes.extend(canonical::to_canonical_bytes(rev).map_err(|e| io::Error::other(e.to_string()))?);
            bytes.push(b'\n');
        }
        let tmp = self.audit_dir(&audit.id).join(".log.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.log_path(&audit.id))?;
        self.audits.write().expect("audit cache").insert(audit.id.clone(), Arc::new(audit));
        Ok(())
    }

    fn register_path(&self) -> PathBuf {
        self.root.join("register").join("log.ndjson")
    }

    pub fn register_log(&self) -> Result<Vec<StoredRevision<RiskRegisterEntry>>, StoreError> {
        read_log(&self.register_path(), REGISTER_ENTITY)
    }

    pub fn register(&self) -> Result<RiskRegister, StoreError> {
        if let Some(r) = self.register.read().expect("register cache").as_ref() {
            return Ok(r.clone());
        }
        let mut reg = RiskRegister::new();
        for rev in self.register_log()? {
            // validated when appended
            reg.restore(rev.payload);
        }
        *self.register.write().expect("register cache") = Some(reg.clone());
        Ok(reg)
    }

    /// Appends a register entry. `expected_revision`, when given, must equal
    /// the current register revision.
    pub fn add_register_entry(
        &self,
        entry: RiskRegisterEntry,
        expected_revision: Option<u64>,
        templates: &TemplateSteps,
    ) -> Result<u64, StoreError> {
        let _guard = self.register_writer.lock().expect("register writer");
        let mut reg = self.register()?;
        if let Some(expected) = expected_revision {
            if expected != reg.revision() {
                return Err(StoreError::StaleRegister { expected, actual: reg.revision() });
            }
        }
        reg.check(&entry, templates)?;
        let rev = StoredRevision {
            entity: REGISTER_ENTITY.to_owned(),
            revision: reg.revision() + 1,
            payload: entry.clone(),
            written_at: entry.recorded_at,
            actor: entry.recorded_by.clone(),
        };
        append_line(&self.register_path(), &rev)?;
        let revision = reg.add_entry(entry, templates)?;
        *self.register.write().expect("register cache") = Some(reg);
        Ok(revision)
    }
}
