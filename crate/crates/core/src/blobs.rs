//! Content-addressed blob storage.

use std::collections::BTreeMap;

use crate::canonical::Digest;

pub trait BlobStore {
    /// Stores `bytes` under their SHA-256 digest.
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<Digest>;

    fn get(&self, digest: &Digest) -> std::io::Result<Option<Vec<u8>>>;

    fn contains(&self, digest: &Digest) -> std::io::Result<bool> {
        Ok(self.get(digest)?.is_some())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryBlobStore {
    blobs: BTreeMap<Digest, Vec<u8>>,
}

impl MemoryBlobStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &Vec<u8>)> {
        self.blobs.iter()
    }

    /// Writes bytes under an arbitrary key without hashing. Used to simulate
    /// storage corruption.
    pub fn insert_unchecked(&mut self, digest: Digest, bytes: Vec<u8>) {
        self.blobs.insert(digest, bytes);
    }
}

impl BlobStore for MemoryBlobStore {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<Digest> {
        let digest = Digest::of_bytes(bytes);
        self.blobs.entry(digest.clone()).or_insert_with(|| bytes.to_vec());
        Ok(digest)
    }

    fn get(&self, digest: &Digest) -> std::io::Result<Option<Vec<u8>>> {
        Ok(self.blobs.get(digest).cloned())
    }
}
