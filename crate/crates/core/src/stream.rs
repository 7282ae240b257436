//! Named deterministic random streams.
//!
//! Every random draw in a run comes from a stream keyed by the master seed and
//! a hierarchical name such as `shuffle/client/2/epoch/3`. The key is
//! `SHA-256(seed_le || 0x00 || name)` and the stream itself is ChaCha20, so two
//! streams with the same `(seed, name)` produce the same bytes and the order in
//! which streams are created never matters.

use alloc::format;
use alloc::string::String;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::StreamError;

/// A reproducible random byte stream identified by `(seed, name)`.
#[derive(Debug, Clone)]
pub struct DeterministicStream {
    seed: u64,
    name: String,
    rng: ChaCha20Rng,
}

/// Derives the stream for `(seed, name)`.
pub fn derive_stream(seed: u64, name: &str) -> Result<DeterministicStream, StreamError> {
    DeterministicStream::new(seed, name)
}

impl DeterministicStream {
    pub fn new(seed: u64, name: &str) -> Result<Self, StreamError> {
        if name.is_empty() {
            return Err(StreamError::EmptyName);
        }
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(name.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Ok(Self {
            seed,
            name: String::from(name),
            rng: ChaCha20Rng::from_seed(key),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Fresh stream named `<self.name>/<segment>` under the same seed.
    pub fn child(&self, segment: &str) -> Result<Self, StreamError> {
        if segment.is_empty() {
            return Err(StreamError::EmptyName);
        }
        Self::new(self.seed, &format!("{}/{}", self.name, segment))
    }
}

impl RngCore for DeterministicStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Hands out streams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> Result<DeterministicStream, StreamError> {
        DeterministicStream::new(self.seed, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec::Vec;

    fn prefix(seed: u64, name: &str, len: usize) -> Vec<u8> {
        let mut s = derive_stream(seed, name).unwrap();
        let mut buf = alloc::vec![0u8; len];
        s.fill_bytes(&mut buf);
        buf
    }

    #[test]
    fn same_inputs_same_bytes() {
        assert_eq!(prefix(42, "client/1", 64), prefix(42, "client/1", 64));
    }

    #[test]
    fn different_names_differ() {
        assert_ne!(prefix(42, "a", 64), prefix(42, "b", 64));
        assert_ne!(prefix(42, "a", 64), prefix(43, "a", 64));
    }

    #[test]
    fn empty_name_rejected() {
        assert_eq!(derive_stream(1, "").unwrap_err(), StreamError::EmptyName);
    }

    #[test]
    fn thousand_names_have_distinct_prefixes() {
        let mut seen = BTreeSet::new();
        for i in 0..1000 {
            let p = prefix(42, &format!("stream/{i}"), 16);
            assert!(seen.insert(p), "collision at {i}");
        }
    }

    #[test]
    fn child_matches_joined_name() {
        let parent = derive_stream(7, "client/2").unwrap();
        let mut a = parent.child("epoch/3").unwrap();
        let mut b = derive_stream(7, "client/2/epoch/3").unwrap();
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
