//! SHA-256 content hashing and the integrity check every other role relies on.

use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Read buffer used by [`compute_hash`].
pub const HASH_CHUNK_SIZE: usize = 64 * 1024;

/// Marker carried in serde errors so the wire layer can tell a malformed
/// digest (validation) apart from a wrong JSON shape (schema).
pub(crate) const INVALID_HASH_MARKER: &str = "invalid content hash";

/// A SHA-256 digest. Always rendered as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash([u8; 32]);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseHashError {
    #[error("expected 64 hex characters, got {0}")]
    Length(usize),
    #[error("non-canonical character {0:?} (only 0-9 and a-f are allowed)")]
    Character(char),
}

impl ContentHash {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Hash an in-memory buffer.
    pub fn of(bytes: &[u8]) -> Self {
        let mut hasher = ContentHasher::new();
        hasher.update(bytes);
        hasher.finish()
    }

    /// Parse user input: surrounding whitespace is trimmed and uppercase hex is
    /// folded to lowercase. Wire decoding uses the strict [`FromStr`] instead.
    pub fn parse_lenient(input: &str) -> Result<Self, ParseHashError> {
        input.trim().to_ascii_lowercase().parse()
    }
}

impl FromStr for ContentHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(ParseHashError::Length(s.chars().count()));
        }
        if let Some(c) = s.chars().find(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(ParseHashError::Character(c));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseHashError::Length(s.len()))?;
        Ok(Self(out))
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse()
            .map_err(|e| serde::de::Error::custom(format!("{INVALID_HASH_MARKER} {raw:?}: {e}")))
    }
}

/// Incremental SHA-256 over a byte stream delivered in arbitrary chunks.
#[derive(Default, Clone)]
pub struct ContentHasher {
    inner: Sha256,
    len: u64,
}

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, chunk: &[u8]) {
        self.inner.update(chunk);
        self.len += chunk.len() as u64;
    }

    /// Bytes consumed so far.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> ContentHash {
        ContentHash(self.inner.finalize().into())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("read failed after {position} bytes: {source}")]
pub struct HashError {
    pub position: u64,
    #[source]
    pub source: io::Error,
}

/// Hash everything `reader` yields, reading [`HASH_CHUNK_SIZE`] bytes at a time.
pub fn compute_hash<R: Read>(mut reader: R) -> Result<ContentHash, HashError> {
    let mut hasher = ContentHasher::new();
    let mut buf = vec![0u8; HASH_CHUNK_SIZE];
    loop {
        match reader.read(&mut buf) {
            Ok(0) => return Ok(hasher.finish()),
            Ok(n) => hasher.update(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(source) => {
                return Err(HashError {
                    position: hasher.len(),
                    source,
                })
            }
        }
    }
}

/// Hash a file on disk, returning the digest and the number of bytes read.
pub fn hash_file(path: &Path) -> Result<(ContentHash, u64), HashError> {
    let file = File::open(path).map_err(|source| HashError {
        position: 0,
        source,
    })?;
    let mut counted = CountingReader {
        inner: file,
        count: 0,
    };
    let hash = compute_hash(&mut counted)?;
    Ok((hash, counted.count))
}

struct CountingReader<R> {
    inner: R,
    count: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count += n as u64;
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationOutcome {
    Match,
    /// Carries the digest actually found; never equal to the expected one.
    Mismatch {
        actual: ContentHash,
    },
}

impl VerificationOutcome {
    pub fn is_match(&self) -> bool {
        matches!(self, VerificationOutcome::Match)
    }
}

/// Compare the SHA-256 of the file at `path` with `expected`.
///
/// I/O problems (missing file, directory, permission) are errors and never
/// reported as a mismatch.
pub fn verify_file(path: &Path, expected: &ContentHash) -> Result<VerificationOutcome, HashError> {
    let meta = std::fs::metadata(path).map_err(|source| HashError {
        position: 0,
        source,
    })?;
    if !meta.is_file() {
        return Err(HashError {
            position: 0,
            source: io::Error::new(io::ErrorKind::InvalidInput, "not a regular file"),
        });
    }
    let (actual, _) = hash_file(path)?;
    if &actual == expected {
        Ok(VerificationOutcome::Match)
    } else {
        Ok(VerificationOutcome::Mismatch { actual })
    }
}
