//! Content digests used for cache keys, prompt identities and manifests.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of a value's canonical JSON encoding.
///
/// Struct fields serialize in declaration order, so the encoding is stable as
/// long as the type definition does not change.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory values always serialize");
    sha256_hex(bytes)
}
