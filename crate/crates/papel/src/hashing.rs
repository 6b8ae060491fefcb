//! Shared SHA-256 helpers.
//!
//! Hashes are used as stable identities: request hashes key the exchange
//! cache and make annotation runs resumable, corpus hashes pin a run to the
//! exact corpus it was produced from, and prompt content hashes identify a
//! rendered prompt. All helpers length-prefix their fields so that no two
//! distinct field tuples can collide by concatenation.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 over a sequence of fields, each length-prefixed.
pub fn hash_fields(fields: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update((field.len() as u64).to_be_bytes());
        hasher.update(field);
    }
    hex::encode(hasher.finalize())
}

/// Hex-encoded SHA-256 of a single byte string.
pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The identity of a model request: the full parameter tuple that determines
/// the (deterministic) response. Two requests share a hash exactly when the
/// model name, sampling parameters, and both prompt texts agree.
pub fn request_hash(
    model_name: &str,
    temperature: f64,
    max_tokens: u32,
    system_text: &str,
    user_text: &str,
) -> String {
    hash_fields(&[
        model_name.as_bytes(),
        &temperature.to_bits().to_be_bytes(),
        &max_tokens.to_be_bytes(),
        system_text.as_bytes(),
        user_text.as_bytes(),
    ])
}
