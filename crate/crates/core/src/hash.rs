//! Artifact fingerprints.
//!
//! Serialized artifacts end with a CRC32 of the preceding bytes; the
//! fingerprint is the first 8 bytes of a SHA-256 over the CRC-extended
//! bytes. Fingerprints travel inside compressed files so a decoder can
//! refuse a model or bin table it was not encoded with.

use sha2::{Digest, Sha256};

pub type Fingerprint = [u8; 8];

/// CRC32 (IEEE) over `bytes`.
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// First 8 bytes of SHA-256 over bytes that already carry their CRC32 trailer.
pub fn fingerprint(crc_extended_bytes: &[u8]) -> Fingerprint {
    let digest = Sha256::digest(crc_extended_bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

pub fn fingerprint_hex(fp: &Fingerprint) -> String {
    fp.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vector() {
        // "123456789" is the classic CRC32 check string.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let a = fingerprint(b"abc");
        let b = fingerprint(b"abc");
        let c = fingerprint(b"abd");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
