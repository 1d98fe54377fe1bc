//! Salted PBKDF2-HMAC-SHA256 password digests:
//! `pbkdf2-sha256$<iterations>$<salt hex>$<hash hex>`.

use rand::RngCore;
use sha2::Sha256;

use crate::model::Digest;

const SCHEME: &str = "pbkdf2-sha256";

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    out
}

pub fn hash_password(password: &str, iterations: u32, rng: &mut impl RngCore) -> String {
    let mut salt = [0u8; 16];
    rng.fill_bytes(&mut salt);
    let hash = derive(password, &salt, iterations);
    format!(
        "{SCHEME}${iterations}${}${}",
        hex_encode(&salt),
        Digest::from_bytes(hash).to_hex()
    )
}

/// Constant-time check of `password` against a stored digest. Malformed
/// digests never verify.
pub fn verify_password(password: &str, digest: &str) -> bool {
    let parts: Vec<&str> = digest.split('$').collect();
    let [SCHEME, iterations, salt, hash] = parts.as_slice() else {
        return false;
    };
    let (Ok(iterations), Some(salt), Ok(hash)) = (iterations.parse::<u32>(), hex_decode(salt), Digest::parse(hash)) else {
        return false;
    };
    if iterations == 0 {
        return false;
    }
    let got = derive(password, &salt, iterations);
    got.iter().zip(hash.as_bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verifies() {
        let mut rng = rand::thread_rng();
        let d = hash_password("correct horse", 1000, &mut rng);
        assert!(d.starts_with("pbkdf2-sha256$1000$"));
        assert!(verify_password("correct horse", &d));
        assert!(!verify_password("correct hors", &d));
        assert!(!verify_password("x", "garbage"));
        assert_ne!(d, hash_password("correct horse", 1000, &mut rng));
    }

    #[test]
    fn rfc_vector() {
        // PBKDF2-HMAC-SHA256, P="password", S="salt", c=1 (RFC 7914 style vector).
        let got = derive("password", b"salt", 1);
        assert_eq!(
            Digest::from_bytes(got).to_hex(),
            "120fb6cffcf8b32c43e7225256c4f837a86548c92ccc35480805987cb70be17b"
        );
    }
}
