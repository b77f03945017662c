//! Compact HMAC-SHA256 signed bearer tokens (`header.payload.signature`).

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

const HEADER: &str = r#"{"alg":"HS256","typ":"JWT"}"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: String,
    /// Expiry, unix seconds.
    pub exp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("malformed token")]
    Malformed,
    #[error("bad signature")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthToken(pub String);

impl AuthToken {
    pub fn issue(secret: &[u8], sub: &str, exp: i64) -> Self {
        let header = URL_SAFE_NO_PAD.encode(HEADER);
        let claims = Claims { sub: sub.to_string(), exp };
        let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let signing_input = format!("{header}.{payload}");
        let sig = URL_SAFE_NO_PAD.encode(sign(secret, signing_input.as_bytes()));
        AuthToken(format!("{signing_input}.{sig}"))
    }

    /// Checks the signature in constant time, then expiry against `now` (unix seconds).
    pub fn verify(&self, secret: &[u8], now: i64) -> Result<Claims, TokenError> {
        let mut parts = self.0.split('.');
        let (Some(header), Some(payload), Some(sig), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(TokenError::Malformed);
        };
        let sig = URL_SAFE_NO_PAD.decode(sig).map_err(|_| TokenError::Malformed)?;
        let mut mac = HmacSha256::new_from_slice(secret).expect("hmac accepts any key length");
        mac.update(header.as_bytes());
        mac.update(b".");
        mac.update(payload.as_bytes());
        mac.verify_slice(&sig).map_err(|_| TokenError::BadSignature)?;

        let payload = URL_SAFE_NO_PAD.decode(payload).map_err(|_| TokenError::Malformed)?;
        let claims: Claims = serde_json::from_slice(&payload).map_err(|_| TokenError::Malformed)?;
        if now >= claims.exp {
            return Err(TokenError::Expired);
        }
        Ok(claims)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn sign(secret: &[u8], input: &[u8]) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(secret).expect("hmac accepts any key length");
    mac.update(input);
    mac.finalize().into_bytes().to_vec()
}

/// Constant-time byte comparison.
pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_round_trip() {
        let t = AuthToken::issue(b"secret", "alice", 2_000);
        assert_eq!(t.as_str().split('.').count(), 3);
        let c = t.verify(b"secret", 1_000).unwrap();
        assert_eq!(c, Claims { sub: "alice".into(), exp: 2_000 });
    }

    #[test]
    fn wrong_secret_and_tampering() {
        let t = AuthToken::issue(b"secret", "alice", 2_000);
        assert_eq!(t.verify(b"other", 1_000), Err(TokenError::BadSignature));

        let mut parts: Vec<String> = t.0.split('.').map(String::from).collect();
        parts[1] = URL_SAFE_NO_PAD.encode(r#"{"sub":"mallory","exp":9999999999}"#);
        let forged = AuthToken(parts.join("."));
        assert_eq!(forged.verify(b"secret", 1_000), Err(TokenError::BadSignature));
        assert_eq!(AuthToken("a.b".into()).verify(b"secret", 0), Err(TokenError::Malformed));
    }

    #[test]
    fn expiry() {
        let t = AuthToken::issue(b"s", "bob", 100);
        assert!(t.verify(b"s", 99).is_ok());
        assert_eq!(t.verify(b"s", 100), Err(TokenError::Expired));
    }

    #[test]
    fn ct_eq() {
        assert!(constant_time_eq(b"abc", b"abc"));
        assert!(!constant_time_eq(b"abc", b"abd"));
        assert!(!constant_time_eq(b"abc", b"ab"));
    }
}
