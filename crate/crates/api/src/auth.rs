//! Opaque bearer tokens held server-side.

use std::collections::HashMap;

use cdp_core::hospital::{Actor, Role};
use cdp_core::model::Timestamp;
use cdp_core::CdpError;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub const ACCESS_TTL_SECS: i64 = 15 * 60;
pub const REFRESH_TTL_SECS: i64 = 14 * 24 * 60 * 60;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPair {
    pub access_token: String,
    pub refresh_token: String,
    pub token_type: String,
    pub expires_in: i64,
    pub refresh_expires_in: i64,
    pub subject: String,
    pub role: Role,
}

struct Grant {
    user_id: String,
    expires_at: Timestamp,
    consumed: bool,
}

#[derive(Default)]
pub struct Tokens {
    access: HashMap<String, Grant>,
    refresh: HashMap<String, Grant>,
}

fn random_token() -> String {
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl Tokens {
    pub fn issue(&mut self, actor: &Actor, now: Timestamp) -> TokenPair {
        self.access.retain(|_, g| g.expires_at > now);
        self.refresh.retain(|_, g| g.expires_at > now);
        let pair = TokenPair {
            access_token: random_token(),
            refresh_token: random_token(),
            token_type: "Bearer".into(),
            expires_in: ACCESS_TTL_SECS,
            refresh_expires_in: REFRESH_TTL_SECS,
            subject: actor.user_id.clone(),
            role: actor.role,
        };
        let grant = |ttl| Grant {
            user_id: actor.user_id.clone(),
            expires_at: now.plus_seconds(ttl),
            consumed: false,
        };
        self.access.insert(pair.access_token.clone(), grant(ACCESS_TTL_SECS));
        self.refresh.insert(pair.refresh_token.clone(), grant(REFRESH_TTL_SECS));
        pair
    }

    /// The subject of a live access token.
    pub fn subject(&self, token: &str, now: Timestamp) -> Result<String, CdpError> {
        let g = self.access.get(token).ok_or(CdpError::Unauthorized)?;
        if now >= g.expires_at {
            return Err(CdpError::TokenExpired);
        }
        Ok(g.user_id.clone())
    }

    /// Consumes a refresh token, returning its subject. Each refresh token
    /// works once.
    pub fn consume_refresh(&mut self, token: &str, now: Timestamp) -> Result<String, CdpError> {
        let g = self.refresh.get_mut(token).ok_or(CdpError::Unauthorized)?;
        if g.consumed {
            return Err(CdpError::Unauthorized);
        }
        if now >= g.expires_at {
            return Err(CdpError::TokenExpired);
        }
        g.consumed = true;
        Ok(g.user_id.clone())
    }
}
