use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TwinError;

pub const DEFAULT_SESSION_TTL_MS: u64 = 3_600_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub principal: String,
    pub expires_at_ms: u64,
}

impl Session {
    pub fn is_live(&self, now_ms: u64) -> bool {
        now_ms < self.expires_at_ms
    }
}

/// Static bearer tokens, each naming a principal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authenticator {
    tokens: BTreeMap<String, String>,
    ttl_ms: u64,
}

impl Authenticator {
    /// Principals are `client-<n>` in token order.
    pub fn new<I, S>(tokens: I, ttl_ms: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.into(), format!("client-{}", i + 1)))
            .filter(|(t, _)| !t.is_empty())
            .collect();
        Authenticator { tokens, ttl_ms }
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    pub fn authenticate(&self, token: &str, now_ms: u64) -> Result<Session, TwinError> {
        let principal = self
            .tokens
            .get(token)
            .ok_or(TwinError::AuthenticationFailed)?;
        Ok(Session {
            principal: principal.clone(),
            expires_at_ms: now_ms.saturating_add(self.ttl_ms),
        })
    }

    pub fn check(&self, session: &Session, now_ms: u64) -> Result<(), TwinError> {
        if session.is_live(now_ms) && self.tokens.values().any(|p| *p == session.principal) {
            Ok(())
        } else {
            Err(TwinError::AuthenticationFailed)
        }
    }

    /// Whether a bearer token is one of the configured ones.
    pub fn accepts(&self, token: &str) -> bool {
        self.tokens.contains_key(token)
    }
}
