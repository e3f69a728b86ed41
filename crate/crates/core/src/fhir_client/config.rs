use serde::{Deserialize, Serialize};

/// Connection settings for one FHIR R4 endpoint.
///
/// Immutable once handed to a [`FhirClient`](super::FhirClient); clone it to
/// share across concurrent callers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_pages")]
    pub max_pages: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Delay before the single retry of a 5xx or timed-out request.
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
}

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_PAGES: u32 = 50;
pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_RETRY_BACKOFF_MS: u64 = 250;

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}
fn default_max_pages() -> u32 {
    DEFAULT_MAX_PAGES
}
fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}
fn default_retry_backoff_ms() -> u64 {
    DEFAULT_RETRY_BACKOFF_MS
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("base_url is empty")]
    EmptyBaseUrl,
    #[error("base_url `{url}` is not a valid http(s) URL: {reason}")]
    InvalidBaseUrl { url: String, reason: String },
    #[error("{field} must be at least 1")]
    NotPositive { field: &'static str },
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            auth_token: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_pages: DEFAULT_MAX_PAGES,
            parallelism: DEFAULT_PARALLELISM,
            retry_backoff_ms: DEFAULT_RETRY_BACKOFF_MS,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_max_pages(mut self, max_pages: u32) -> Self {
        self.max_pages = max_pages;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_retry_backoff_ms(mut self, backoff: u64) -> Self {
        self.retry_backoff_ms = backoff;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.base_url.trim().is_empty() {
            return Err(ConfigError::EmptyBaseUrl);
        }
        let parsed = url::Url::parse(&self.base_url).map_err(|e| ConfigError::InvalidBaseUrl {
            url: self.base_url.clone(),
            reason: e.to_string(),
        })?;
        if !matches!(parsed.scheme(), "http" | "https") || parsed.host().is_none() {
            return Err(ConfigError::InvalidBaseUrl {
                url: self.base_url.clone(),
                reason: "expected an http or https URL with a host".into(),
            });
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::NotPositive { field: "timeout_ms" });
        }
        if self.max_pages == 0 {
            return Err(ConfigError::NotPositive { field: "max_pages" });
        }
        if self.parallelism == 0 {
            return Err(ConfigError::NotPositive { field: "parallelism" });
        }
        Ok(())
    }

    /// Base URL without a trailing slash.
    pub fn base(&self) -> &str {
        self.base_url.trim_end_matches('/')
    }
}
