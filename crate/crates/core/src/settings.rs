//! Deployment configuration shared by the service and the CLI: a TOML file
//! with `EHRSUM_*` environment overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fhir_client::EndpointConfig;

pub const ENV_PREFIX: &str = "EHRSUM_";
pub const DEFAULT_RATE_PER_MINUTE: u32 = 100;
pub const DEFAULT_QA_DISCLAIMER: &str =
    "Answers are drawn only from the retrieved record. Follow the evidence links to confirm against the source.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionMode {
    #[default]
    Stateless,
    SummaryOnly,
}

impl FromStr for RetentionMode {
    type Err = SettingsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "stateless" => Ok(RetentionMode::Stateless),
            "summary_only" | "summaryonly" => Ok(RetentionMode::SummaryOnly),
            other => Err(SettingsError::Invalid(format!("unknown retention mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Clinician,
    Administrator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Clinician => "clinician",
            Role::Administrator => "administrator",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Deterministic,
    Hosted,
}

impl FromStr for BackendChoice {
    type Err = SettingsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" => Ok(BackendChoice::Deterministic),
            "hosted" => Ok(BackendChoice::Hosted),
            other => Err(SettingsError::Invalid(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhirSettings {
    pub base_url: Option<String>,
    pub token: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_pages: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetentionSettings {
    pub mode: RetentionMode,
    pub store_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitSettings {
    pub per_minute: u32,
}

impl Default for RateLimitSettings {
    fn default() -> Self {
        Self {
            per_minute: DEFAULT_RATE_PER_MINUTE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    /// JSON-lines file; events stay in memory when unset.
    pub path: Option<PathBuf>,
    /// Per-deployment salt for patient reference hashes.
    pub salt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendChoice,
    pub url: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaSettings {
    pub enabled: bool,
    pub disclaimer_text: String,
}

impl Default for QaSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            disclaimer_text: DEFAULT_QA_DISCLAIMER.to_string(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiKey {
    pub key: String,
    pub label: String,
    pub role: Role,
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApiKey")
            .field("key", &"<redacted>")
            .field("label", &self.label)
            .field("role", &self.role)
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub fhir: FhirSettings,
    pub retention: RetentionSettings,
    pub rate_limit: RateLimitSettings,
    pub audit: AuditSettings,
    pub backend: BackendSettings,
    pub qa: QaSettings,
    pub api_keys: Vec<ApiKey>,
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, SettingsError> {
        toml::from_str(text).map_err(|e| SettingsError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, SettingsError> {
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Optional file, then the process environment, then validation.
    pub fn load(path: Option<&Path>) -> Result<Self, SettingsError> {
        let mut settings = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        settings.apply_env(std::env::vars())?;
        settings.validate()?;
        Ok(settings)
    }

    /// Applies `EHRSUM_SECTION_KEY` variables, e.g. `EHRSUM_FHIR_TOKEN`.
    /// Other variables, including unknown `EHRSUM_*` names, are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), SettingsError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let Some(name) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let v: String = v.into();
            match name {
                "FHIR_BASE_URL" => self.fhir.base_url = Some(v),
                "FHIR_TOKEN" => self.fhir.token = Some(v),
                "FHIR_TIMEOUT_MS" => self.fhir.timeout_ms = Some(parse_num(name, &v)?),
                "FHIR_MAX_PAGES" => self.fhir.max_pages = Some(parse_num(name, &v)?),
                "RETENTION_MODE" => self.retention.mode = v.parse()?,
                "RETENTION_STORE_PATH" => self.retention.store_path = Some(v.into()),
                "RATE_LIMIT_PER_MINUTE" => self.rate_limit.per_minute = parse_num(name, &v)?,
                "AUDIT_PATH" => self.audit.path = Some(v.into()),
                "AUDIT_SALT" => self.audit.salt = v,
                "BACKEND_KIND" => self.backend.kind = v.parse()?,
                "BACKEND_URL" => self.backend.url = Some(v),
                "BACKEND_MODEL" => self.backend.model = Some(v),
                "QA_ENABLED" => self.qa.enabled = parse_bool(name, &v)?,
                "QA_DISCLAIMER_TEXT" => self.qa.disclaimer_text = v,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        let bad = |m: String| Err(SettingsError::Invalid(m));
        if self.retention.mode == RetentionMode::SummaryOnly && self.retention.store_path.is_none() {
            return bad("retention.store_path is required in summary_only mode".into());
        }
        if self.rate_limit.per_minute == 0 {
            return bad("rate_limit.per_minute must be at least 1".into());
        }
        if self.backend.kind == BackendChoice::Hosted && self.backend.url.as_deref().is_none_or(str::is_empty) {
            return bad("backend.url is required for the hosted backend".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for k in &self.api_keys {
            if k.key.trim().is_empty() || k.label.trim().is_empty() {
                return bad("api keys need a non-empty key and label".into());
            }
            if !seen.insert(k.key.as_str()) {
                return bad(format!("api key for `{}` is listed twice", k.label));
            }
        }
        Ok(())
    }

    /// Endpoint configuration for the FHIR client, if a base URL is set.
    pub fn endpoint(&self) -> Option<EndpointConfig> {
        Some(self.endpoint_for(self.fhir.base_url.as_deref()?))
    }

    /// Endpoint configuration for `base_url` with the configured token,
    /// timeout and page cap.
    pub fn endpoint_for(&self, base_url: &str) -> EndpointConfig {
        let mut config = EndpointConfig::new(base_url);
        if let Some(t) = &self.fhir.token {
            config = config.with_token(t.clone());
        }
        if let Some(ms) = self.fhir.timeout_ms {
            config = config.with_timeout_ms(ms);
        }
        if let Some(p) = self.fhir.max_pages {
            config = config.with_max_pages(p);
        }
        config
    }
}

fn parse_num<T: FromStr>(name: &str, v: &str) -> Result<T, SettingsError> {
    v.trim()
        .parse()
        .map_err(|_| SettingsError::Invalid(format!("{ENV_PREFIX}{name} must be a number, got `{v}`")))
}

fn parse_bool(name: &str, v: &str) -> Result<bool, SettingsError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(SettingsError::Invalid(format!(
            "{ENV_PREFIX}{name} must be true or false, got `{v}`"
        ))),
    }
}
