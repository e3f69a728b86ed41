use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::resource::ResourceType;

/// Knobs for one synthetic patient and the server that serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityProfile {
    pub seed: u64,
    pub populated_types: BTreeSet<ResourceType>,
    /// Number of same-day copies of one medication order; 0 or 1 means none.
    pub duplicate_order_count: u32,
    /// Two glucose results with one timestamp and different values.
    pub conflicting_obs: bool,
    /// Length of the HbA1c series.
    pub lab_history_length: u32,
    pub unsupported_searches: BTreeSet<ResourceType>,
    pub flaky_5xx_rate: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("Patient must be populated")]
    PatientNotPopulated,
    #[error("Patient is a direct read and cannot be an unsupported search")]
    PatientUnsupported,
    #[error("flaky_5xx_rate must be in [0, 1), got {0}")]
    FlakyRate(f64),
    #[error("unknown profile `{0}`")]
    UnknownName(String),
}

pub const PROFILE_NAMES: &[&str] = &[
    "baseline",
    "empty-chart",
    "missing-resources",
    "conflicting-observations",
    "duplicate-orders",
    "longitudinal",
];

impl VariabilityProfile {
    /// Every type populated, three HbA1c values, nothing unusual.
    pub fn baseline(seed: u64) -> Self {
        Self {
            seed,
            populated_types: ResourceType::ALL.into_iter().collect(),
            duplicate_order_count: 0,
            conflicting_obs: false,
            lab_history_length: 3,
            unsupported_searches: BTreeSet::new(),
            flaky_5xx_rate: 0.0,
        }
    }

    /// Demographics only.
    pub fn empty_chart(seed: u64) -> Self {
        Self {
            populated_types: BTreeSet::from([ResourceType::Patient]),
            lab_history_length: 0,
            ..Self::baseline(seed)
        }
    }

    /// A server that lacks several types and rejects two searches.
    pub fn missing_resources(seed: u64) -> Self {
        let gone = [
            ResourceType::Immunization,
            ResourceType::Device,
            ResourceType::ImagingStudy,
            ResourceType::Consent,
            ResourceType::Goal,
        ];
        Self {
            populated_types: ResourceType::ALL.into_iter().filter(|t| !gone.contains(t)).collect(),
            unsupported_searches: BTreeSet::from([ResourceType::Device, ResourceType::Consent]),
            ..Self::baseline(seed)
        }
    }

    pub fn named(name: &str, seed: u64) -> Result<Self, ProfileError> {
        Ok(match name {
            "baseline" => Self::baseline(seed),
            "empty-chart" => Self::empty_chart(seed),
            "missing-resources" => Self::missing_resources(seed),
            "conflicting-observations" => Self {
                conflicting_obs: true,
                ..Self::baseline(seed)
            },
            "duplicate-orders" => Self {
                duplicate_order_count: 3,
                ..Self::baseline(seed)
            },
            "longitudinal" => Self {
                lab_history_length: 200,
                ..Self::baseline(seed)
            },
            other => return Err(ProfileError::UnknownName(other.to_string())),
        })
    }

    /// Random populated and unsupported subsets, random seeded quirks and no
    /// transient errors. Deterministic in `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_9a7e);
        let mut populated = BTreeSet::from([ResourceType::Patient]);
        let mut unsupported = BTreeSet::new();
        for rt in ResourceType::ALL.into_iter().filter(|t| *t != ResourceType::Patient) {
            if rng.random_bool(0.6) {
                populated.insert(rt);
            }
            if rng.random_bool(0.2) {
                unsupported.insert(rt);
            }
        }
        Self {
            seed,
            populated_types: populated,
            duplicate_order_count: if rng.random_bool(0.3) {
                rng.random_range(2..5)
            } else {
                0
            },
            conflicting_obs: rng.random_bool(0.3),
            lab_history_length: rng.random_range(0..12),
            unsupported_searches: unsupported,
            flaky_5xx_rate: 0.0,
        }
    }

    pub fn with_flaky_rate(mut self, rate: f64) -> Self {
        self.flaky_5xx_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !self.populated_types.contains(&ResourceType::Patient) {
            return Err(ProfileError::PatientNotPopulated);
        }
        if self.unsupported_searches.contains(&ResourceType::Patient) {
            return Err(ProfileError::PatientUnsupported);
        }
        if !(0.0..1.0).contains(&self.flaky_5xx_rate) {
            return Err(ProfileError::FlakyRate(self.flaky_5xx_rate));
        }
        Ok(())
    }

    /// Types whose data actually reaches the client.
    pub fn served_types(&self) -> impl Iterator<Item = ResourceType> + '_ {
        self.populated_types
            .iter()
            .copied()
            .filter(|t| !self.unsupported_searches.contains(t))
    }
}
