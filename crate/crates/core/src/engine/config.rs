use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::weights::ResampleScheme;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Smc,
    Importance,
    Rejection,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Smc => "smc",
            Method::Importance => "importance",
            Method::Rejection => "rejection",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smc" => Ok(Method::Smc),
            "importance" | "is" => Ok(Method::Importance),
            "rejection" => Ok(Method::Rejection),
            other => Err(Error::schema("method", format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    #[default]
    Sample,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub method: Method,
    pub n_particles: usize,
    /// Resampling fires when ESS drops below this; `None` means `N / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess_threshold: Option<f64>,
    pub max_steps: usize,
    /// Wall-clock budget in seconds.
    #[serde(with = "opt_secs", skip_serializing_if = "Option::is_none")]
    pub timeout: Option<Duration>,
    pub seed: u64,
    pub resample_scheme: ResampleScheme,
    pub select: SelectMode,
    /// Keep per-step particle texts and weights for trace output.
    pub record_steps: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            method: Method::Smc,
            n_particles: 16,
            ess_threshold: None,
            max_steps: DEFAULT_MAX_STEPS,
            timeout: None,
            seed: 0,
            resample_scheme: ResampleScheme::Multinomial,
            select: SelectMode::Sample,
            record_steps: false,
        }
    }
}

impl InferenceConfig {
    pub fn new(method: Method, n_particles: usize, seed: u64) -> Self {
        Self {
            method,
            n_particles,
            seed,
            ..Self::default()
        }
    }

    pub fn threshold(&self) -> f64 {
        self.ess_threshold.unwrap_or(self.n_particles as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::schema("n_particles", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::schema("max_steps", "must be positive"));
        }
        let t = self.threshold();
        if !(0.0..=self.n_particles as f64).contains(&t) {
            return Err(Error::schema(
                "ess_threshold",
                format!("{t} is outside [0, {}]", self.n_particles),
            ));
        }
        Ok(())
    }
}

pub(crate) mod opt_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_f64(d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let secs: Option<f64> = Option::deserialize(d)?;
        secs.map(|s| Duration::try_from_secs_f64(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
