use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Ppa,
    DirectGen,
    DialogRetr,
    SimOap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    Context,
    #[default]
    Response,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryType {
    Utterance,
    Summary,
    #[default]
    Persona,
}

macro_rules! wire_names {
    ($ty:ty { $($variant:ident => $wire:literal, $label:literal;)* }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),*];

            /// Snake-case name used in JSON, CSV and CLI flags.
            pub fn wire_name(self) -> &'static str {
                match self { $(<$ty>::$variant => $wire),* }
            }

            /// Row label used in report tables.
            pub fn label(self) -> &'static str {
                match self { $(<$ty>::$variant => $label),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.wire_name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($wire => Ok(<$ty>::$variant),)*
                    other => Err(format!(
                        "unknown value {other:?}; expected one of: {}",
                        [$($wire),*].join(", ")
                    )),
                }
            }
        }
    };
}

wire_names!(Strategy {
    Ppa => "ppa", "PPA";
    DirectGen => "direct_gen", "DirectGen";
    DialogRetr => "dialog_retr", "DialogRetr";
    SimOap => "sim_oap", "SimOAP";
});

wire_names!(QueryType {
    Context => "context", "Context";
    Response => "response", "Response (R_g)";
    Gold => "gold", "Gold";
});

wire_names!(HistoryType {
    Utterance => "utterance", "Utterance";
    Summary => "summary", "Summary";
    Persona => "persona", "Persona";
});

fn default_k() -> usize {
    StrategyConfig::DEFAULT_K
}

fn default_theta() -> f64 {
    StrategyConfig::DEFAULT_THETA
}

fn default_oversample() -> usize {
    StrategyConfig::DEFAULT_OVERSAMPLE_N
}

fn default_temperature() -> f64 {
    StrategyConfig::DEFAULT_GENERATION_TEMPERATURE
}

/// Which strategy to run and how it retrieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub query_type: QueryType,
    #[serde(default)]
    pub history_type: HistoryType,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Candidates sampled by SimOAP.
    #[serde(default = "default_oversample")]
    pub oversample_n: usize,
    /// Also search the interlocutor's pool.
    #[serde(default)]
    pub cross_speaker: bool,
    /// Temperature of first-pass generation; refinement, extraction and
    /// summaries always use 0.
    #[serde(default = "default_temperature")]
    pub generation_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("invalid strategy config: {0}")]
pub struct ConfigError(pub String);

impl StrategyConfig {
    pub const DEFAULT_K: usize = 5;
    pub const DEFAULT_THETA: f64 = 0.2;
    pub const DEFAULT_OVERSAMPLE_N: usize = 5;
    pub const DEFAULT_GENERATION_TEMPERATURE: f64 = 0.7;

    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            query_type: QueryType::default(),
            history_type: HistoryType::default(),
            k: Self::DEFAULT_K,
            theta: Self::DEFAULT_THETA,
            oversample_n: Self::DEFAULT_OVERSAMPLE_N,
            cross_speaker: false,
            generation_temperature: Self::DEFAULT_GENERATION_TEMPERATURE,
            seed: None,
        }
    }

    pub fn ppa() -> Self {
        Self::new(Strategy::Ppa)
    }

    pub fn with_query_type(mut self, q: QueryType) -> Self {
        self.query_type = q;
        self
    }

    pub fn with_history_type(mut self, h: HistoryType) -> Self {
        self.history_type = h;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_oversample_n(mut self, n: usize) -> Self {
        self.oversample_n = n;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// `gold_available` says whether the caller can supply a reference
    /// response for the `gold` query type.
    pub fn validate(&self, gold_available: bool) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError("k must be positive".into()));
        }
        if self.oversample_n == 0 {
            return Err(ConfigError("oversample_n must be positive".into()));
        }
        if !self.theta.is_finite() {
            return Err(ConfigError("theta must be finite".into()));
        }
        if self.generation_temperature.is_nan() || self.generation_temperature < 0.0 {
            return Err(ConfigError("generation_temperature must be >= 0".into()));
        }
        if self.query_type == QueryType::Gold && !gold_available {
            return Err(ConfigError(
                "query type gold needs a reference response, which is not available here".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_json() {
        let cfg: StrategyConfig = serde_json::from_str(r#"{"strategy":"ppa"}"#).unwrap();
        assert_eq!(cfg, StrategyConfig::ppa());
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.theta, 0.2);
        assert_eq!(cfg.query_type, QueryType::Response);
        assert_eq!(cfg.history_type, HistoryType::Persona);
    }

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.wire_name().parse::<Strategy>().unwrap(), *s);
        }
        assert_eq!("sim-oap".parse::<Strategy>().unwrap(), Strategy::SimOap);
        assert!("bob".parse::<Strategy>().is_err());
        assert_eq!(QueryType::Response.label(), "Response (R_g)");
    }

    #[test]
    fn gold_needs_reference() {
        let cfg = StrategyConfig::ppa().with_query_type(QueryType::Gold);
        assert!(cfg.validate(false).is_err());
        assert!(cfg.validate(true).is_ok());
        assert!(StrategyConfig::ppa().with_k(0).validate(true).is_err());
        assert!(StrategyConfig::ppa().with_oversample_n(0).validate(true).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<StrategyConfig>(r#"{"strategy":"ppa","topk":3}"#).is_err());
    }
}
