//! Scenario configuration: the single input record that, together with its
//! seed, fully determines a simulation run. Serialized as JSON
//! (`docs/scenario.schema.json` describes the schema); validation reports
//! every violation with its field path.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::addr::{MAX_ADDRESS_BITS, MIN_ADDRESS_BITS};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    JoinLatency,
    ChurnAvailability,
    Demo,
    Invariants,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::JoinLatency => "join_latency",
            ExperimentKind::ChurnAvailability => "churn_availability",
            ExperimentKind::Demo => "demo",
            ExperimentKind::Invariants => "invariants",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Constant { value_secs: f64 },
    Uniform { min_secs: f64, max_secs: f64 },
}

impl Default for LatencyModel {
    /// Wide-area-ish default: uniform 20..200 ms.
    fn default() -> Self {
        LatencyModel::Uniform {
            min_secs: 0.02,
            max_secs: 0.2,
        }
    }
}

/// Exponential on/off churn. Session and downtime lengths are sampled from
/// independent exponential distributions driven solely by the churn stream.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChurnModel {
    pub mean_session_secs: f64,
    pub mean_downtime_secs: f64,
    /// How many members churn; defaults to every non-owner member.
    #[serde(default)]
    pub target_population: Option<usize>,
}

impl Default for ChurnModel {
    /// 30-minute mean sessions and downtimes.
    fn default() -> Self {
        ChurnModel {
            mean_session_secs: 1800.0,
            mean_downtime_secs: 1800.0,
            target_population: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::address_bits")]
    pub address_bits: u16,
    #[serde(default = "defaults::directory_size")]
    pub directory_size: usize,
    /// Profile overlay sizes, cycled when a peer joins several profiles.
    #[serde(default = "defaults::profile_sizes")]
    pub profile_sizes: Vec<usize>,
    #[serde(default = "defaults::replication")]
    pub replication: usize,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub churn: Option<ChurnModel>,
    #[serde(default = "defaults::duration_secs")]
    pub duration_secs: f64,
    /// Directory sizes measured by the join-latency experiment; empty means
    /// "just `directory_size`".
    #[serde(default)]
    pub join_sizes: Vec<usize>,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    /// How many profile overlays the measured peer joins (k).
    #[serde(default = "defaults::profiles_per_peer")]
    pub profiles_per_peer: usize,
    #[serde(default = "defaults::probe_interval_secs")]
    pub probe_interval_secs: f64,
    /// Posts the owner writes before going offline (churn experiment).
    #[serde(default = "defaults::posts")]
    pub posts: usize,
    /// Crypto provider: "test" (deterministic, insecure) or "real".
    #[serde(default = "defaults::provider")]
    pub provider: String,
    /// Free-form caveat echoed into report headers.
    #[serde(default)]
    pub note: Option<String>,
}

mod defaults {
    pub fn seed() -> u64 {
        42
    }
    pub fn address_bits() -> u16 {
        crate::addr::DEFAULT_ADDRESS_BITS
    }
    pub fn directory_size() -> usize {
        64
    }
    pub fn profile_sizes() -> Vec<usize> {
        vec![130]
    }
    pub fn replication() -> usize {
        crate::dht::DEFAULT_REPLICATION
    }
    pub fn duration_secs() -> f64 {
        86_400.0
    }
    pub fn trials() -> usize {
        20
    }
    pub fn profiles_per_peer() -> usize {
        1
    }
    pub fn probe_interval_secs() -> f64 {
        60.0
    }
    pub fn posts() -> usize {
        10
    }
    pub fn provider() -> String {
        "test".to_string()
    }
}

impl ScenarioConfig {
    pub fn default_for(experiment: ExperimentKind) -> ScenarioConfig {
        let mut config = ScenarioConfig {
            experiment,
            seed: defaults::seed(),
            address_bits: defaults::address_bits(),
            directory_size: defaults::directory_size(),
            profile_sizes: defaults::profile_sizes(),
            replication: defaults::replication(),
            latency: LatencyModel::default(),
            churn: None,
            duration_secs: defaults::duration_secs(),
            join_sizes: Vec::new(),
            trials: defaults::trials(),
            profiles_per_peer: defaults::profiles_per_peer(),
            probe_interval_secs: defaults::probe_interval_secs(),
            posts: defaults::posts(),
            provider: defaults::provider(),
            note: None,
        };
        match experiment {
            ExperimentKind::JoinLatency => {
                config.join_sizes = vec![64, 256, 1024];
            }
            ExperimentKind::ChurnAvailability => {
                config.churn = Some(ChurnModel::default());
            }
            ExperimentKind::Demo | ExperimentKind::Invariants => {}
        }
        config
    }

    pub fn effective_join_sizes(&self) -> Vec<usize> {
        if self.join_sizes.is_empty() {
            vec![self.directory_size]
        } else {
            self.join_sizes.clone()
        }
    }

    // `!(x > 0.0)` rather than `x <= 0.0`: NaN must be rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut fail = |field: &str, message: String| {
            violations.push(Violation {
                field: field.to_string(),
                message,
            })
        };

        if !(MIN_ADDRESS_BITS..=MAX_ADDRESS_BITS).contains(&self.address_bits) {
            fail(
                "address_bits",
                format!(
                    "must be in [{MIN_ADDRESS_BITS}, {MAX_ADDRESS_BITS}], got {}",
                    self.address_bits
                ),
            );
        }
        if self.directory_size == 0 {
            fail("directory_size", "must be at least 1".into());
        }
        if self.replication == 0 {
            fail("replication", "must be at least 1".into());
        }
        if self.trials == 0 {
            fail("trials", "must be at least 1".into());
        }
        if !(self.duration_secs > 0.0) {
            fail("duration_secs", "must be positive".into());
        }
        if !(self.probe_interval_secs > 0.0) {
            fail("probe_interval_secs", "must be positive".into());
        }
        match self.latency {
            LatencyModel::Constant { value_secs } => {
                if !(value_secs >= 0.0) {
                    fail("latency.value_secs", "must be non-negative".into());
                }
            }
            LatencyModel::Uniform { min_secs, max_secs } => {
                if !(min_secs >= 0.0) {
                    fail("latency.min_secs", "must be non-negative".into());
                }
                if !(max_secs >= min_secs) {
                    fail("latency.max_secs", "must be at least min_secs".into());
                }
            }
        }
        if let Some(churn) = &self.churn {
            if !(churn.mean_session_secs > 0.0) {
                fail("churn.mean_session_secs", "must be positive".into());
            }
            if !(churn.mean_downtime_secs > 0.0) {
                fail("churn.mean_downtime_secs", "must be positive".into());
            }
            if churn.target_population == Some(0) {
                fail("churn.target_population", "must be at least 1".into());
            }
        }
        if self.profile_sizes.is_empty() && self.profiles_per_peer > 0 {
            fail(
                "profile_sizes",
                "must not be empty when profiles_per_peer > 0".into(),
            );
        }
        if self.profile_sizes.contains(&0) {
            fail("profile_sizes", "sizes must be at least 1".into());
        }
        match self.experiment {
            ExperimentKind::ChurnAvailability => {
                if self.profile_sizes.first().copied().unwrap_or(0) < 2 {
                    fail(
                        "profile_sizes",
                        "churn availability needs a profile of at least 2 members".into(),
                    );
                }
                if self.posts == 0 {
                    fail("posts", "must be at least 1".into());
                }
            }
            ExperimentKind::JoinLatency => {
                if self.join_sizes.contains(&0) {
                    fail("join_sizes", "sizes must be at least 1".into());
                }
                if self.join_sizes.windows(2).any(|w| w[1] <= w[0]) {
                    fail("join_sizes", "sizes must be strictly ascending".into());
                }
            }
            _ => {}
        }
        if self.provider != "test" && self.provider != "real" {
            fail(
                "provider",
                format!("must be \"test\" or \"real\", got {:?}", self.provider),
            );
        }

        // Capacity rule for small address spaces: keep the population well
        // below the space so id collisions stay improbable.
        if self.address_bits < 40 {
            let population = self
                .effective_join_sizes()
                .iter()
                .copied()
                .max()
                .unwrap_or(0)
                .max(self.directory_size)
                + self.profile_sizes.iter().sum::<usize>()
                + 1;
            let capacity = 1u64 << self.address_bits.min(39);
            if (population as u64).saturating_mul(4) > capacity {
                fail(
                    "address_bits",
                    format!(
                        "population {population} exceeds the safety margin of a \
                         {}-bit address space",
                        self.address_bits
                    ),
                );
            }
        }
        violations
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "experiment",
    "seed",
    "address_bits",
    "directory_size",
    "profile_sizes",
    "replication",
    "latency",
    "churn",
    "duration_secs",
    "join_sizes",
    "trials",
    "profiles_per_peer",
    "probe_interval_secs",
    "posts",
    "provider",
    "note",
];

/// Parse a JSON document into a validated config, reporting every problem
/// found (unknown fields, type mismatches, semantic violations).
pub fn parse_and_validate(value: &serde_json::Value) -> Result<ScenarioConfig, Vec<Violation>> {
    let mut violations = Vec::new();
    let Some(object) = value.as_object() else {
        return Err(vec![Violation {
            field: "(root)".into(),
            message: "config must be a JSON object".into(),
        }]);
    };
    let known: BTreeSet<&str> = KNOWN_FIELDS.iter().copied().collect();
    for key in object.keys() {
        if !known.contains(key.as_str()) {
            violations.push(Violation {
                field: key.clone(),
                message: "unknown field".into(),
            });
        }
    }
    let config = match serde_json::from_value::<ScenarioConfig>(value.clone()) {
        Ok(config) => config,
        Err(err) => {
            violations.push(Violation {
                field: "(document)".into(),
                message: err.to_string(),
            });
            return Err(violations);
        }
    };
    violations.extend(config.validate());
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(violations)
    }
}
