//! Experiment configuration: a TOML file with a key for every sensor,
//! tracker, controller, safeguard, and scenario-calibration parameter.
//! Defaults reproduce the shipped evaluation matrix.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::str::FromStr;

use crate::control::SafeguardConfig;
use crate::perception::{AttackAnchor, AttackSpec, FlickerPattern};
use crate::scenario::ScenarioFamily;
use crate::sim::SimConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config schema version {0} is not supported (expected {CONFIG_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("duplicate condition label `{0}`")]
    DuplicateLabel(String),
    #[error("config declares no conditions")]
    NoConditions,
    #[error("config declares no families")]
    NoFamilies,
    #[error("runs_per_family must be at least 1")]
    ZeroRuns,
    #[error("unknown scenario family `{0}`")]
    UnknownFamily(String),
    #[error("assertion references unknown condition `{0}`")]
    UnknownAssertionCondition(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How much per-run data a batch persists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceVerbosity {
    /// Per-frame trace and ground-truth files for every run.
    Full,
    /// Metrics records only.
    #[default]
    MetricsOnly,
}

/// One experimental condition: an attack effect plus a safeguard setting,
/// evaluated over the identical scenario set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub label: String,
    pub attack: AttackSpec,
    #[serde(default)]
    pub safeguards: SafeguardConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Le => lhs <= rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }
}

/// Aggregate quantity an assertion can test. String forms: `collision_rate`,
/// `eb_rate`, `false_eb_rate`, `oscillatory_rate`, or `mean:<stat>`,
/// `p50:<stat>`, `p95:<stat>` for continuous metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssertMetric {
    CollisionRate,
    EbRate,
    FalseEbRate,
    OscillatoryRate,
    Mean(String),
    P50(String),
    P95(String),
}

impl FromStr for AssertMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "collision_rate" => Ok(AssertMetric::CollisionRate),
            "eb_rate" => Ok(AssertMetric::EbRate),
            "false_eb_rate" => Ok(AssertMetric::FalseEbRate),
            "oscillatory_rate" => Ok(AssertMetric::OscillatoryRate),
            other => match other.split_once(':') {
                Some(("mean", stat)) => Ok(AssertMetric::Mean(stat.to_string())),
                Some(("p50", stat)) => Ok(AssertMetric::P50(stat.to_string())),
                Some(("p95", stat)) => Ok(AssertMetric::P95(stat.to_string())),
                _ => Err(format!("unknown assertion metric `{other}`")),
            },
        }
    }
}

impl std::fmt::Display for AssertMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssertMetric::CollisionRate => write!(f, "collision_rate"),
            AssertMetric::EbRate => write!(f, "eb_rate"),
            AssertMetric::FalseEbRate => write!(f, "false_eb_rate"),
            AssertMetric::OscillatoryRate => write!(f, "oscillatory_rate"),
            AssertMetric::Mean(s) => write!(f, "mean:{s}"),
            AssertMetric::P50(s) => write!(f, "p50:{s}"),
            AssertMetric::P95(s) => write!(f, "p95:{s}"),
        }
    }
}

impl Serialize for AssertMetric {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AssertMetric {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_family_all() -> String {
    "all".to_string()
}

/// A pass/fail gate evaluated on the aggregated results; the `run`
/// subcommand exits nonzero when any requested assertion fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub condition: String,
    /// Family name or `"all"` for the pooled row.
    #[serde(default = "default_family_all")]
    pub family: String,
    pub metric: AssertMetric,
    pub op: CmpOp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub root_seed: u64,
    pub output_dir: PathBuf,
    pub runs_per_family: u32,
    pub families: Vec<ScenarioFamily>,
    pub trace: TraceVerbosity,
    /// Worker threads; 0 uses every core. The outputs are byte-identical
    /// at any setting.
    pub parallelism: usize,
    pub sim: SimConfig,
    pub conditions: Vec<ConditionSpec>,
    /// Omitted in a config file means no assertions (an empty list), not
    /// the built-in default set.
    #[serde(default = "Vec::new")]
    pub assertions: Vec<Assertion>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            root_seed: 42,
            output_dir: PathBuf::from("out"),
            runs_per_family: 120,
            families: ScenarioFamily::ALL.to_vec(),
            trace: TraceVerbosity::MetricsOnly,
            parallelism: 0,
            sim: SimConfig::default(),
            conditions: default_matrix_conditions(),
            assertions: vec![Assertion {
                condition: "baseline".to_string(),
                family: "all".to_string(),
                metric: AssertMetric::CollisionRate,
                op: CmpOp::Le,
                value: 0.0,
            }],
        }
    }
}

/// The shipped attack parameterizations, one per perception-error class.
pub fn default_attack(kind: &str) -> AttackSpec {
    match kind {
        "false_negative" => AttackSpec::FalseNegative {
            start_t: 4.4,
            duration: 0.8,
            target: Default::default(),
            anchor: AttackAnchor::Hazard,
        },
        "false_positive" => AttackSpec::FalsePositive {
            start_t: 6.0,
            duration: 0.2,
            phantom_gap: 5.5,
            phantom_rel_speed: 14.0,
            phantom_length: 4.5,
            anchor: AttackAnchor::RunStart,
        },
        "bias_over" => AttackSpec::DistanceBias { factor: 1.2 },
        "bias_under" => AttackSpec::DistanceBias { factor: 0.8 },
        "flicker" => AttackSpec::Flicker {
            start_t: 0.0,
            duration: 3600.0,
            pattern: FlickerPattern::Alternate,
            anchor: AttackAnchor::RunStart,
        },
        other => panic!("unknown attack kind `{other}`"),
    }
}

/// Baseline plus the five error classes, each with safeguards off and all
/// safeguards on: the default evaluation matrix.
pub fn default_matrix_conditions() -> Vec<ConditionSpec> {
    let mut out = Vec::new();
    let mut push = |label: &str, attack: AttackSpec| {
        out.push(ConditionSpec {
            label: label.to_string(),
            attack,
            safeguards: SafeguardConfig::off(),
        });
        out.push(ConditionSpec {
            label: format!("{label}+sg"),
            attack,
            safeguards: SafeguardConfig::all_on(),
        });
    };
    push("baseline", AttackSpec::None);
    push("fn", default_attack("false_negative"));
    push("fp", default_attack("false_positive"));
    push("bias_over", default_attack("bias_over"));
    push("bias_under", default_attack("bias_under"));
    push("flicker", default_attack("flicker"));
    out
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        if self.conditions.is_empty() {
            return Err(ConfigError::NoConditions);
        }
        if self.families.is_empty() {
            return Err(ConfigError::NoFamilies);
        }
        if self.runs_per_family == 0 {
            return Err(ConfigError::ZeroRuns);
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.conditions {
            if !seen.insert(c.label.clone()) {
                return Err(ConfigError::DuplicateLabel(c.label.clone()));
            }
        }
        for a in &self.assertions {
            if !self.conditions.iter().any(|c| c.label == a.condition) {
                return Err(ConfigError::UnknownAssertionCondition(a.condition.clone()));
            }
        }
        if self.sim.sensor.frame_rate <= 0.0 || self.sim.dt_phys <= 0.0 || self.sim.horizon <= 0.0 {
            return Err(ConfigError::Invalid(
                "frame_rate, dt_phys and horizon must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let parsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        let first = cfg.conditions[0].clone();
        cfg.conditions.push(first);
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::DuplicateLabel(_))
        ));
    }

    #[test]
    fn zero_runs_are_rejected() {
        let cfg = ExperimentConfig {
            runs_per_family: 0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::ZeroRuns)));
    }

    #[test]
    fn attack_specs_have_exact_config_field_names() {
        let toml_text = r#"
            [[conditions]]
            label = "fn"
            [conditions.attack]
            variant = "false_negative"
            start_t = 5.0
            duration = 0.5
            [[conditions]]
            label = "fp"
            [conditions.attack]
            variant = "false_positive"
            start_t = 3.0
            duration = 0.2
            phantom_gap = 25.0
            phantom_rel_speed = 10.0
            phantom_length = 4.5
            [[conditions]]
            label = "bias"
            [conditions.attack]
            variant = "distance_bias"
            factor = 1.2
            [[conditions]]
            label = "flk"
            [conditions.attack]
            variant = "flicker"
            start_t = 0.0
            duration = 10.0
            pattern = "alternate"
        "#;
        let cfg = ExperimentConfig::from_toml(toml_text).unwrap();
        assert_eq!(cfg.conditions.len(), 4);
        assert!(matches!(
            cfg.conditions[0].attack,
            AttackSpec::FalseNegative { .. }
        ));
        assert!(matches!(
            cfg.conditions[3].attack,
            AttackSpec::Flicker { .. }
        ));
    }

    #[test]
    fn assertion_metric_string_forms() {
        assert_eq!(
            "collision_rate".parse::<AssertMetric>().unwrap(),
            AssertMetric::CollisionRate
        );
        assert_eq!(
            "mean:peak_jerk".parse::<AssertMetric>().unwrap(),
            AssertMetric::Mean("peak_jerk".into())
        );
        assert!("bogus".parse::<AssertMetric>().is_err());
    }
}
