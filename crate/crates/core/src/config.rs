//! Experiment configuration: a strict JSON schema with cross-field default
//! resolution. Unknown keys are rejected, omitted keys fall back to
//! documented defaults, and validation errors name the offending key.
//!
//! Parsing goes through a raw mirror of the file schema in which every
//! field is optional; `TryFrom` then resolves defaults that depend on other
//! fields (the malicious count from the population size, the learning rate
//! from the task, rule parameters from the population). A resolved config
//! serializes with every field concrete, so parse ∘ serialize is the
//! identity on resolved configs.

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackKind, AttackSpec};
use crate::aggregators::AggregationRule;
use crate::cohort::{PartitionMode, Task};
use crate::engine::{PopulationConfig, ServerConfig};
use crate::error::{Error, Result};
use crate::fedra::RatioMode;

/// Lognormal sample-count distribution: clients draw their quantity from
/// exp(N(ln(target_mean) − log_sigma²/2, log_sigma²)), rounded, floored at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityConfig {
    pub target_mean: f64,
    pub log_sigma: f64,
}

/// Paths to IDX image and label files for classification tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Deterministically subsample the training set to this many records.
    pub subset: Option<usize>,
}

/// Aggregation rule as written in config files. Parameters left out of the
/// file resolve against the population when the rule is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    FedAvgWeighted,
    Krum {
        m_tilde: Option<usize>,
    },
    MKrum {
        m_tilde: Option<usize>,
        count: Option<usize>,
    },
    Median,
    Trimean {
        trim_k: Option<usize>,
    },
    Bulyan {
        m_tilde: Option<usize>,
    },
    NormBound {
        threshold: Option<f64>,
    },
    Rfa {
        max_iters: Option<usize>,
        smoothing: Option<f64>,
        tolerance: Option<f64>,
    },
    Truncate {
        top_fraction: Option<f64>,
        mass_fraction: Option<f64>,
        trim_k: Option<usize>,
    },
    FedRa {
        gamma: Option<f64>,
        /// Forces the kept-count estimate in dynamic mode; None lets the
        /// estimator run.
        m_tilde_override: Option<usize>,
    },
}

impl RuleSpec {
    /// The server's working per-round malicious estimate ⌈n·M̃/N⌉, the
    /// default for every rule parameter of that flavor.
    fn initial_estimate(pop: &PopulationConfig) -> usize {
        (pop.round_size * pop.assumed_malicious).div_ceil(pop.total)
    }

    /// Looks a rule up by its config tag, with every parameter defaulted.
    pub fn by_name(name: &str) -> Result<RuleSpec> {
        Ok(match name {
            "fed_avg_weighted" => RuleSpec::FedAvgWeighted,
            "krum" => RuleSpec::Krum { m_tilde: None },
            "m_krum" => RuleSpec::MKrum {
                m_tilde: None,
                count: None,
            },
            "median" => RuleSpec::Median,
            "trimean" => RuleSpec::Trimean { trim_k: None },
            "bulyan" => RuleSpec::Bulyan { m_tilde: None },
            "norm_bound" => RuleSpec::NormBound { threshold: None },
            "rfa" => RuleSpec::Rfa {
                max_iters: None,
                smoothing: None,
                tolerance: None,
            },
            "truncate" => RuleSpec::Truncate {
                top_fraction: None,
                mass_fraction: None,
                trim_k: None,
            },
            "fed_ra" => RuleSpec::FedRa {
                gamma: None,
                m_tilde_override: None,
            },
            _ => {
                return Err(Error::invalid(
                    "rule",
                    format!("unknown rule `{name}`"),
                ))
            }
        })
    }

    /// Fills every omitted parameter from the population, leaving explicit
    /// values untouched. `m_tilde_override` stays as written: None means
    /// the estimator decides.
    pub fn resolved(&self, pop: &PopulationConfig) -> RuleSpec {
        let m0 = Self::initial_estimate(pop);
        let n = pop.round_size;
        match self.clone() {
            RuleSpec::FedAvgWeighted => RuleSpec::FedAvgWeighted,
            RuleSpec::Krum { m_tilde } => RuleSpec::Krum {
                m_tilde: Some(m_tilde.unwrap_or(m0)),
            },
            RuleSpec::MKrum { m_tilde, count } => {
                let m = m_tilde.unwrap_or(m0);
                RuleSpec::MKrum {
                    m_tilde: Some(m),
                    count: Some(count.unwrap_or_else(|| n.saturating_sub(m + 2).max(1))),
                }
            }
            RuleSpec::Median => RuleSpec::Median,
            RuleSpec::Trimean { trim_k } => RuleSpec::Trimean {
                trim_k: Some(trim_k.unwrap_or(m0)),
            },
            RuleSpec::Bulyan { m_tilde } => RuleSpec::Bulyan {
                m_tilde: Some(m_tilde.unwrap_or(m0)),
            },
            RuleSpec::NormBound { threshold } => RuleSpec::NormBound {
                threshold: Some(threshold.unwrap_or(1.0)),
            },
            RuleSpec::Rfa {
                max_iters,
                smoothing,
                tolerance,
            } => RuleSpec::Rfa {
                max_iters: Some(max_iters.unwrap_or(100)),
                smoothing: Some(smoothing.unwrap_or(1e-6)),
                tolerance: Some(tolerance.unwrap_or(1e-10)),
            },
            RuleSpec::Truncate {
                top_fraction,
                mass_fraction,
                trim_k,
            } => RuleSpec::Truncate {
                top_fraction: Some(top_fraction.unwrap_or(0.1)),
                mass_fraction: Some(mass_fraction.unwrap_or(0.5)),
                trim_k: Some(trim_k.unwrap_or(m0)),
            },
            RuleSpec::FedRa {
                gamma,
                m_tilde_override,
            } => RuleSpec::FedRa {
                gamma: Some(gamma.unwrap_or(0.1)),
                m_tilde_override,
            },
        }
    }

    /// Builds the runtime rule against a (possibly truncated) population.
    pub fn to_rule(&self, pop: &PopulationConfig) -> Result<AggregationRule> {
        Ok(match self.resolved(pop) {
            RuleSpec::FedAvgWeighted => AggregationRule::FedAvgWeighted,
            RuleSpec::Krum { m_tilde } => AggregationRule::Krum {
                assumed_malicious: m_tilde.unwrap(),
            },
            RuleSpec::MKrum { m_tilde, count } => AggregationRule::MKrum {
                assumed_malicious: m_tilde.unwrap(),
                count: count.unwrap(),
            },
            RuleSpec::Median => AggregationRule::Median,
            RuleSpec::Trimean { trim_k } => AggregationRule::Trimean {
                trim_k: trim_k.unwrap(),
            },
            RuleSpec::Bulyan { m_tilde } => AggregationRule::Bulyan {
                assumed_malicious: m_tilde.unwrap(),
            },
            RuleSpec::NormBound { threshold } => AggregationRule::NormBound {
                threshold: threshold.unwrap(),
            },
            RuleSpec::Rfa {
                max_iters,
                smoothing,
                tolerance,
            } => AggregationRule::Rfa {
                max_iters: max_iters.unwrap(),
                smoothing: smoothing.unwrap(),
                tolerance: tolerance.unwrap(),
            },
            RuleSpec::Truncate {
                top_fraction,
                mass_fraction,
                trim_k,
            } => AggregationRule::Truncate {
                top_fraction: top_fraction.unwrap(),
                mass_fraction: mass_fraction.unwrap(),
                trim_k: trim_k.unwrap(),
            },
            RuleSpec::FedRa {
                gamma,
                m_tilde_override,
            } => AggregationRule::FedRa {
                gamma: gamma.unwrap(),
                total_clients: pop.total,
                assumed_total_malicious: pop.assumed_malicious,
                ratio_mode: pop.ratio_mode,
                mcne_override: m_tilde_override,
            },
        })
    }
}

/// Looks an attack kind up by its config tag, with default parameters.
pub fn attack_by_name(name: &str) -> Result<AttackKind> {
    Ok(match name {
        "none" => AttackKind::None,
        "label_flip" => AttackKind::LabelFlip,
        "lie" => AttackKind::Lie { z: None },
        "optimize" => AttackKind::Optimize { lambda: 4.0 },
        _ => {
            return Err(Error::invalid(
                "attack",
                format!("unknown attack `{name}`"),
            ))
        }
    })
}

/// A fully resolved experiment description. Every field is concrete; the
/// only surviving `None`s mean "not applicable" rather than "default me".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct ExperimentConfig {
    pub task: Task,
    pub population: PopulationConfig,
    pub partition: PartitionMode,
    pub quantities: QuantityConfig,
    pub rule: RuleSpec,
    pub attack: AttackSpec,
    pub rounds: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub server: ServerConfig,
    pub data: Option<DataConfig>,
    pub output_dir: String,
}

impl ExperimentConfig {
    /// Re-resolves rule parameters against the current population and
    /// re-validates. Call after mutating fields programmatically.
    pub fn resolve(&mut self) -> Result<()> {
        self.rule = self.rule.resolved(&self.population);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.population.validate()?;
        self.server.validate()?;
        self.attack.validate()?;

        if let PartitionMode::NonIid {
            single_class_fraction,
        } = self.partition
        {
            if !(0.0..=1.0).contains(&single_class_fraction) {
                return Err(Error::invalid(
                    "partition.single_class_fraction",
                    "must be in [0, 1]",
                ));
            }
        }
        if !(self.quantities.target_mean >= 1.0) || !self.quantities.target_mean.is_finite() {
            return Err(Error::invalid(
                "quantities.target_mean",
                "must be finite and at least 1",
            ));
        }
        if !(self.quantities.log_sigma >= 0.0) || !self.quantities.log_sigma.is_finite() {
            return Err(Error::invalid(
                "quantities.log_sigma",
                "must be finite and non-negative",
            ));
        }
        if self.eval_interval == 0 {
            return Err(Error::invalid("eval_interval", "must be at least 1"));
        }
        if self.output_dir.is_empty() {
            return Err(Error::invalid("output_dir", "must not be empty"));
        }

        match &self.rule {
            RuleSpec::FedRa { gamma, .. } => {
                if let Some(g) = gamma {
                    if !(*g > 0.0 && *g <= 0.5) {
                        return Err(Error::invalid("rule.gamma", "must be in (0, 0.5]"));
                    }
                }
            }
            RuleSpec::NormBound { threshold } => {
                if let Some(t) = threshold {
                    if !(*t > 0.0) || !t.is_finite() {
                        return Err(Error::invalid("rule.threshold", "must be positive"));
                    }
                }
            }
            RuleSpec::Truncate {
                top_fraction,
                mass_fraction,
                ..
            } => {
                for (key, value) in [
                    ("rule.top_fraction", top_fraction),
                    ("rule.mass_fraction", mass_fraction),
                ] {
                    if let Some(f) = value {
                        if !(*f > 0.0 && *f < 1.0) {
                            return Err(Error::invalid(key, "must be in (0, 1)"));
                        }
                    }
                }
            }
            RuleSpec::Rfa {
                max_iters,
                smoothing,
                tolerance,
            } => {
                if max_iters == &Some(0) {
                    return Err(Error::invalid("rule.max_iters", "must be at least 1"));
                }
                if let Some(s) = smoothing {
                    if !(*s > 0.0) || !s.is_finite() {
                        return Err(Error::invalid("rule.smoothing", "must be positive"));
                    }
                }
                if let Some(t) = tolerance {
                    if !(*t >= 0.0) || !t.is_finite() {
                        return Err(Error::invalid("rule.tolerance", "must be non-negative"));
                    }
                }
            }
            RuleSpec::MKrum { count, .. } => {
                if count == &Some(0) {
                    return Err(Error::invalid("rule.count", "must be at least 1"));
                }
            }
            _ => {}
        }

        if matches!(self.attack.kind, AttackKind::LabelFlip)
            && matches!(self.task, Task::GaussianMean { .. })
        {
            return Err(Error::invalid(
                "attack.kind",
                "label_flip requires a classification task",
            ));
        }
        if matches!(self.task, Task::SoftmaxRegression { .. }) && self.data.is_none() {
            return Err(Error::invalid(
                "data",
                "softmax_regression requires IDX data paths",
            ));
        }
        if let Some(data) = &self.data {
            if data.subset == Some(0) {
                return Err(Error::invalid("data.subset", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Parses a strict JSON config, resolving all defaults.
pub fn parse(json: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
}

/// Serializes a resolved config as pretty JSON.
pub fn to_json(config: &ExperimentConfig) -> Result<String> {
    serde_json::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))
}

/// File-schema mirror in which every key is optional.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    task: Option<RawTask>,
    population: RawPopulation,
    partition: Option<RawPartition>,
    quantities: RawQuantities,
    rule: Option<RuleSpec>,
    attack: Option<AttackSpec>,
    rounds: Option<usize>,
    eval_interval: Option<usize>,
    seed: Option<u64>,
    server: RawServer,
    data: Option<DataConfig>,
    output_dir: Option<String>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawTask {
    GaussianMean {
        dim: Option<usize>,
        true_mean: Option<Vec<f64>>,
        std: Option<Vec<f64>>,
    },
    SoftmaxRegression {
        dim: Option<usize>,
        classes: Option<usize>,
        l2_reg: Option<f64>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawPopulation {
    #[serde(rename = "N")]
    total: Option<usize>,
    #[serde(rename = "M")]
    malicious: Option<usize>,
    #[serde(rename = "n")]
    round_size: Option<usize>,
    m_tilde: Option<usize>,
    ratio_mode: Option<RatioMode>,
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum RawPartition {
    Iid,
    NonIid {
        single_class_fraction: Option<f64>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawQuantities {
    target_mean: Option<f64>,
    log_sigma: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawServer {
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    bias_correction: Option<bool>,
}

impl TryFrom<RawConfig> for ExperimentConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let task = match raw.task {
            None => default_gaussian_task(None, None, None)?,
            Some(RawTask::GaussianMean {
                dim,
                true_mean,
                std,
            }) => default_gaussian_task(dim, true_mean, std)?,
            Some(RawTask::SoftmaxRegression {
                dim,
                classes,
                l2_reg,
            }) => Task::SoftmaxRegression {
                dim: dim.unwrap_or(784),
                classes: classes.unwrap_or(10),
                l2_reg: l2_reg.unwrap_or(1e-4),
            },
        };

        let total = raw.population.total.unwrap_or(500);
        let malicious = raw.population.malicious.unwrap_or(total / 10);
        let population = PopulationConfig {
            total,
            malicious,
            round_size: raw.population.round_size.unwrap_or(50),
            assumed_malicious: raw.population.m_tilde.unwrap_or(malicious),
            ratio_mode: raw.population.ratio_mode.unwrap_or(RatioMode::Fixed),
        };

        let partition = match raw.partition {
            None | Some(RawPartition::Iid) => PartitionMode::Iid,
            Some(RawPartition::NonIid {
                single_class_fraction,
            }) => PartitionMode::NonIid {
                single_class_fraction: single_class_fraction.unwrap_or(0.9),
            },
        };

        let quantities = QuantityConfig {
            target_mean: raw.quantities.target_mean.unwrap_or(20.0),
            log_sigma: raw.quantities.log_sigma.unwrap_or(3.0),
        };

        let server = ServerConfig {
            learning_rate: raw.server.learning_rate.unwrap_or(match task {
                Task::GaussianMean { .. } => 0.01,
                Task::SoftmaxRegression { .. } => 0.05,
            }),
            beta1: raw.server.beta1.unwrap_or(0.9),
            beta2: raw.server.beta2.unwrap_or(0.999),
            epsilon: raw.server.epsilon.unwrap_or(1e-8),
            bias_correction: raw.server.bias_correction.unwrap_or(true),
        };

        let mut config = ExperimentConfig {
            task,
            population,
            partition,
            quantities,
            rule: raw.rule.unwrap_or(RuleSpec::FedRa {
                gamma: None,
                m_tilde_override: None,
            }),
            attack: raw.attack.unwrap_or_default(),
            rounds: raw.rounds.unwrap_or(200),
            eval_interval: raw.eval_interval.unwrap_or(10),
            seed: raw.seed.unwrap_or(42),
            server,
            data: raw.data,
            output_dir: raw.output_dir.unwrap_or_else(|| "out".to_string()),
        };
        config.resolve()?;
        Ok(config)
    }
}

fn default_gaussian_task(
    dim: Option<usize>,
    true_mean: Option<Vec<f64>>,
    std: Option<Vec<f64>>,
) -> Result<Task> {
    let dim = dim.unwrap_or_else(|| {
        true_mean
            .as_ref()
            .map(|v| v.len())
            .or_else(|| std.as_ref().map(|v| v.len()))
            .unwrap_or(10)
    });
    let true_mean = true_mean.unwrap_or_else(|| vec![1.0; dim]);
    let std = std.unwrap_or_else(|| vec![1.0; dim]);
    if true_mean.len() != dim {
        return Err(Error::invalid(
            "task.true_mean",
            format!("expected {dim} entries, got {}", true_mean.len()),
        ));
    }
    if std.len() != dim {
        return Err(Error::invalid(
            "task.std",
            format!("expected {dim} entries, got {}", std.len()),
        ));
    }
    Ok(Task::GaussianMean {
        dim,
        true_mean,
        std,
    })
}
