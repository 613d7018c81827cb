//! Subcommand logic shared by the binary and the integration tests.
//!
//! Failures are split into usage errors (bad flags, unreadable or invalid
//! config) and run errors (simulation or verification trouble after a valid
//! setup), which the binary maps to exit codes 2 and 1.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fedra_core::config::{self, attack_by_name, ExperimentConfig, RuleSpec};
use fedra_core::engine::{RoundRecord, Simulation};
use fedra_core::fedra::RatioMode;
use fedra_core::verify;

use crate::output;

/// Why a command failed, determining the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration: exit 2.
    Usage(String),
    /// A valid setup that failed while running: exit 1.
    Run(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Run(m) => m,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(_) => 1,
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Env var capping sweep worker threads.
pub const THREADS_ENV_VAR: &str = "FEDRA_SIM_THREADS";

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("reading config {}: {e}", path.display())))?;
    let mut config = config::parse(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

/// Runs one simulation and writes metrics.csv and summary.json into
/// `out_dir`. Returns the final-round record for sweep joins.
fn execute_run(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Option<RoundRecord>, Failure> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Run(format!("creating {}: {e}", out_dir.display())))?;
    let started = Instant::now();
    let mut sim = Simulation::new(config).map_err(|e| Failure::Run(e.to_string()))?;
    let records = sim.run().map_err(|e| Failure::Run(e.to_string()))?;

    output::write_text(&out_dir.join("metrics.csv"), &output::metrics_csv(&records))
        .map_err(Failure::Run)?;
    let summary = output::RunSummary {
        build: output::build_id(),
        seed: config.seed,
        config,
        effective_population: *sim.population(),
        final_round: records.last(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    output::write_text(&out_dir.join("summary.json"), &output::summary_json(&summary))
        .map_err(Failure::Run)?;
    Ok(records.last().cloned())
}

pub fn cmd_simulate(
    config_path: &Path,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> CmdResult {
    let config = load_config(config_path, seed_override)?;
    let echo = config::to_json(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("resolved config:\n{echo}");
    let final_round = execute_run(&config, out_dir)?;
    match final_round {
        Some(r) => println!(
            "completed {} rounds; outputs in {}",
            r.round + 1,
            out_dir.display()
        ),
        None => println!("completed 0 rounds; outputs in {}", out_dir.display()),
    }
    Ok(())
}

/// Parameters `sweep` knows how to vary.
const SWEEP_PARAMS: [&str; 6] = [
    "alpha_q",
    "rule",
    "attack",
    "ratio_mode",
    "gamma",
    "m_tilde_override",
];

fn fedra_fields(config: &mut ExperimentConfig) -> Result<(&mut Option<f64>, &mut Option<usize>), Failure> {
    match &mut config.rule {
        RuleSpec::FedRa {
            gamma,
            m_tilde_override,
        } => Ok((gamma, m_tilde_override)),
        _ => Err(Failure::Usage(
            "this parameter applies only to the fed_ra rule; set \"rule\": {\"type\": \"fed_ra\"} in the config".to_string(),
        )),
    }
}

/// Applies one sweep value to a copy of the base config and revalidates.
fn apply_param(
    config: &mut ExperimentConfig,
    param: &str,
    value: &str,
) -> Result<(), Failure> {
    let bad_value = |what: &str| {
        Failure::Usage(format!("invalid value `{value}` for {param}: expected {what}"))
    };
    match param {
        "alpha_q" => {
            config.attack.alpha_q = value.parse().map_err(|_| bad_value("a number"))?;
        }
        "rule" => {
            config.rule = RuleSpec::by_name(value).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        "attack" => {
            config.attack.kind =
                attack_by_name(value).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        "ratio_mode" => {
            config.population.ratio_mode = match value {
                "fixed" => RatioMode::Fixed,
                "dynamic" => RatioMode::Dynamic,
                _ => return Err(bad_value("fixed or dynamic")),
            };
        }
        "gamma" => {
            let parsed: f64 = value.parse().map_err(|_| bad_value("a number"))?;
            *fedra_fields(config)?.0 = Some(parsed);
        }
        "m_tilde_override" => {
            let parsed = if value == "auto" {
                None
            } else {
                Some(value.parse().map_err(|_| bad_value("a count or `auto`"))?)
            };
            *fedra_fields(config)?.1 = parsed;
        }
        _ => {
            return Err(Failure::Usage(format!(
                "unknown sweep parameter `{param}`; expected one of {}",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    config.resolve().map_err(|e| Failure::Usage(e.to_string()))
}

fn slug(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

fn worker_count(jobs: usize) -> Result<usize, Failure> {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = match std::env::var(THREADS_ENV_VAR) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
            Failure::Usage(format!("{THREADS_ENV_VAR} must be a positive integer, got `{v}`"))
        })?,
        Err(_) => available,
    };
    Ok(cap.min(jobs).max(1))
}

pub fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &str,
    out_dir: &Path,
) -> CmdResult {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Failure::Usage(format!(
            "unknown sweep parameter `{param}`; expected one of {}",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Failure::Usage("no sweep values given".to_string()));
    }

    let base = load_config(config_path, None)?;
    let mut jobs: Vec<(String, ExperimentConfig, PathBuf)> = Vec::with_capacity(values.len());
    for value in &values {
        let mut config = base.clone();
        apply_param(&mut config, param, value)?;
        let dir = out_dir.join(format!("{param}-{}", slug(value)));
        jobs.push((value.clone(), config, dir));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Run(format!("creating {}: {e}", out_dir.display())))?;

    let workers = worker_count(jobs.len())?;
    let cursor = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Option<RoundRecord>, Failure>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::Relaxed);
                let Some((_, config, dir)) = jobs.get(index) else {
                    break;
                };
                let outcome = execute_run(config, dir);
                results.lock().expect("no panicked holder")[index] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().expect("workers joined");
    let mut finals: Vec<Option<RoundRecord>> = Vec::with_capacity(jobs.len());
    for ((value, _, dir), outcome) in jobs.iter().zip(results) {
        let final_round = outcome.expect("every job ran").map_err(|e| {
            Failure::Run(format!("sweep value `{value}` failed: {}", e.message()))
        })?;
        println!("{param}={value}: outputs in {}", dir.display());
        finals.push(final_round);
    }
    let rows: Vec<output::SweepRow> = values
        .iter()
        .zip(&finals)
        .map(|(value, final_round)| output::SweepRow {
            param,
            value,
            seed: base.seed,
            final_round: final_round.as_ref(),
        })
        .collect();
    output::write_text(&out_dir.join("sweep.csv"), &output::sweep_csv(&rows))
        .map_err(Failure::Run)?;
    println!("sweep table in {}", out_dir.join("sweep.csv").display());
    Ok(())
}

pub fn cmd_verify(report_path: Option<&Path>) -> CmdResult {
    let report =
        verify::run_all(verify::DEFAULT_VERIFY_SEED).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{}", output::verify_table(&report));
    if let Some(path) = report_path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .map_err(|e| Failure::Run(format!("creating {}: {e}", parent.display())))?;
        }
        output::write_text(path, &output::verify_report_json(&report)).map_err(Failure::Run)?;
        println!("report written to {}", path.display());
    }
    if report.all_passed {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Run(format!(
            "{failed} of {} checks failed",
            report.checks.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fedra_config() -> ExperimentConfig {
        let mut config = config::parse("{}").unwrap();
        config.rule = RuleSpec::by_name("fed_ra").unwrap();
        config.resolve().unwrap();
        config
    }

    #[test]
    fn apply_alpha_q_updates_attack() {
        let mut config = fedra_config();
        apply_param(&mut config, "alpha_q", "10").unwrap();
        assert_eq!(config.attack.alpha_q, 10.0);
    }

    #[test]
    fn apply_rule_resolves_parameters() {
        let mut config = fedra_config();
        apply_param(&mut config, "rule", "m_krum").unwrap();
        match config.rule {
            RuleSpec::MKrum { m_tilde, count } => {
                assert!(m_tilde.is_some());
                assert!(count.is_some());
            }
            other => panic!("unexpected rule {other:?}"),
        }
    }

    #[test]
    fn apply_attack_keeps_alpha_q() {
        let mut config = fedra_config();
        config.attack.alpha_q = 5.0;
        apply_param(&mut config, "attack", "lie").unwrap();
        assert_eq!(config.attack.alpha_q, 5.0);
    }

    #[test]
    fn m_tilde_override_accepts_auto_and_counts() {
        let mut config = fedra_config();
        apply_param(&mut config, "m_tilde_override", "15").unwrap();
        match config.rule {
            RuleSpec::FedRa {
                m_tilde_override, ..
            } => assert_eq!(m_tilde_override, Some(15)),
            _ => unreachable!(),
        }
        apply_param(&mut config, "m_tilde_override", "auto").unwrap();
        match config.rule {
            RuleSpec::FedRa {
                m_tilde_override, ..
            } => assert_eq!(m_tilde_override, None),
            _ => unreachable!(),
        }
    }

    #[test]
    fn gamma_requires_the_quantity_robust_rule() {
        let mut config = fedra_config();
        apply_param(&mut config, "rule", "fed_avg_weighted").unwrap();
        let err = apply_param(&mut config, "gamma", "0.2").unwrap_err();
        assert!(matches!(err, Failure::Usage(_)));
    }

    #[test]
    fn unknown_param_is_a_usage_error() {
        let mut config = fedra_config();
        let err = apply_param(&mut config, "rounds", "10").unwrap_err();
        assert!(err.message().contains("unknown sweep parameter"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn out_of_range_value_is_a_usage_error() {
        let mut config = fedra_config();
        let err = apply_param(&mut config, "gamma", "0.9").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn slug_keeps_names_path_safe() {
        assert_eq!(slug("fed_avg_weighted"), "fed_avg_weighted");
        assert_eq!(slug("0.5"), "0.5");
        assert_eq!(slug("a b/c"), "a_b_c");
    }
}
