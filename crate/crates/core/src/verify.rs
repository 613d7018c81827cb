//! Independent cross-checks for the selection and statistics machinery.
//!
//! The oracles here recompute results with naive loops and exact integer
//! arithmetic, sharing no code with the implementations they check. The
//! Monte-Carlo checks validate the concentration bounds and the count
//! estimator on synthetic draws under fixed seeds, so every assertion is a
//! reproducible regression rather than a flaky statistic. [`run_all`]
//! bundles the outcomes into a serializable report for the `verify`
//! subcommand.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::aggregators::{aggregate, krum_select, AggregationRule, ClientReport};
use crate::fedra::{estimate_malicious_count, hypergeom_log_weight, ScoreTable};
use crate::numkit::UpdateVector;
use crate::rng::{derive, Stream};
use crate::{Error, Result};

/// Seed used by [`run_all`] and the CLI `verify` subcommand.
pub const DEFAULT_VERIFY_SEED: u64 = 42;

/// Environment variable that injects a deliberate failure into the
/// hypergeometric check. Lets integration tests exercise the command line's
/// failure exit path without shipping a broken check.
pub const FAULT_ENV_VAR: &str = "FEDRA_VERIFY_FAULT";

/// Outcome of one named check: the measured value, the bound it was held
/// against, and whether it passed.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub detail: String,
}

/// Full verification run, serialized by the CLI as a JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

fn raw_vectors(reports: &[ClientReport]) -> Vec<Vec<f64>> {
    reports
        .iter()
        .map(|r| (0..r.update.dim()).map(|k| r.update[k]).collect())
        .collect()
}

fn naive_squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc
}

/// Krum scores by direct definition: for each client, sort the squared
/// distances to every other update (ties by the other client's id) and sum
/// the closest `n - m̃ - 2`. Saturates the neighbor count at zero so the
/// Bulyan oracle can reuse it on shrunken sets.
fn naive_krum_scores(ids: &[u64], vectors: &[Vec<f64>], assumed_malicious: usize) -> Vec<f64> {
    let n = ids.len();
    let neighbor_count = n.saturating_sub(assumed_malicious + 2);
    let mut scores = vec![0.0; n];
    for i in 0..n {
        let mut dists: Vec<(f64, u64)> = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j != i {
                dists.push((naive_squared_distance(&vectors[i], &vectors[j]), ids[j]));
            }
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scores[i] = dists.iter().take(neighbor_count).map(|&(d, _)| d).sum();
    }
    scores
}

fn naive_rank(ids: &[u64], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(ids[a].cmp(&ids[b])));
    order
}

/// Brute-force Krum winner: full distance table, full sorts, argmin by
/// (score, client id).
pub fn brute_force_krum(reports: &[ClientReport], assumed_malicious: usize) -> Result<u64> {
    let n = reports.len();
    let needed = assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    let ids: Vec<u64> = reports.iter().map(|r| r.client_id).collect();
    let vectors = raw_vectors(reports);
    let scores = naive_krum_scores(&ids, &vectors, assumed_malicious);
    Ok(ids[naive_rank(&ids, &scores)[0]])
}

/// Brute-force mKrum: the `count` best ids in rank order plus their plain
/// average.
pub fn brute_force_multi_krum(
    reports: &[ClientReport],
    assumed_malicious: usize,
    count: usize,
) -> Result<(Vec<u64>, Vec<f64>)> {
    let n = reports.len();
    let needed = assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    if count == 0 || count > n {
        return Err(Error::invalid("count", format!("must be in 1..={n}")));
    }
    let ids: Vec<u64> = reports.iter().map(|r| r.client_id).collect();
    let vectors = raw_vectors(reports);
    let scores = naive_krum_scores(&ids, &vectors, assumed_malicious);
    let order = naive_rank(&ids, &scores);
    let picked: Vec<usize> = order.into_iter().take(count).collect();
    let dim = vectors[0].len();
    let mut mean = vec![0.0; dim];
    for &i in &picked {
        for k in 0..dim {
            mean[k] += vectors[i][k];
        }
    }
    for x in mean.iter_mut() {
        *x /= count as f64;
    }
    Ok((picked.into_iter().map(|i| ids[i]).collect(), mean))
}

/// Brute-force coordinate median over full sorted copies of every column.
pub fn brute_force_median(reports: &[ClientReport]) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let vectors = raw_vectors(reports);
    let n = vectors.len();
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        let mut column: Vec<f64> = vectors.iter().map(|v| v[k]).collect();
        column.sort_by(f64::total_cmp);
        out[k] = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    Ok(out)
}

/// Brute-force coordinate trimmed mean: sort each column, drop `trim_k` from
/// both ends, average the remainder.
pub fn brute_force_trimmed_mean(reports: &[ClientReport], trim_k: usize) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let vectors = raw_vectors(reports);
    let n = vectors.len();
    if 2 * trim_k >= n {
        return Err(Error::invalid("trim_k", "2 * trim_k must be < count"));
    }
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        let mut column: Vec<f64> = vectors.iter().map(|v| v[k]).collect();
        column.sort_by(f64::total_cmp);
        let kept = &column[trim_k..n - trim_k];
        out[k] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    Ok(out)
}

/// Brute-force Bulyan: repeatedly recompute Krum scores on the remaining
/// set and move the winner into the selection, then trim-average the
/// selection. Returns the selected ids in ascending order plus the output.
pub fn brute_force_bulyan(
    reports: &[ClientReport],
    assumed_malicious: usize,
) -> Result<(Vec<u64>, Vec<f64>)> {
    let n = reports.len();
    let needed = 4 * assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    let theta = n - 2 * assumed_malicious;
    let mut ids: Vec<u64> = reports.iter().map(|r| r.client_id).collect();
    let mut vectors = raw_vectors(reports);
    let mut picked_ids = Vec::with_capacity(theta);
    let mut picked_vectors = Vec::with_capacity(theta);
    for _ in 0..theta {
        let scores = naive_krum_scores(&ids, &vectors, assumed_malicious);
        let best = naive_rank(&ids, &scores)[0];
        picked_ids.push(ids.remove(best));
        picked_vectors.push(vectors.remove(best));
    }
    let dim = picked_vectors[0].len();
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        let mut column: Vec<f64> = picked_vectors.iter().map(|v| v[k]).collect();
        column.sort_by(f64::total_cmp);
        let kept = &column[assumed_malicious..theta - assumed_malicious];
        out[k] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    picked_ids.sort_unstable();
    Ok((picked_ids, out))
}

/// C(n, k) in exact integer arithmetic. Every prefix product is itself a
/// binomial coefficient, so the division is always exact.
fn binomial_exact(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// ln C(M̃, m̃) C(N − M̃, n − m̃) with the binomials taken exactly before the
/// single logarithm. Outside the support the product is zero, whose log is
/// the same negative-infinity sentinel the main path returns.
pub fn exact_hypergeom_log(
    total_clients: usize,
    total_malicious: usize,
    sampled: usize,
    hypothesized: usize,
) -> Result<f64> {
    if sampled > total_clients {
        return Err(Error::invalid("sampled", "must not exceed total_clients"));
    }
    if total_malicious > total_clients {
        return Err(Error::invalid(
            "total_malicious",
            "must not exceed total_clients",
        ));
    }
    if hypothesized > sampled {
        return Ok(f64::NEG_INFINITY);
    }
    let product = binomial_exact(total_malicious, hypothesized)
        * binomial_exact(total_clients - total_malicious, sampled - hypothesized);
    Ok((product as f64).ln())
}

fn l1_of_sigma(sigma: &[f64]) -> Result<f64> {
    if sigma.is_empty() {
        return Err(Error::EmptyInput("sigma"));
    }
    let mut acc = 0.0;
    for (i, &s) in sigma.iter().enumerate() {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::NonFinite {
                context: "sigma",
                index: i,
            });
        }
        acc += s;
    }
    if acc <= 0.0 {
        return Err(Error::invalid("sigma", "must have positive L1 norm"));
    }
    Ok(acc)
}

fn sample_mean_update<R: Rng>(
    quantity: u64,
    noise: &[Normal<f64>],
    rng: &mut R,
) -> Vec<f64> {
    let mut g = vec![0.0; noise.len()];
    for (k, dist) in noise.iter().enumerate() {
        let mut acc = 0.0;
        for _ in 0..quantity {
            acc += dist.sample(rng);
        }
        g[k] = acc / quantity as f64;
    }
    g
}

/// Monte-Carlo estimate of the expected L1 distance between two clients'
/// sample-mean updates, against the concentration bound
/// sqrt(2 ln 2) sqrt((q_i + q_j)/(q_i q_j)) ||σ||₁.
///
/// Returns (empirical mean, bound, empirical/bound). The ratio has the
/// q-independent analytic value sqrt(2/π)/sqrt(2 ln 2) ≈ 0.6777 because both
/// numerator and denominator carry the same quantity factor.
pub fn lemma1_check<R: Rng>(
    q_i: u64,
    q_j: u64,
    sigma: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    if q_i == 0 || q_j == 0 {
        return Err(Error::invalid("quantity", "must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let sigma_l1 = l1_of_sigma(sigma)?;
    let noise: Vec<Normal<f64>> = sigma
        .iter()
        .map(|&s| Normal::new(0.0, s).expect("validated sigma"))
        .collect();
    let mut acc = 0.0;
    for _ in 0..trials {
        let gi = sample_mean_update(q_i, &noise, rng);
        let gj = sample_mean_update(q_j, &noise, rng);
        let mut dist = 0.0;
        for k in 0..noise.len() {
            dist += (gi[k] - gj[k]).abs();
        }
        acc += dist;
    }
    let empirical = acc / trials as f64;
    let q_factor = ((q_i + q_j) as f64 / (q_i as f64 * q_j as f64)).sqrt();
    let bound = (2.0 * 2.0_f64.ln()).sqrt() * q_factor * sigma_l1;
    Ok((empirical, bound, empirical / bound))
}

/// Monte-Carlo estimate of E[max over n clients of ||g − μ||₁] for
/// sample-mean updates centered on μ = 0, against the bound
/// sqrt(2 ln 2n) ||σ||₁ / sqrt(q). Returns (empirical max mean, bound).
pub fn lemma3_max_check<R: Rng>(
    n: usize,
    q: u64,
    sigma: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InsufficientClients {
            needed: 2,
            actual: n,
        });
    }
    if q == 0 {
        return Err(Error::invalid("quantity", "must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let sigma_l1 = l1_of_sigma(sigma)?;
    let noise: Vec<Normal<f64>> = sigma
        .iter()
        .map(|&s| Normal::new(0.0, s).expect("validated sigma"))
        .collect();
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut worst = 0.0_f64;
        for _ in 0..n {
            let g = sample_mean_update(q, &noise, rng);
            let dist: f64 = g.iter().map(|x| x.abs()).sum();
            worst = worst.max(dist);
        }
        acc += worst;
    }
    let bound = (2.0 * (2.0 * n as f64).ln()).sqrt() * sigma_l1 / (q as f64).sqrt();
    Ok((acc / trials as f64, bound))
}

/// Fraction of synthetic rounds on which the count estimator recovers the
/// true per-round malicious count exactly.
///
/// Each trial draws the true count hypergeometrically (sample `round_size`
/// ids out of `total_clients` with `total_malicious` marked), synthesizes
/// benign scores from Normal(0, 1) and malicious scores from
/// Normal(separation, 1), and runs the real estimator on them. Scores are
/// shifted to be non-negative before scoring; the estimator is exactly
/// shift-invariant, so this only satisfies the score table's domain check.
pub fn mcne_recovery<R: Rng>(
    total_clients: usize,
    total_malicious: usize,
    round_size: usize,
    separation: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid("separation", "must be finite and >= 0"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if round_size > total_clients || total_malicious > total_clients {
        return Err(Error::InsufficientClients {
            needed: round_size.max(total_malicious),
            actual: total_clients,
        });
    }
    let benign = Normal::new(0.0, 1.0).expect("unit normal");
    let malicious = Normal::new(separation, 1.0).expect("unit normal");
    let mut hits = 0usize;
    for _ in 0..trials {
        let marked = rand::seq::index::sample(rng, total_clients, round_size)
            .into_iter()
            .filter(|&i| i < total_malicious)
            .count();
        let mut scores: Vec<(u64, f64)> = Vec::with_capacity(round_size);
        for i in 0..round_size {
            let raw = if i < marked {
                malicious.sample(rng)
            } else {
                benign.sample(rng)
            };
            scores.push((i as u64, raw));
        }
        let min = scores
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            for (_, s) in scores.iter_mut() {
                *s -= min;
            }
        }
        let table = ScoreTable::from_scores(scores)?;
        if estimate_malicious_count(&table, total_clients, total_malicious)? == marked {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Mean estimate over pure-noise rounds (separation 0), reported to show
/// where the estimator settles when scores carry no signal.
fn mcne_no_signal_mean<R: Rng>(
    total_clients: usize,
    total_malicious: usize,
    round_size: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let benign = Normal::new(0.0, 1.0).expect("unit normal");
    let mut acc = 0usize;
    for _ in 0..trials {
        let mut scores: Vec<(u64, f64)> = Vec::with_capacity(round_size);
        for i in 0..round_size {
            scores.push((i as u64, benign.sample(rng)));
        }
        let min = scores
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            for (_, s) in scores.iter_mut() {
                *s -= min;
            }
        }
        let table = ScoreTable::from_scores(scores)?;
        acc += estimate_malicious_count(&table, total_clients, total_malicious)?;
    }
    Ok(acc as f64 / trials as f64)
}

/// Counts estimate changes across positive affine transforms of the score
/// axis. The estimate should never change: scaling shifts every split's
/// log likelihood almost uniformly and translation not at all.
pub fn mcne_affine_invariance<R: Rng>(sets: usize, rng: &mut R) -> Result<usize> {
    let total_clients = 500;
    let total_malicious = 50;
    let mut mismatches = 0usize;
    for _ in 0..sets {
        let n = rng.random_range(10..=60usize);
        let m = rng.random_range(0..=10.min(n - 2));
        let separation = rng.random_range(4.0..10.0);
        let benign = Normal::new(8.0, 1.0).expect("unit normal");
        let malicious = Normal::new(8.0 + separation, 1.0).expect("unit normal");
        let mut scores: Vec<(u64, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let raw: f64 = if i < m {
                malicious.sample(rng)
            } else {
                benign.sample(rng)
            };
            scores.push((i as u64, raw.max(0.0)));
        }
        let scale = rng.random_range(0.5..2.0);
        let offset = rng.random_range(0.0..5.0);
        let transformed: Vec<(u64, f64)> = scores
            .iter()
            .map(|&(id, s)| (id, scale * s + offset))
            .collect();
        let base = estimate_malicious_count(
            &ScoreTable::from_scores(scores)?,
            total_clients,
            total_malicious,
        )?;
        let moved = estimate_malicious_count(
            &ScoreTable::from_scores(transformed)?,
            total_clients,
            total_malicious,
        )?;
        if base != moved {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

fn fault_requested() -> bool {
    std::env::var(FAULT_ENV_VAR).is_ok_and(|v| !v.is_empty())
}

struct InstanceSet {
    reports: Vec<ClientReport>,
    assumed_malicious: usize,
}

/// Random oracle instance: n ∈ [lo, 8], d ∈ [1, 4], values in [-10, 10],
/// occasional exact duplicates to exercise tie handling.
fn random_instance<R: Rng>(rng: &mut R, min_n: usize, max_assumed: impl Fn(usize) -> usize) -> InstanceSet {
    let n = rng.random_range(min_n..=8usize);
    let dim = rng.random_range(1..=4usize);
    let assumed = rng.random_range(0..=max_assumed(n));
    let mut reports: Vec<ClientReport> = Vec::with_capacity(n);
    for i in 0..n {
        let values: Vec<f64> = if i > 0 && rng.random_range(0.0..1.0) < 0.25 {
            let donor = rng.random_range(0..i);
            (0..dim).map(|k| reports[donor].update[k]).collect()
        } else {
            (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect()
        };
        let id = (i as u64) * 5 + rng.random_range(0..5u64);
        let quantity = rng.random_range(1..=50u64);
        reports.push(
            ClientReport::new(id, UpdateVector::new(values).expect("finite values"), quantity)
                .expect("valid report"),
        );
    }
    InstanceSet {
        reports,
        assumed_malicious: assumed,
    }
}

fn vectors_close(a: &UpdateVector, b: &[f64], tol: f64) -> bool {
    a.dim() == b.len() && (0..b.len()).all(|k| (a[k] - b[k]).abs() <= tol)
}

fn check(name: &str, measured: f64, bound: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        measured,
        bound,
        passed,
        detail,
    }
}

/// Runs every aggregator against its brute-force oracle on `instances`
/// random inputs and reports one check per rule.
pub fn oracle_checks(seed: u64, instances: usize) -> Result<Vec<CheckResult>> {
    let tol = 1e-12;
    let mut out = Vec::new();

    let mut rng = derive(seed, Stream::Verify, &[1]);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 3, |n| n.saturating_sub(3));
        let main = krum_select(&inst.reports, inst.assumed_malicious, 1)?[0];
        if main != brute_force_krum(&inst.reports, inst.assumed_malicious)? {
            mismatches += 1;
        }
    }
    out.push(check(
        "krum_oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{instances} random instances, exact winner id"),
    ));

    let mut rng = derive(seed, Stream::Verify, &[2]);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 3, |n| n.saturating_sub(3));
        let count = rng.random_range(1..=inst.reports.len());
        let rule = AggregationRule::MKrum {
            assumed_malicious: inst.assumed_malicious,
            count,
        };
        let ids = krum_select(&inst.reports, inst.assumed_malicious, count)?;
        let (vector, _) = aggregate(&rule, &inst.reports)?;
        let (oracle_ids, oracle_mean) =
            brute_force_multi_krum(&inst.reports, inst.assumed_malicious, count)?;
        if ids != oracle_ids || !vectors_close(&vector, &oracle_mean, tol) {
            mismatches += 1;
        }
    }
    out.push(check(
        "multi_krum_oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{instances} random instances, rank ids and mean within 1e-12"),
    ));

    let mut rng = derive(seed, Stream::Verify, &[3]);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 1, |_| 0);
        let (vector, _) = aggregate(&AggregationRule::Median, &inst.reports)?;
        if !vectors_close(&vector, &brute_force_median(&inst.reports)?, tol) {
            mismatches += 1;
        }
    }
    out.push(check(
        "median_oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{instances} random instances, coordinates within 1e-12"),
    ));

    let mut rng = derive(seed, Stream::Verify, &[4]);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 1, |_| 0);
        let trim_k = rng.random_range(0..=(inst.reports.len() - 1) / 2);
        let (vector, _) = aggregate(&AggregationRule::Trimean { trim_k }, &inst.reports)?;
        if !vectors_close(&vector, &brute_force_trimmed_mean(&inst.reports, trim_k)?, tol) {
            mismatches += 1;
        }
    }
    out.push(check(
        "trimmed_mean_oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{instances} random instances, coordinates within 1e-12"),
    ));

    let mut rng = derive(seed, Stream::Verify, &[5]);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 3, |n| (n.saturating_sub(3)) / 4);
        let rule = AggregationRule::Bulyan {
            assumed_malicious: inst.assumed_malicious,
        };
        let (vector, info) = aggregate(&rule, &inst.reports)?;
        let (oracle_ids, oracle_mean) =
            brute_force_bulyan(&inst.reports, inst.assumed_malicious)?;
        if info.selected != oracle_ids || !vectors_close(&vector, &oracle_mean, tol) {
            mismatches += 1;
        }
    }
    out.push(check(
        "bulyan_oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{instances} random instances, selection ids and output within 1e-12"),
    ));

    Ok(out)
}

/// Sweeps every valid prior input up to `max_total` clients and compares
/// the log-gamma path against exact integer arithmetic.
pub fn hypergeom_check(max_total: usize) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut sentinel_mismatches = 0usize;
    let mut cases = 0usize;
    for total in 1..=max_total {
        for total_malicious in 0..=total {
            for sampled in 0..=total {
                for hypothesized in 0..=(sampled + 1) {
                    let main =
                        hypergeom_log_weight(total, total_malicious, sampled, hypothesized)?;
                    let exact =
                        exact_hypergeom_log(total, total_malicious, sampled, hypothesized)?;
                    cases += 1;
                    match (main.is_finite(), exact.is_finite()) {
                        (true, true) => worst = worst.max((main - exact).abs()),
                        (false, false) => {}
                        _ => sentinel_mismatches += 1,
                    }
                }
            }
        }
    }
    let mut measured = if sentinel_mismatches > 0 {
        f64::INFINITY
    } else {
        worst
    };
    let mut detail = format!("{cases} parameter combinations, N <= {max_total}");
    if fault_requested() {
        measured += 1.0;
        detail = format!("fault injected via {FAULT_ENV_VAR}; {detail}");
    }
    Ok(check(
        "hypergeom_exact",
        measured,
        1e-9,
        measured <= 1e-9,
        detail,
    ))
}

/// Runs every verification check with derived fixed seeds and collects the
/// outcomes. Intended for the `verify` subcommand and the acceptance tests;
/// individual checks are also exposed for targeted use.
pub fn run_all(seed: u64) -> Result<VerifyReport> {
    let mut checks = oracle_checks(seed, 200)?;
    checks.push(hypergeom_check(60)?);

    let trials = 100_000;
    let sigma = [1.0; 8];
    for (q_i, q_j) in [(1u64, 1u64), (1, 10), (10, 10), (3, 100)] {
        let mut rng = derive(seed, Stream::Verify, &[10, q_i, q_j]);
        let (empirical, bound, ratio) = lemma1_check(q_i, q_j, &sigma, trials, &mut rng)?;
        let passed = empirical <= bound && (ratio - 0.6777).abs() <= 0.02;
        checks.push(check(
            &format!("lemma1_q{q_i}_q{q_j}"),
            empirical,
            bound,
            passed,
            format!("ratio {ratio:.4}, expected 0.6777 +/- 0.02 and mean <= bound"),
        ));
    }

    for n in [2usize, 10, 50] {
        let mut rng = derive(seed, Stream::Verify, &[11, n as u64]);
        let (empirical, bound) = lemma3_max_check(n, 1, &sigma, trials, &mut rng)?;
        checks.push(check(
            &format!("lemma3_n{n}"),
            empirical,
            bound,
            empirical <= bound,
            "empirical max mean <= bound".to_string(),
        ));
    }

    // E[max(|X|, |Y|)] for two unit Gaussians is exactly 2/sqrt(pi); the
    // band is about 12 Monte-Carlo standard errors at 10^5 trials.
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    let mut rng = derive(seed, Stream::Verify, &[12]);
    let (empirical, _) = lemma3_max_check(2, 1, &[1.0], trials, &mut rng)?;
    checks.push(check(
        "lemma3_n2_closed_form",
        empirical,
        two_over_sqrt_pi,
        (empirical - two_over_sqrt_pi).abs() <= 0.02,
        "two-client one-dimension empirical mean vs 2/sqrt(pi)".to_string(),
    ));

    // Calibrated regression floor for this estimator. At separation 6 the
    // likelihood over-splits rounds with few true malicious clients: pulling
    // the benign group's top order statistic into the malicious group
    // tightens the benign deviation for roughly +2 nats while the prior
    // still slopes upward below its mode, so rounds with m <= 4 resolve one
    // or more steps high and the exact-recovery rate lands near 0.73.
    let mut rng = derive(seed, Stream::Verify, &[13]);
    let rate = mcne_recovery(500, 50, 50, 6.0, 1000, &mut rng)?;
    checks.push(check(
        "mcne_recovery_sep6",
        rate,
        0.70,
        rate >= 0.70,
        "exact-recovery rate at separation 6 against a calibrated floor".to_string(),
    ));

    // At wide separation the only misses are rounds that sample zero
    // malicious clients, where the prior mode sits above zero; those rounds
    // occur on roughly 0.4% of draws at these population parameters.
    let mut rng = derive(seed, Stream::Verify, &[14]);
    let rate = mcne_recovery(500, 50, 50, 100.0, 1000, &mut rng)?;
    checks.push(check(
        "mcne_recovery_sep100",
        rate,
        0.99,
        rate >= 0.99,
        "exact-recovery rate at separation 100".to_string(),
    ));

    let mut rng = derive(seed, Stream::Verify, &[15]);
    let mean_estimate = mcne_no_signal_mean(500, 50, 50, 200, &mut rng)?;
    checks.push(check(
        "mcne_no_signal_report",
        mean_estimate,
        5.0,
        true,
        "mean estimate on pure noise vs prior mode (report only)".to_string(),
    ));

    let mut rng = derive(seed, Stream::Verify, &[16]);
    let mismatches = mcne_affine_invariance(100, &mut rng)?;
    checks.push(check(
        "mcne_affine_invariance",
        mismatches as f64,
        0.0,
        mismatches == 0,
        "estimate changes across positive affine score transforms".to_string(),
    ));

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        checks,
        all_passed,
    })
}
