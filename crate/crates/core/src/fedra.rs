//! Quantity-robust scoring, malicious-count estimation, and the aggregation
//! rule composed from them.
//!
//! The scorer ranks clients by how close their updates sit to their nearest
//! peers under a quantity-normalized L1 distance, so a client cannot buy its
//! way into the benign cluster by inflating its sample count. The estimator
//! then fits a two-Gaussian split to the sorted scores, weighted by the
//! hypergeometric prior over how many sampled clients can be malicious.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::aggregators::{validate_reports, ClientReport, SelectionInfo};
use crate::error::{Error, Result};
use crate::numkit::{self, UpdateVector};

/// How the keep-count is chosen each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// Keep n − m̃_init − 1 clients, from the sampling-proportional guess.
    Fixed,
    /// Keep n − m̃ clients where m̃ comes from the per-round estimator.
    Dynamic,
}

/// Per-client quantity-robust scores for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// One `(client_id, score)` entry per report, in report order.
    pub scores: Vec<(u64, f64)>,
    /// Indices into `scores` with score ascending, ties by client id.
    pub sorted_order: Vec<usize>,
}

impl ScoreTable {
    /// Builds a table from raw per-client scores, deriving the sort order.
    pub fn from_scores(scores: Vec<(u64, f64)>) -> Result<Self> {
        for (i, &(_, s)) in scores.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::NonFinite {
                    context: "score",
                    index: i,
                });
            }
        }
        let mut sorted_order: Vec<usize> = (0..scores.len()).collect();
        sorted_order.sort_by(|&a, &b| {
            scores[a]
                .1
                .total_cmp(&scores[b].1)
                .then(scores[a].0.cmp(&scores[b].0))
        });
        Ok(ScoreTable {
            scores,
            sorted_order,
        })
    }

    /// Scores in ascending order.
    pub fn sorted_scores(&self) -> Vec<f64> {
        self.sorted_order
            .iter()
            .map(|&i| self.scores[i].1)
            .collect()
    }
}

/// Mean and deviation of the benign and malicious score groups under a
/// hypothesized split. The malicious fields are absent when the split
/// assigns that group no members.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub mu_b: f64,
    pub sigma_b: f64,
    pub mu_m: Option<f64>,
    pub sigma_m: Option<f64>,
    pub benign_count: usize,
    pub malicious_count: usize,
}

/// Pairwise closeness normalized so two benign clients look equally close
/// regardless of how many samples each holds.
pub fn q_value(g_i: &UpdateVector, g_j: &UpdateVector, q_i: u64, q_j: u64) -> Result<f64> {
    let dist = numkit::l1_distance(g_i, g_j)?;
    let qi = q_i as f64;
    let qj = q_j as f64;
    Ok((qi * qj / (qi + qj)).sqrt() * dist)
}

/// Scores every report: sum of the n − m̃ − 2 smallest pairwise Q values,
/// scaled by the client's own quantity to the power γ. Smaller means more
/// plausibly benign.
pub fn robust_scores(
    reports: &[ClientReport],
    assumed_malicious: usize,
    gamma: f64,
) -> Result<ScoreTable> {
    validate_reports(reports)?;
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::invalid("gamma", "must be in (0, 0.5]"));
    }
    let n = reports.len();
    let needed = assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    let neighbor_count = n - assumed_malicious - 2;

    let mut scores = Vec::with_capacity(n);
    let mut row: Vec<(f64, u64)> = Vec::with_capacity(n - 1);
    for (i, report) in reports.iter().enumerate() {
        row.clear();
        for (j, other) in reports.iter().enumerate() {
            if j == i {
                continue;
            }
            let q = q_value(&report.update, &other.update, report.quantity, other.quantity)?;
            row.push((q, other.client_id));
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut acc = 0.0;
        for &(q, _) in row.iter().take(neighbor_count) {
            acc += q;
        }
        let s = (report.quantity as f64).powf(gamma) * acc;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: "robust score",
                index: i,
            });
        }
        scores.push((report.client_id, s));
    }
    ScoreTable::from_scores(scores)
}

fn ln_choose(a: usize, b: usize) -> f64 {
    ln_gamma(a as f64 + 1.0) - ln_gamma(b as f64 + 1.0) - ln_gamma((a - b) as f64 + 1.0)
}

/// Unnormalized log prior ln[C(M̃, m̃) · C(N − M̃, n − m̃)] for drawing m̃
/// malicious clients in a sample of n from a population of N holding M̃.
/// Returns −∞ outside the support; the constant 1/C(N, n) is dropped since
/// it cannot move an argmax over m̃.
pub fn hypergeom_log_weight(
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
    let benign_pool = total_clients - total_malicious;
    if hypothesized > total_malicious
        || hypothesized > sampled
        || sampled - hypothesized > benign_pool
    {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_choose(total_malicious, hypothesized) + ln_choose(benign_pool, sampled - hypothesized))
}

fn sigma_floor(spread: f64) -> f64 {
    (1e-9 * spread).max(1e-12)
}

/// Splits ascending scores into the n − m̃ smallest (benign) and m̃ largest
/// (malicious) and estimates each group's Gaussian parameters with Bessel
/// correction. Deviations are floored to keep later likelihoods finite.
pub fn group_stats(sorted_scores: &[f64], hypothesized: usize) -> Result<GroupStats> {
    let n = sorted_scores.len();
    if n < 2 {
        return Err(Error::InsufficientClients {
            needed: 2,
            actual: n,
        });
    }
    if hypothesized > n - 2 {
        return Err(Error::invalid(
            "hypothesized",
            format!("must be at most n - 2 = {}", n - 2),
        ));
    }
    for w in sorted_scores.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid("sorted_scores", "must be ascending"));
        }
    }
    let floor = sigma_floor(sorted_scores[n - 1] - sorted_scores[0]);
    let stats_of = |group: &[f64]| -> (f64, f64) {
        let mu = group.iter().sum::<f64>() / group.len() as f64;
        let sigma = if group.len() >= 2 {
            let ss: f64 = group.iter().map(|s| (s - mu) * (s - mu)).sum();
            (ss / (group.len() - 1) as f64).sqrt().max(floor)
        } else {
            floor
        };
        (mu, sigma)
    };

    let benign_count = n - hypothesized;
    let (mu_b, sigma_b) = stats_of(&sorted_scores[..benign_count]);
    let (mu_m, sigma_m) = if hypothesized == 0 {
        (None, None)
    } else {
        let (mu, sigma) = stats_of(&sorted_scores[benign_count..]);
        (Some(mu), Some(sigma))
    };
    Ok(GroupStats {
        mu_b,
        sigma_b,
        mu_m,
        sigma_m,
        benign_count,
        malicious_count: hypothesized,
    })
}

/// Log likelihood of one hypothesized split: hypergeometric prior plus the
/// two-Gaussian fit terms. A group of size 0 contributes nothing and a group
/// of size 1 contributes only its quadratic term, which is exactly zero, so
/// neither can dominate through the deviation floor.
pub fn log_likelihood(
    sorted_scores: &[f64],
    hypothesized: usize,
    total_clients: usize,
    total_malicious: usize,
) -> Result<f64> {
    let n = sorted_scores.len();
    let prior = hypergeom_log_weight(total_clients, total_malicious, n, hypothesized)?;
    if prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let stats = group_stats(sorted_scores, hypothesized)?;
    let group_term = |group: &[f64], mu: f64, sigma: f64| -> f64 {
        let quad: f64 = group
            .iter()
            .map(|s| (s - mu) * (s - mu) / (2.0 * sigma * sigma))
            .sum();
        let ln_term = if group.len() >= 2 {
            group.len() as f64 * sigma.ln()
        } else {
            0.0
        };
        -ln_term - quad
    };

    let benign_count = stats.benign_count;
    let mut ll = prior + group_term(&sorted_scores[..benign_count], stats.mu_b, stats.sigma_b);
    if let (Some(mu_m), Some(sigma_m)) = (stats.mu_m, stats.sigma_m) {
        ll += group_term(&sorted_scores[benign_count..], mu_m, sigma_m);
    }
    Ok(ll)
}

/// Picks the per-round malicious count by maximizing the split likelihood
/// over m̃ ∈ {0, …, min(n − 2, M̃)}. Ties resolve toward the smaller count,
/// which filters less.
pub fn estimate_malicious_count(
    table: &ScoreTable,
    total_clients: usize,
    total_malicious: usize,
) -> Result<usize> {
    let n = table.scores.len();
    if n < 3 {
        return Err(Error::InsufficientClients {
            needed: 3,
            actual: n,
        });
    }
    let sorted = table.sorted_scores();
    let cap = (n - 2).min(total_malicious);
    let mut best: Option<(usize, f64)> = None;
    for hypothesized in 0..=cap {
        let ll = log_likelihood(&sorted, hypothesized, total_clients, total_malicious)?;
        if ll == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, best_ll)) if ll <= best_ll => {}
            _ => best = Some((hypothesized, ll)),
        }
    }
    best.map(|(m, _)| m).ok_or(Error::EmptyHypergeometricSupport)
}

/// Scores the round, chooses how many clients to keep, and returns the
/// quantity-weighted mean of the keepers.
///
/// Scoring always uses the sampling-proportional guess m̃_init = ⌈n·M̃/N⌉
/// for the neighbor count; `ratio_mode` only decides the cut. A forced
/// estimate (`mcne_override`) replaces the estimator in dynamic mode, which
/// supports ablations.
pub fn fedra_aggregate(
    reports: &[ClientReport],
    gamma: f64,
    total_clients: usize,
    total_malicious: usize,
    ratio_mode: RatioMode,
    mcne_override: Option<usize>,
) -> Result<(UpdateVector, SelectionInfo)> {
    validate_reports(reports)?;
    if total_clients == 0 {
        return Err(Error::invalid("total_clients", "must be positive"));
    }
    if total_malicious > total_clients {
        return Err(Error::invalid(
            "total_malicious",
            "must not exceed total_clients",
        ));
    }
    let n = reports.len();
    if n > total_clients {
        return Err(Error::invalid(
            "reports",
            "round size exceeds total_clients",
        ));
    }
    let m_init = (n * total_malicious).div_ceil(total_clients);
    let table = robust_scores(reports, m_init, gamma)?;

    let (m_used, raw_keep) = match ratio_mode {
        RatioMode::Fixed => (m_init, n - m_init - 1),
        RatioMode::Dynamic => {
            let est = match mcne_override {
                Some(forced) => forced,
                None => estimate_malicious_count(&table, total_clients, total_malicious)?,
            };
            (est, n.saturating_sub(est))
        }
    };
    let clamped = raw_keep == 0;
    let keep = raw_keep.max(1);

    // Average in client-id order so the output depends only on the kept
    // set, never on how scores happened to rank inside it.
    let mut kept: Vec<&ClientReport> = table.sorted_order[..keep]
        .iter()
        .map(|&i| &reports[i])
        .collect();
    kept.sort_unstable_by_key(|r| r.client_id);
    let updates: Vec<&UpdateVector> = kept.iter().map(|r| &r.update).collect();
    let weights: Vec<f64> = kept.iter().map(|r| r.quantity as f64).collect();
    let out = numkit::weighted_mean(&updates, &weights)?;

    let selected: Vec<u64> = kept.iter().map(|r| r.client_id).collect();
    Ok((
        out,
        SelectionInfo {
            selected,
            scores: Some(table.scores),
            estimated_malicious: Some(m_used),
            select_count: Some(keep),
            clamped,
        },
    ))
}
