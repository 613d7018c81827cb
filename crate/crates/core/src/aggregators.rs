//! Baseline aggregation rules and the dispatch entry point.
//!
//! Every rule is a pure function from one round's reports to a single model
//! update. Selection-based rules also report which clients survived, so the
//! engine can account for filtering without re-deriving it.

use crate::error::{Error, Result};
use crate::fedra::{self, RatioMode};
use crate::numkit::{self, UpdateVector};

/// One client's submission for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub client_id: u64,
    pub update: UpdateVector,
    pub quantity: u64,
}

impl ClientReport {
    pub fn new(client_id: u64, update: UpdateVector, quantity: u64) -> Result<Self> {
        if quantity == 0 {
            return Err(Error::invalid("quantity", "must be at least 1"));
        }
        Ok(ClientReport {
            client_id,
            update,
            quantity,
        })
    }
}

/// Aggregation rule with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationRule {
    /// Quantity-weighted mean of all reports.
    FedAvgWeighted,
    /// Single update with the smallest neighbor-distance score.
    Krum { assumed_malicious: usize },
    /// Plain mean of the `count` smallest-score updates (ranked once).
    MKrum { assumed_malicious: usize, count: usize },
    /// Coordinate-wise median.
    Median,
    /// Coordinate-wise trimmed mean dropping `trim_k` per side.
    Trimean { trim_k: usize },
    /// Iterated Krum selection followed by a trimmed mean.
    Bulyan { assumed_malicious: usize },
    /// L2-clip every update to `threshold`, then quantity-weighted mean.
    NormBound { threshold: f64 },
    /// Smoothed Weiszfeld iteration toward the quantity-aware geometric median.
    Rfa {
        max_iters: usize,
        smoothing: f64,
        tolerance: f64,
    },
    /// Cap quantities so no small client group dominates, then a
    /// quantity-weighted trimmed mean.
    Truncate {
        top_fraction: f64,
        mass_fraction: f64,
        trim_k: usize,
    },
    /// Quantity-robust scoring plus malicious-count estimation.
    FedRa {
        gamma: f64,
        total_clients: usize,
        assumed_total_malicious: usize,
        ratio_mode: RatioMode,
        /// Forces the estimated per-round malicious count in dynamic mode
        /// (ablation hook); `None` uses the estimator.
        mcne_override: Option<usize>,
    },
}

/// What a rule decided about the round, alongside the aggregate itself.
///
/// `selected` is always sorted by ascending client id. For rules without a
/// selection step it lists every reporter.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInfo {
    pub selected: Vec<u64>,
    /// Per-client scores where the rule defines them (smaller = more benign).
    pub scores: Option<Vec<(u64, f64)>>,
    /// Estimated per-round malicious count, where the rule estimates one.
    pub estimated_malicious: Option<usize>,
    /// The number of clients the rule set out to keep, where applicable.
    pub select_count: Option<usize>,
    /// Set when the keep-count had to be clamped up to 1.
    pub clamped: bool,
}

impl SelectionInfo {
    pub(crate) fn all_of(reports: &[ClientReport]) -> Self {
        let mut ids: Vec<u64> = reports.iter().map(|r| r.client_id).collect();
        ids.sort_unstable();
        SelectionInfo {
            selected: ids,
            scores: None,
            estimated_malicious: None,
            select_count: None,
            clamped: false,
        }
    }
}

/// Checks the per-round report invariants: nonempty, uniform dimension,
/// unique client ids. Quantity positivity is enforced at construction but
/// rechecked here because the fields are public.
pub(crate) fn validate_reports(reports: &[ClientReport]) -> Result<usize> {
    let first = reports.first().ok_or(Error::EmptyInput("reports"))?;
    let dim = first.update.dim();
    for r in reports {
        if r.update.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.update.dim(),
            });
        }
        if r.quantity == 0 {
            return Err(Error::invalid("quantity", "must be at least 1"));
        }
    }
    let mut ids: Vec<u64> = reports.iter().map(|r| r.client_id).collect();
    ids.sort_unstable();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateClientId(w[0]));
        }
    }
    Ok(dim)
}

/// Krum scores for every report: sum of squared L2 distances to the
/// n − m̃ − 2 nearest neighbors, ties on distance broken by client id.
fn krum_scores(reports: &[ClientReport], assumed_malicious: usize) -> Result<Vec<f64>> {
    let n = reports.len();
    let needed = assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    krum_scores_saturating(reports, assumed_malicious)
}

/// As `krum_scores`, but tolerates sets too small for a full neighbor count
/// by saturating it at zero (every score becomes 0). The iterated removal in
/// `bulyan` shrinks its working set below the strict Krum minimum on its
/// last picks and resolves those by client id.
fn krum_scores_saturating(
    reports: &[ClientReport],
    assumed_malicious: usize,
) -> Result<Vec<f64>> {
    let n = reports.len();
    let neighbor_count = n.saturating_sub(assumed_malicious + 2);
    let mut scores = vec![0.0; n];
    let mut dists: Vec<(f64, u64)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for (j, other) in reports.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = numkit::l2_distance(&reports[i].update, &other.update)?;
            dists.push((d * d, other.client_id));
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut acc = 0.0;
        for &(d2, _) in dists.iter().take(neighbor_count) {
            acc += d2;
        }
        scores[i] = acc;
    }
    Ok(scores)
}

fn rank_by_score(reports: &[ClientReport], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(reports[a].client_id.cmp(&reports[b].client_id))
    });
    order
}

/// Returns the `count` client ids with the smallest Krum scores, in rank
/// order. `count = 1` is Krum proper; larger counts give mKrum.
pub fn krum_select(
    reports: &[ClientReport],
    assumed_malicious: usize,
    count: usize,
) -> Result<Vec<u64>> {
    validate_reports(reports)?;
    if count == 0 || count > reports.len() {
        return Err(Error::invalid(
            "count",
            format!("must be in 1..={}, got {count}", reports.len()),
        ));
    }
    let scores = krum_scores(reports, assumed_malicious)?;
    let order = rank_by_score(reports, &scores);
    Ok(order
        .into_iter()
        .take(count)
        .map(|i| reports[i].client_id)
        .collect())
}

/// Iterated-removal selection (recompute scores after each pick), then a
/// trimmed mean over the survivors.
pub fn bulyan(reports: &[ClientReport], assumed_malicious: usize) -> Result<UpdateVector> {
    Ok(bulyan_with_info(reports, assumed_malicious)?.0)
}

fn bulyan_with_info(
    reports: &[ClientReport],
    assumed_malicious: usize,
) -> Result<(UpdateVector, SelectionInfo)> {
    validate_reports(reports)?;
    let n = reports.len();
    let needed = 4 * assumed_malicious + 3;
    if n < needed {
        return Err(Error::InsufficientClients { needed, actual: n });
    }
    let theta = n - 2 * assumed_malicious;

    let mut remaining: Vec<ClientReport> = reports.to_vec();
    let mut selected: Vec<ClientReport> = Vec::with_capacity(theta);
    let mut first_scores: Option<Vec<(u64, f64)>> = None;
    for _ in 0..theta {
        let scores = krum_scores_saturating(&remaining, assumed_malicious)?;
        if first_scores.is_none() {
            first_scores = Some(
                remaining
                    .iter()
                    .zip(&scores)
                    .map(|(r, &s)| (r.client_id, s))
                    .collect(),
            );
        }
        let best = rank_by_score(&remaining, &scores)[0];
        selected.push(remaining.remove(best));
    }

    let vectors: Vec<&UpdateVector> = selected.iter().map(|r| &r.update).collect();
    let out = numkit::coordinate_trimmed_mean(&vectors, assumed_malicious)?;
    let mut ids: Vec<u64> = selected.iter().map(|r| r.client_id).collect();
    ids.sort_unstable();
    Ok((
        out,
        SelectionInfo {
            selected: ids,
            scores: first_scores,
            estimated_malicious: None,
            select_count: Some(theta),
            clamped: false,
        },
    ))
}

/// Scales every update to L2 norm at most `threshold`, then takes the
/// quantity-weighted mean.
pub fn norm_bound(reports: &[ClientReport], threshold: f64) -> Result<UpdateVector> {
    validate_reports(reports)?;
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid("threshold", "must be positive and finite"));
    }
    let mut clipped: Vec<UpdateVector> = Vec::with_capacity(reports.len());
    for r in reports {
        let norm = numkit::l2_norm(&r.update);
        let scale = if norm > threshold { threshold / norm } else { 1.0 };
        let values = r.update.iter().map(|v| v * scale).collect();
        clipped.push(UpdateVector::new(values)?);
    }
    let refs: Vec<&UpdateVector> = clipped.iter().collect();
    let weights: Vec<f64> = reports.iter().map(|r| r.quantity as f64).collect();
    numkit::weighted_mean(&refs, &weights)
}

/// Smoothed Weiszfeld iteration for the quantity-aware geometric median.
pub fn rfa_geometric_median(
    reports: &[ClientReport],
    max_iters: usize,
    smoothing: f64,
    tolerance: f64,
) -> Result<UpdateVector> {
    validate_reports(reports)?;
    if !(smoothing > 0.0) || !smoothing.is_finite() {
        return Err(Error::invalid("smoothing", "must be positive and finite"));
    }
    let updates: Vec<&UpdateVector> = reports.iter().map(|r| &r.update).collect();
    let quantities: Vec<f64> = reports.iter().map(|r| r.quantity as f64).collect();
    let mut v = numkit::weighted_mean(&updates, &quantities)?;
    let mut weights = vec![0.0; reports.len()];
    for _ in 0..max_iters {
        for (i, g) in updates.iter().enumerate() {
            let dist = numkit::l2_distance(g, &v)?;
            weights[i] = quantities[i] / dist.max(smoothing);
        }
        let next = numkit::weighted_mean(&updates, &weights)?;
        let step = numkit::l2_distance(&next, &v)?;
        v = next;
        if step < tolerance {
            break;
        }
    }
    Ok(v)
}

/// The largest cap U such that after capping every quantity at U, the
/// ⌈top_fraction·n⌉ largest capped quantities hold at most `mass_fraction`
/// of the capped total. Returns at least 1.
///
/// Capped sums are piecewise linear in U between consecutive distinct
/// quantities, so each segment is solved in closed form and scanned from the
/// largest quantity downward.
pub fn truncate_threshold(
    quantities: &[u64],
    top_fraction: f64,
    mass_fraction: f64,
) -> Result<u64> {
    if quantities.is_empty() {
        return Err(Error::EmptyInput("quantities"));
    }
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::invalid("top_fraction", "must be in (0, 1)"));
    }
    if !(mass_fraction > 0.0 && mass_fraction < 1.0) {
        return Err(Error::invalid("mass_fraction", "must be in (0, 1)"));
    }
    let n = quantities.len();
    let k_top = ((top_fraction * n as f64).ceil() as usize).clamp(1, n);

    let mut sorted: Vec<u64> = quantities.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    // prefix[i] = sum of the i largest quantities
    let mut prefix: Vec<u128> = Vec::with_capacity(n + 1);
    prefix.push(0);
    for &q in &sorted {
        prefix.push(prefix.last().unwrap() + q as u128);
    }

    // Number of quantities strictly greater than u.
    let count_above = |u: u64| sorted.partition_point(|&q| q > u);
    let capped_top = |u: u64| -> f64 {
        let c = count_above(u).min(k_top);
        (c as u128 * u as u128 + (prefix[k_top] - prefix[c])) as f64
    };
    let capped_total = |u: u64| -> f64 {
        let c = count_above(u);
        (c as u128 * u as u128 + (prefix[n] - prefix[c])) as f64
    };
    let satisfies = |u: u64| capped_top(u) <= mass_fraction * capped_total(u);

    // Scan segments (v_{i+1}, v_i] from the top; within each, both capped
    // sums are linear in U with constant coefficients.
    let mut distinct: Vec<u64> = sorted.clone();
    distinct.dedup();
    for (idx, &hi) in distinct.iter().enumerate() {
        let lo = distinct.get(idx + 1).map_or(1, |&next| next + 1);
        if lo > hi {
            continue;
        }
        if satisfies(hi) {
            return Ok(hi);
        }
        // Linear coefficients on this segment: counts above any interior U.
        let t = count_above(lo - 1).min(k_top) as f64;
        let s = count_above(lo - 1) as f64;
        let a_t = (prefix[k_top] - prefix[count_above(lo - 1).min(k_top)]) as f64;
        let a_s = (prefix[n] - prefix[count_above(lo - 1)]) as f64;
        let slope = t - mass_fraction * s;
        if slope <= 0.0 {
            // Constraint only gets easier as U grows; hi already failed.
            continue;
        }
        let mut candidate = ((mass_fraction * a_s - a_t) / slope).floor() as i64;
        candidate = candidate.clamp(lo as i64 - 1, hi as i64);
        // Guard against float rounding at the boundary.
        let mut u = candidate.max(0) as u64;
        while u < hi && satisfies(u + 1) {
            u += 1;
        }
        while u >= lo && !satisfies(u) {
            u -= 1;
        }
        if u >= lo && satisfies(u) {
            return Ok(u);
        }
    }
    Ok(1)
}

/// Quantity-weighted trimmed mean: per coordinate, drop the `trim_k` largest
/// and smallest values (ties by client id), then weight the rest.
fn weighted_coordinate_trimmed_mean(
    reports: &[ClientReport],
    weights: &[f64],
    trim_k: usize,
) -> Result<UpdateVector> {
    let n = reports.len();
    if 2 * trim_k >= n {
        return Err(Error::invalid(
            "trim_k",
            format!("2 * trim_k = {} must be < count = {n}", 2 * trim_k),
        ));
    }
    let dim = reports[0].update.dim();
    let mut out = vec![0.0; dim];
    let mut column: Vec<(f64, f64, u64)> = Vec::with_capacity(n);
    for k in 0..dim {
        column.clear();
        for (r, &w) in reports.iter().zip(weights) {
            column.push((r.update[k], w, r.client_id));
        }
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for &(v, w, _) in &column[trim_k..n - trim_k] {
            acc += w * v;
            wsum += w;
        }
        out[k] = acc / wsum;
    }
    UpdateVector::new(out)
}

fn plain_mean_of(reports: &[ClientReport], ids: &[u64]) -> Result<UpdateVector> {
    let keep: Vec<&UpdateVector> = reports
        .iter()
        .filter(|r| ids.contains(&r.client_id))
        .map(|r| &r.update)
        .collect();
    numkit::mean(&keep)
}

/// Applies `rule` to the round's reports.
pub fn aggregate(
    rule: &AggregationRule,
    reports: &[ClientReport],
) -> Result<(UpdateVector, SelectionInfo)> {
    validate_reports(reports)?;
    match rule {
        AggregationRule::FedAvgWeighted => {
            let updates: Vec<&UpdateVector> = reports.iter().map(|r| &r.update).collect();
            let weights: Vec<f64> = reports.iter().map(|r| r.quantity as f64).collect();
            let out = numkit::weighted_mean(&updates, &weights)?;
            Ok((out, SelectionInfo::all_of(reports)))
        }
        AggregationRule::Krum { assumed_malicious } => {
            let scores = krum_scores(reports, *assumed_malicious)?;
            let ids = krum_select(reports, *assumed_malicious, 1)?;
            let out = plain_mean_of(reports, &ids)?;
            let info = SelectionInfo {
                selected: ids,
                scores: Some(
                    reports
                        .iter()
                        .zip(&scores)
                        .map(|(r, &s)| (r.client_id, s))
                        .collect(),
                ),
                estimated_malicious: None,
                select_count: Some(1),
                clamped: false,
            };
            Ok((out, info))
        }
        AggregationRule::MKrum {
            assumed_malicious,
            count,
        } => {
            let scores = krum_scores(reports, *assumed_malicious)?;
            let mut ids = krum_select(reports, *assumed_malicious, *count)?;
            let out = plain_mean_of(reports, &ids)?;
            ids.sort_unstable();
            let info = SelectionInfo {
                selected: ids,
                scores: Some(
                    reports
                        .iter()
                        .zip(&scores)
                        .map(|(r, &s)| (r.client_id, s))
                        .collect(),
                ),
                estimated_malicious: None,
                select_count: Some(*count),
                clamped: false,
            };
            Ok((out, info))
        }
        AggregationRule::Median => {
            let updates: Vec<&UpdateVector> = reports.iter().map(|r| &r.update).collect();
            Ok((
                numkit::coordinate_median(&updates)?,
                SelectionInfo::all_of(reports),
            ))
        }
        AggregationRule::Trimean { trim_k } => {
            let updates: Vec<&UpdateVector> = reports.iter().map(|r| &r.update).collect();
            Ok((
                numkit::coordinate_trimmed_mean(&updates, *trim_k)?,
                SelectionInfo::all_of(reports),
            ))
        }
        AggregationRule::Bulyan { assumed_malicious } => bulyan_with_info(reports, *assumed_malicious),
        AggregationRule::NormBound { threshold } => Ok((
            norm_bound(reports, *threshold)?,
            SelectionInfo::all_of(reports),
        )),
        AggregationRule::Rfa {
            max_iters,
            smoothing,
            tolerance,
        } => Ok((
            rfa_geometric_median(reports, *max_iters, *smoothing, *tolerance)?,
            SelectionInfo::all_of(reports),
        )),
        AggregationRule::Truncate {
            top_fraction,
            mass_fraction,
            trim_k,
        } => {
            let quantities: Vec<u64> = reports.iter().map(|r| r.quantity).collect();
            let cap = truncate_threshold(&quantities, *top_fraction, *mass_fraction)?;
            let weights: Vec<f64> = quantities.iter().map(|&q| q.min(cap) as f64).collect();
            let out = weighted_coordinate_trimmed_mean(reports, &weights, *trim_k)?;
            Ok((out, SelectionInfo::all_of(reports)))
        }
        AggregationRule::FedRa {
            gamma,
            total_clients,
            assumed_total_malicious,
            ratio_mode,
            mcne_override,
        } => fedra::fedra_aggregate(
            reports,
            *gamma,
            *total_clients,
            *assumed_total_malicious,
            *ratio_mode,
            *mcne_override,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: u64, values: &[f64], quantity: u64) -> ClientReport {
        ClientReport::new(id, UpdateVector::new(values.to_vec()).unwrap(), quantity).unwrap()
    }

    fn one_d(values: &[f64]) -> Vec<ClientReport> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| report(i as u64, &[v], 1))
            .collect()
    }

    #[test]
    fn report_rejects_zero_quantity() {
        assert!(ClientReport::new(0, UpdateVector::new(vec![1.0]).unwrap(), 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let reports = vec![report(3, &[1.0], 1), report(3, &[2.0], 1)];
        assert!(matches!(
            aggregate(&AggregationRule::Median, &reports),
            Err(Error::DuplicateClientId(3))
        ));
    }

    #[test]
    fn krum_picks_center_of_cluster() {
        // Scores with one neighbor each: 1, 1, 1, 64; id tie-break keeps 0.
        let reports = one_d(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(krum_select(&reports, 1, 1).unwrap(), vec![0]);
        assert!(krum_select(&reports, 2, 1).is_err()); // n < m̃ + 3
        assert!(krum_select(&reports, 1, 0).is_err());
        assert!(krum_select(&reports, 1, 5).is_err());
    }

    #[test]
    fn krum_identical_updates_lowest_id() {
        let reports = vec![
            report(9, &[5.0], 1),
            report(2, &[5.0], 1),
            report(7, &[5.0], 1),
            report(4, &[5.0], 1),
        ];
        assert_eq!(krum_select(&reports, 0, 1).unwrap(), vec![2]);
    }

    #[test]
    fn krum_count_n_returns_all() {
        let reports = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let ids = krum_select(&reports, 0, 4).unwrap();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn krum_scores_match_hand_enumeration() {
        let reports = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let (_, info) = aggregate(&AggregationRule::Krum { assumed_malicious: 1 }, &reports).unwrap();
        let scores = info.scores.unwrap();
        let values: Vec<f64> = scores.iter().map(|&(_, s)| s).collect();
        assert_eq!(values, vec![1.0, 1.0, 1.0, 64.0]);
        assert_eq!(info.selected, vec![0]);
    }

    #[test]
    fn bulyan_examples() {
        let reports = vec![
            report(0, &[5.0], 1),
            report(1, &[5.0], 1),
            report(2, &[5.0], 1),
        ];
        assert_eq!(bulyan(&reports, 0).unwrap().as_slice(), &[5.0]);

        let reports = one_d(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0]);
        assert_eq!(bulyan(&reports, 1).unwrap().as_slice(), &[0.0]);
        assert!(bulyan(&reports, 2).is_err()); // needs n ≥ 11
    }

    #[test]
    fn bulyan_m0_is_mean_of_all() {
        let reports = one_d(&[1.0, 2.0, 3.0]);
        assert_eq!(bulyan(&reports, 0).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn norm_bound_examples() {
        let reports = vec![report(0, &[3.0, 4.0], 1)];
        assert_eq!(norm_bound(&reports, 2.5).unwrap().as_slice(), &[1.5, 2.0]);

        let reports = vec![report(0, &[1.0, 0.0], 1)];
        assert_eq!(norm_bound(&reports, 5.0).unwrap().as_slice(), &[1.0, 0.0]);

        let reports = vec![report(0, &[0.0, 10.0], 1), report(1, &[0.0, 0.0], 3)];
        assert_eq!(norm_bound(&reports, 1.0).unwrap().as_slice(), &[0.0, 0.25]);
    }

    #[test]
    fn rfa_examples() {
        let reports = vec![report(0, &[0.0], 1), report(1, &[2.0], 1)];
        let out = rfa_geometric_median(&reports, 100, 1e-6, 1e-10).unwrap();
        assert!((out[0] - 1.0).abs() <= 1e-9);

        let reports = one_d(&[0.0, 1.0, 100.0]);
        let out = rfa_geometric_median(&reports, 100, 1e-6, 1e-10).unwrap();
        assert!((out[0] - 1.0).abs() <= 1e-6);

        let reports = vec![report(0, &[4.0, -2.0], 7)];
        let out = rfa_geometric_median(&reports, 100, 1e-6, 1e-10).unwrap();
        assert_eq!(out.as_slice(), &[4.0, -2.0]);
    }

    #[test]
    fn truncate_threshold_examples() {
        let mut q = vec![100];
        q.extend(std::iter::repeat(5).take(9));
        assert_eq!(truncate_threshold(&q, 0.1, 0.5).unwrap(), 45);

        let ones = vec![1; 10];
        assert_eq!(truncate_threshold(&ones, 0.1, 0.5).unwrap(), 1);

        assert_eq!(truncate_threshold(&[7], 0.1, 0.5).unwrap(), 1);

        assert!(truncate_threshold(&[], 0.1, 0.5).is_err());
        assert!(truncate_threshold(&[1], 0.0, 0.5).is_err());
        assert!(truncate_threshold(&[1], 0.1, 1.0).is_err());
    }

    #[test]
    fn aggregate_dispatch_examples() {
        let reports = vec![report(0, &[1.0], 1), report(1, &[3.0], 3)];
        let (out, info) = aggregate(&AggregationRule::FedAvgWeighted, &reports).unwrap();
        assert_eq!(out.as_slice(), &[2.5]);
        assert_eq!(info.selected, vec![0, 1]);

        let reports = vec![
            report(0, &[1.0, 2.0], 1),
            report(1, &[3.0, 4.0], 1),
            report(2, &[100.0, -5.0], 1),
        ];
        let (out, _) = aggregate(&AggregationRule::Median, &reports).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 2.0]);

        let reports = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let (out, _) = aggregate(&AggregationRule::Krum { assumed_malicious: 1 }, &reports).unwrap();
        assert_eq!(out.as_slice(), &[0.0]);
    }

    #[test]
    fn mkrum_mean_of_selected() {
        let reports = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let rule = AggregationRule::MKrum {
            assumed_malicious: 1,
            count: 2,
        };
        let (out, info) = aggregate(&rule, &reports).unwrap();
        // Scores 1,1,1,64: rank keeps ids 0 and 1.
        assert_eq!(out.as_slice(), &[0.5]);
        assert_eq!(info.selected, vec![0, 1]);
    }

    #[test]
    fn truncate_aggregator_caps_weights() {
        // Cap lands at 45, so the whale weighs 45 not 100; trim_k = 0 keeps all.
        let reports = vec![
            report(0, &[10.0], 100),
            report(1, &[0.0], 5),
            report(2, &[0.0], 5),
            report(3, &[0.0], 5),
            report(4, &[0.0], 5),
            report(5, &[0.0], 5),
            report(6, &[0.0], 5),
            report(7, &[0.0], 5),
            report(8, &[0.0], 5),
            report(9, &[0.0], 5),
        ];
        let rule = AggregationRule::Truncate {
            top_fraction: 0.1,
            mass_fraction: 0.5,
            trim_k: 0,
        };
        let (out, _) = aggregate(&rule, &reports).unwrap();
        assert!((out[0] - 45.0 * 10.0 / 90.0).abs() < 1e-12);
    }
}
