//! Client population synthesis: quantity sampling, data partitioning,
//! learning tasks with closed-form local gradients, and IDX ingestion.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal as GaussDist};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::UpdateVector;

/// One labeled example. The label is 0 for regression-style tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A client's local data, fixed at setup time.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: u64,
    pub samples: Vec<Sample>,
    pub is_malicious: bool,
}

impl ClientDataset {
    /// The client's true quantity.
    pub fn quantity(&self) -> u64 {
        self.samples.len() as u64
    }
}

/// Learning task with closed-form full-batch gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Estimate the mean of a Gaussian: f(w; z) = ½‖w − z‖².
    GaussianMean {
        dim: usize,
        true_mean: Vec<f64>,
        std: Vec<f64>,
    },
    /// Multinomial logistic regression over flattened C×d parameters,
    /// cross-entropy loss plus an L2 penalty, no bias terms.
    SoftmaxRegression {
        dim: usize,
        classes: usize,
        l2_reg: f64,
    },
}

impl Task {
    pub fn param_dim(&self) -> usize {
        match self {
            Task::GaussianMean { dim, .. } => *dim,
            Task::SoftmaxRegression { dim, classes, .. } => dim * classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Task::GaussianMean {
                dim,
                true_mean,
                std,
            } => {
                if *dim == 0 {
                    return Err(Error::invalid("task.dim", "must be positive"));
                }
                if true_mean.len() != *dim || std.len() != *dim {
                    return Err(Error::invalid(
                        "task.true_mean",
                        "mean and std must have length dim",
                    ));
                }
                if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                    return Err(Error::invalid("task.std", "entries must be positive"));
                }
                if true_mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("task.true_mean", "entries must be finite"));
                }
                Ok(())
            }
            Task::SoftmaxRegression {
                dim,
                classes,
                l2_reg,
            } => {
                if *dim == 0 {
                    return Err(Error::invalid("task.dim", "must be positive"));
                }
                if *classes < 2 {
                    return Err(Error::invalid("task.classes", "must be at least 2"));
                }
                if !(*l2_reg >= 0.0) || !l2_reg.is_finite() {
                    return Err(Error::invalid("task.l2_reg", "must be finite and ≥ 0"));
                }
                Ok(())
            }
        }
    }
}

/// How a shared dataset is split across clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    Iid,
    NonIid {
        /// Fraction of clients whose local data comes from a single class.
        single_class_fraction: f64,
    },
}

/// Draws per-client sample counts from a heavy-tailed lognormal whose
/// analytic mean is `target_mean`, clamping each draw to at least 1.
pub fn sample_quantities<R: Rng>(
    count: usize,
    target_mean: f64,
    log_sigma: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(Error::EmptyInput("count"));
    }
    if !(target_mean >= 1.0) || !target_mean.is_finite() {
        return Err(Error::invalid("target_mean", "must be finite and ≥ 1"));
    }
    if !(log_sigma >= 0.0) || !log_sigma.is_finite() {
        return Err(Error::invalid("log_sigma", "must be finite and ≥ 0"));
    }
    let location = target_mean.ln() - log_sigma * log_sigma / 2.0;
    let mut out = Vec::with_capacity(count);
    if log_sigma == 0.0 {
        out.resize(count, (target_mean.round() as u64).max(1));
        return Ok(out);
    }
    let normal = GaussDist::new(location, log_sigma)
        .map_err(|_| Error::invalid("log_sigma", "rejected by the normal sampler"))?;
    for _ in 0..count {
        let x: f64 = normal.sample(rng);
        out.push((x.exp().round() as u64).max(1));
    }
    Ok(out)
}

/// Splits `dataset` across clients with the requested quantities.
///
/// IID shuffles globally and slices sequentially. Non-IID gives a leading
/// fraction of clients data from a single class each (classes assigned
/// round-robin, weighted by class frequency) and treats the rest as IID.
/// When the pool runs dry, later clients are truncated to what remains
/// (at least 1 sample each) and clients beyond that are dropped.
pub fn partition<R: Rng>(
    dataset: &[Sample],
    quantities: &[u64],
    mode: PartitionMode,
    rng: &mut R,
) -> Result<Vec<ClientDataset>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if quantities.is_empty() {
        return Err(Error::EmptyInput("quantities"));
    }
    if dataset.len() < quantities.len() {
        return Err(Error::invalid(
            "dataset",
            format!(
                "{} samples cannot cover {} clients",
                dataset.len(),
                quantities.len()
            ),
        ));
    }
    match mode {
        PartitionMode::Iid => partition_iid(dataset, quantities, rng),
        PartitionMode::NonIid {
            single_class_fraction,
        } => {
            if !(0.0..=1.0).contains(&single_class_fraction) {
                return Err(Error::invalid(
                    "single_class_fraction",
                    "must be in [0, 1]",
                ));
            }
            partition_non_iid(dataset, quantities, single_class_fraction, rng)
        }
    }
}

fn shuffled_indices<R: Rng>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    // Fisher-Yates; rand's shuffle would also work but this keeps the draw
    // count explicit for the determinism contract.
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn take_clients(
    dataset: &[Sample],
    order: &[usize],
    quantities: &[u64],
) -> Vec<ClientDataset> {
    let mut clients = Vec::with_capacity(quantities.len());
    let mut cursor = 0;
    for (id, &q) in quantities.iter().enumerate() {
        let remaining = order.len() - cursor;
        if remaining == 0 {
            break;
        }
        let take = (q as usize).min(remaining);
        let samples = order[cursor..cursor + take]
            .iter()
            .map(|&i| dataset[i].clone())
            .collect();
        cursor += take;
        clients.push(ClientDataset {
            client_id: id as u64,
            samples,
            is_malicious: false,
        });
    }
    clients
}

fn partition_iid<R: Rng>(
    dataset: &[Sample],
    quantities: &[u64],
    rng: &mut R,
) -> Result<Vec<ClientDataset>> {
    let order = shuffled_indices(dataset.len(), rng);
    Ok(take_clients(dataset, &order, quantities))
}

fn partition_non_iid<R: Rng>(
    dataset: &[Sample],
    quantities: &[u64],
    single_class_fraction: f64,
    rng: &mut R,
) -> Result<Vec<ClientDataset>> {
    let num_classes = dataset.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    // Per-class index pools, each in shuffled order.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in &shuffled_indices(dataset.len(), rng) {
        pools[dataset[i].label].push(i);
    }
    let single_count = (single_class_fraction * quantities.len() as f64).round() as usize;
    let single_count = single_count.min(quantities.len());

    // Assign classes to single-class clients round-robin, each class
    // appearing proportionally to its share of the data.
    let total = dataset.len() as f64;
    let mut class_seats: Vec<usize> = pools
        .iter()
        .map(|p| ((p.len() as f64 / total) * single_count as f64).round() as usize)
        .collect();
    let mut assigned: Vec<usize> = Vec::with_capacity(single_count);
    'fill: loop {
        let mut progressed = false;
        for (class, seats) in class_seats.iter_mut().enumerate() {
            if assigned.len() == single_count {
                break 'fill;
            }
            if *seats > 0 && !pools[class].is_empty() {
                assigned.push(class);
                *seats -= 1;
                progressed = true;
            }
        }
        if !progressed {
            // Rounding left seats short; pad from the largest pools.
            let mut by_size: Vec<usize> = (0..num_classes).collect();
            by_size.sort_by_key(|&c| std::cmp::Reverse(pools[c].len()));
            let mut k = 0;
            while assigned.len() < single_count {
                assigned.push(by_size[k % num_classes]);
                k += 1;
            }
            break;
        }
    }

    let mut used = vec![false; dataset.len()];
    let mut clients = Vec::with_capacity(quantities.len());
    for (id, &q) in quantities.iter().enumerate().take(single_count) {
        let class = assigned[id];
        let pool = &mut pools[class];
        let take = (q as usize).min(pool.len());
        let mut samples = Vec::with_capacity(take);
        for _ in 0..take {
            let i = pool.pop().expect("checked nonempty");
            used[i] = true;
            samples.push(dataset[i].clone());
        }
        if samples.is_empty() {
            continue;
        }
        clients.push(ClientDataset {
            client_id: id as u64,
            samples,
            is_malicious: false,
        });
    }

    // Remaining clients draw IID from whatever is left, in a fresh shuffle.
    let leftovers: Vec<usize> = shuffled_indices(dataset.len(), rng)
        .into_iter()
        .filter(|&i| !used[i])
        .collect();
    let mut cursor = 0;
    for (id, &q) in quantities.iter().enumerate().skip(single_count) {
        let remaining = leftovers.len() - cursor;
        if remaining == 0 {
            break;
        }
        let take = (q as usize).min(remaining);
        let samples = leftovers[cursor..cursor + take]
            .iter()
            .map(|&i| dataset[i].clone())
            .collect();
        cursor += take;
        clients.push(ClientDataset {
            client_id: id as u64,
            samples,
            is_malicious: false,
        });
    }
    Ok(clients)
}

/// Softmax probabilities for one example under flattened C×d parameters.
fn softmax_probs(w: &[f64], features: &[f64], classes: usize) -> Vec<f64> {
    let d = features.len();
    let mut logits = vec![0.0; classes];
    for (c, logit) in logits.iter_mut().enumerate() {
        let row = &w[c * d..(c + 1) * d];
        *logit = row.iter().zip(features).map(|(&wk, &x)| wk * x).sum();
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    probs
}

/// Full-batch local gradient and the client's true quantity.
pub fn local_update(task: &Task, w: &UpdateVector, data: &ClientDataset) -> Result<(UpdateVector, u64)> {
    if w.dim() != task.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: task.param_dim(),
            actual: w.dim(),
        });
    }
    if data.samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    let q = data.quantity();
    let grad = match task {
        Task::GaussianMean { dim, .. } => {
            let mut mean = vec![0.0; *dim];
            for s in &data.samples {
                if s.features.len() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        actual: s.features.len(),
                    });
                }
                for (m, &x) in mean.iter_mut().zip(&s.features) {
                    *m += x;
                }
            }
            let count = data.samples.len() as f64;
            w.iter()
                .zip(&mean)
                .map(|(&wk, &m)| wk - m / count)
                .collect::<Vec<f64>>()
        }
        Task::SoftmaxRegression {
            dim,
            classes,
            l2_reg,
        } => {
            let mut grad = vec![0.0; dim * classes];
            for s in &data.samples {
                if s.features.len() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        actual: s.features.len(),
                    });
                }
                if s.label >= *classes {
                    return Err(Error::invalid(
                        "label",
                        format!("label {} out of range for {} classes", s.label, classes),
                    ));
                }
                let probs = softmax_probs(w.as_slice(), &s.features, *classes);
                for c in 0..*classes {
                    let coeff = probs[c] - f64::from(u8::from(c == s.label));
                    let row = &mut grad[c * dim..(c + 1) * dim];
                    for (g, &x) in row.iter_mut().zip(&s.features) {
                        *g += coeff * x;
                    }
                }
            }
            let count = data.samples.len() as f64;
            for (g, &wk) in grad.iter_mut().zip(w.iter()) {
                *g = *g / count + l2_reg * wk;
            }
            grad
        }
    };
    Ok((UpdateVector::new(grad)?, q))
}

/// Average local loss at `w`, the training metric the engine reports.
pub fn local_loss(task: &Task, w: &UpdateVector, data: &ClientDataset) -> Result<f64> {
    if w.dim() != task.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: task.param_dim(),
            actual: w.dim(),
        });
    }
    if data.samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    let count = data.samples.len() as f64;
    match task {
        Task::GaussianMean { .. } => {
            let mut acc = 0.0;
            for s in &data.samples {
                let mut sq = 0.0;
                for (&wk, &x) in w.iter().zip(&s.features) {
                    sq += (wk - x) * (wk - x);
                }
                acc += 0.5 * sq;
            }
            Ok(acc / count)
        }
        Task::SoftmaxRegression {
            dim: _,
            classes,
            l2_reg,
        } => {
            let mut acc = 0.0;
            for s in &data.samples {
                let probs = softmax_probs(w.as_slice(), &s.features, *classes);
                acc -= probs[s.label].max(1e-300).ln();
            }
            let penalty: f64 = 0.5 * l2_reg * w.iter().map(|&wk| wk * wk).sum::<f64>();
            Ok(acc / count + penalty)
        }
    }
}

/// Fraction of samples whose argmax class matches the label.
pub fn classification_accuracy(
    w: &UpdateVector,
    classes: usize,
    samples: &[Sample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    let mut hits = 0usize;
    for s in samples {
        let probs = softmax_probs(w.as_slice(), &s.features, classes);
        let mut best = 0;
        for c in 1..classes {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        if best == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxFormat {
            path: path.display().to_string(),
            offset: offset as u64,
            message: "file truncated inside a header field".into(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label pair into samples with pixels scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Sample>> {
    let images = fs::read(images_path).map_err(|source| Error::Io {
        path: images_path.display().to_string(),
        source,
    })?;
    let labels = fs::read(labels_path).map_err(|source| Error::Io {
        path: labels_path.display().to_string(),
        source,
    })?;

    let magic = read_u32_be(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat {
            path: images_path.display().to_string(),
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"),
        });
    }
    let count = read_u32_be(&images, 4, images_path)? as usize;
    let rows = read_u32_be(&images, 8, images_path)? as usize;
    let cols = read_u32_be(&images, 12, images_path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(Error::IdxFormat {
            path: images_path.display().to_string(),
            offset: 8,
            message: format!("expected 28x28 images, header says {rows}x{cols}"),
        });
    }
    let pixel_bytes = count * rows * cols;
    if images.len() != 16 + pixel_bytes {
        return Err(Error::IdxFormat {
            path: images_path.display().to_string(),
            offset: 16,
            message: format!(
                "expected {} pixel bytes after the header, found {}",
                pixel_bytes,
                images.len() - 16
            ),
        });
    }

    let label_magic = read_u32_be(&labels, 0, labels_path)?;
    if label_magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat {
            path: labels_path.display().to_string(),
            offset: 0,
            message: format!(
                "bad label magic 0x{label_magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            ),
        });
    }
    let label_count = read_u32_be(&labels, 4, labels_path)? as usize;
    if label_count != count {
        return Err(Error::IdxFormat {
            path: labels_path.display().to_string(),
            offset: 4,
            message: format!("{label_count} labels for {count} images"),
        });
    }
    if labels.len() != 8 + count {
        return Err(Error::IdxFormat {
            path: labels_path.display().to_string(),
            offset: 8,
            message: format!(
                "expected {} label bytes after the header, found {}",
                count,
                labels.len() - 8
            ),
        });
    }

    let mut samples = Vec::with_capacity(count);
    let dim = rows * cols;
    for i in 0..count {
        let label = labels[8 + i] as usize;
        if label > 9 {
            return Err(Error::IdxFormat {
                path: labels_path.display().to_string(),
                offset: 8 + i as u64,
                message: format!("label {label} outside 0..9"),
            });
        }
        let start = 16 + i * dim;
        let features = images[start..start + dim]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        samples.push(Sample { features, label });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    fn flat_dataset(per_class: usize, classes: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for label in 0..classes {
            for i in 0..per_class {
                out.push(Sample {
                    features: vec![label as f64, i as f64],
                    label,
                });
            }
        }
        out
    }

    #[test]
    fn quantities_degenerate_when_sigma_zero() {
        let mut rng = derive(7, Stream::Quantities, &[]);
        let q = sample_quantities(100, 20.0, 0.0, &mut rng).unwrap();
        assert!(q.iter().all(|&v| v == 20));
    }

    #[test]
    fn quantities_all_positive_with_sane_mean() {
        let mut rng = derive(7, Stream::Quantities, &[]);
        let q = sample_quantities(3000, 20.0, 3.0, &mut rng).unwrap();
        assert!(q.iter().all(|&v| v >= 1));
        let mean = q.iter().map(|&v| v as f64).sum::<f64>() / q.len() as f64;
        assert!(
            (10.0..=40.0).contains(&mean),
            "empirical mean {mean} outside the lognormal band"
        );
    }

    #[test]
    fn quantities_median_band() {
        let mut rng = derive(11, Stream::Quantities, &[]);
        let mut q = sample_quantities(10_000, 20.0, 3.0, &mut rng).unwrap();
        q.sort_unstable();
        let median = q[q.len() / 2] as f64;
        // Lognormal median is target_mean·e^{−σ²/2} ≈ 0.22; clamped draws
        // put the sample median at 1, inside [0.5·0.22, 2·0.22] rounded up.
        let center = 20.0 * (-4.5f64).exp();
        assert!(median >= (center * 0.5).floor().max(1.0));
        assert!(median <= (center * 2.0).ceil().max(1.0));
    }

    #[test]
    fn partition_truncates_on_exhaustion() {
        let dataset = flat_dataset(50, 2);
        let mut rng = derive(3, Stream::Data, &[]);
        let clients = partition(&dataset, &[60, 60], PartitionMode::Iid, &mut rng).unwrap();
        assert_eq!(clients.len(), 2);
        assert_eq!(clients[0].samples.len(), 60);
        assert_eq!(clients[1].samples.len(), 40);
    }

    #[test]
    fn partition_iid_never_duplicates() {
        let dataset = flat_dataset(40, 3);
        let mut rng = derive(5, Stream::Data, &[]);
        let clients = partition(&dataset, &[7, 13, 21, 30], PartitionMode::Iid, &mut rng).unwrap();
        let mut seen = std::collections::HashSet::new();
        for c in &clients {
            for s in &c.samples {
                let key = (s.label, s.features[1] as i64);
                assert!(seen.insert(key), "duplicate sample {key:?}");
            }
        }
        assert!(clients.iter().all(|c| !c.samples.is_empty()));
    }

    #[test]
    fn partition_single_class_clients() {
        let dataset = flat_dataset(60, 4);
        let quantities = vec![10u64; 12];
        let mut rng = derive(9, Stream::Data, &[]);
        let mode = PartitionMode::NonIid {
            single_class_fraction: 1.0,
        };
        let clients = partition(&dataset, &quantities, mode, &mut rng).unwrap();
        for c in &clients {
            let labels: std::collections::HashSet<usize> =
                c.samples.iter().map(|s| s.label).collect();
            assert_eq!(labels.len(), 1, "client {} mixes classes", c.client_id);
        }
    }

    #[test]
    fn partition_non_iid_majority_single_class() {
        let dataset = flat_dataset(100, 5);
        let quantities = vec![8u64; 20];
        let mut rng = derive(13, Stream::Data, &[]);
        let mode = PartitionMode::NonIid {
            single_class_fraction: 0.9,
        };
        let clients = partition(&dataset, &quantities, mode, &mut rng).unwrap();
        let single = clients
            .iter()
            .filter(|c| {
                c.samples
                    .iter()
                    .map(|s| s.label)
                    .collect::<std::collections::HashSet<_>>()
                    .len()
                    == 1
            })
            .count();
        assert!(single >= 18, "only {single} single-class clients");
        let mut seen = std::collections::HashSet::new();
        for c in &clients {
            for s in &c.samples {
                let key = (s.label, s.features[1] as i64);
                assert!(seen.insert(key), "duplicate sample {key:?}");
            }
        }
    }

    #[test]
    fn partition_needs_enough_data() {
        let dataset = flat_dataset(1, 2);
        let mut rng = derive(1, Stream::Data, &[]);
        assert!(partition(&dataset, &[1, 1, 1], PartitionMode::Iid, &mut rng).is_err());
    }

    #[test]
    fn gaussian_update_is_w_minus_sample_mean() {
        let task = Task::GaussianMean {
            dim: 1,
            true_mean: vec![0.0],
            std: vec![1.0],
        };
        let data = ClientDataset {
            client_id: 0,
            samples: vec![
                Sample {
                    features: vec![3.0],
                    label: 0,
                },
                Sample {
                    features: vec![7.0],
                    label: 0,
                },
            ],
            is_malicious: false,
        };
        let w = UpdateVector::new(vec![5.0]).unwrap();
        let (g, q) = local_update(&task, &w, &data).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);
        assert_eq!(q, 2);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let task = Task::SoftmaxRegression {
            dim: 3,
            classes: 3,
            l2_reg: 0.01,
        };
        let mut rng = derive(21, Stream::Verify, &[]);
        let normal = GaussDist::new(0.0, 1.0).unwrap();
        for trial in 0..20 {
            let samples: Vec<Sample> = (0..5)
                .map(|i| Sample {
                    features: (0..3).map(|_| normal.sample(&mut rng)).collect(),
                    label: (i + trial) % 3,
                })
                .collect();
            let data = ClientDataset {
                client_id: 0,
                samples,
                is_malicious: false,
            };
            let w_values: Vec<f64> = (0..9).map(|_| 0.5 * normal.sample(&mut rng)).collect();
            let w = UpdateVector::new(w_values.clone()).unwrap();
            let (g, _) = local_update(&task, &w, &data).unwrap();

            let h = 1e-6;
            for k in 0..9 {
                let mut plus = w_values.clone();
                plus[k] += h;
                let mut minus = w_values.clone();
                minus[k] -= h;
                let lp = local_loss(&task, &UpdateVector::new(plus).unwrap(), &data).unwrap();
                let lm = local_loss(&task, &UpdateVector::new(minus).unwrap(), &data).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(1e-3);
                assert!(
                    ((g[k] - fd) / denom).abs() < 1e-5,
                    "coordinate {k}: analytic {} vs finite difference {fd}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        // Weights that score class 1 higher for positive features.
        let w = UpdateVector::new(vec![-1.0, 1.0]).unwrap();
        let samples = vec![
            Sample {
                features: vec![2.0],
                label: 1,
            },
            Sample {
                features: vec![-2.0],
                label: 0,
            },
            Sample {
                features: vec![1.0],
                label: 0,
            },
        ];
        let acc = classification_accuracy(&w, 2, &samples).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn idx_roundtrip_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("images.idx");
        let labels_path = dir.path().join("labels.idx");

        let mut images: Vec<u8> = Vec::new();
        images.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend(4u32.to_be_bytes());
        images.extend(28u32.to_be_bytes());
        images.extend(28u32.to_be_bytes());
        for i in 0..4u32 {
            for p in 0..784u32 {
                images.push(((i * 37 + p) % 256) as u8);
            }
        }
        let mut labels: Vec<u8> = Vec::new();
        labels.extend(IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend(4u32.to_be_bytes());
        labels.extend([7u8, 0, 9, 3]);
        fs::write(&images_path, &images).unwrap();
        fs::write(&labels_path, &labels).unwrap();

        let samples = load_idx(&images_path, &labels_path).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0].features.len(), 784);
        assert_eq!(samples[2].label, 9);
        // Pixel (image 1, index 0) holds 37, scaled by 255.
        assert!((samples[1].features[0] - 37.0 / 255.0).abs() < 1e-12);

        // Corrupt the image magic and expect a rejection naming offset 0.
        let mut bad = images.clone();
        bad[0] = 0xff;
        fs::write(&images_path, &bad).unwrap();
        let err = load_idx(&images_path, &labels_path).unwrap_err();
        assert!(err.to_string().contains("magic"));

        // Truncate pixels and expect a length complaint.
        fs::write(&images_path, &images[..images.len() - 10]).unwrap();
        let err = load_idx(&images_path, &labels_path).unwrap_err();
        assert!(err.to_string().contains("pixel"));
    }
}
