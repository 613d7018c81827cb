//! Dense vector arithmetic shared by every aggregation rule.
//!
//! All reductions accumulate in f64 in index order with no reassociation, so
//! results are bit-reproducible for identical inputs on any platform with
//! IEEE-754 doubles.

use crate::error::{Error, Result};

/// A finite, non-empty model update (or parameter vector).
///
/// Finiteness and dimensionality are enforced at construction; code past this
/// boundary can assume both.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateVector(Vec<f64>);

impl UpdateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("update vector"));
        }
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "update vector",
                    index,
                });
            }
        }
        Ok(UpdateVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for UpdateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_same_dim(a: &UpdateVector, b: &UpdateVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Sum of absolute coordinate differences.
pub fn l1_distance(a: &UpdateVector, b: &UpdateVector) -> Result<f64> {
    check_same_dim(a, b)?;
    let mut acc = 0.0;
    for k in 0..a.dim() {
        acc += (a[k] - b[k]).abs();
    }
    Ok(acc)
}

/// Euclidean norm.
pub fn l2_norm(a: &UpdateVector) -> f64 {
    let mut acc = 0.0;
    for v in a.iter() {
        acc += v * v;
    }
    acc.sqrt()
}

/// Euclidean distance, provided for the same callers as [`l1_distance`].
pub fn l2_distance(a: &UpdateVector, b: &UpdateVector) -> Result<f64> {
    check_same_dim(a, b)?;
    let mut acc = 0.0;
    for k in 0..a.dim() {
        let d = a[k] - b[k];
        acc += d * d;
    }
    Ok(acc.sqrt())
}

fn check_uniform(vectors: &[&UpdateVector]) -> Result<usize> {
    let first = vectors.first().ok_or(Error::EmptyInput("vector list"))?;
    let dim = first.dim();
    for v in vectors.iter().skip(1) {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// Weighted arithmetic mean with non-negative finite weights summing to a
/// positive total.
///
/// Accumulation runs in input order; scaling all weights by a common factor
/// changes the result only through the final division.
pub fn weighted_mean(vectors: &[&UpdateVector], weights: &[f64]) -> Result<UpdateVector> {
    let dim = check_uniform(vectors)?;
    if weights.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: weights.len(),
        });
    }
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid("weights", format!("must be non-negative and finite, got {w}")));
        }
    }
    let mut total = 0.0;
    for &w in weights {
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::invalid("weights", "sum of weights must be positive"));
    }
    let mut out = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        for k in 0..dim {
            out[k] += w * v[k];
        }
    }
    for x in out.iter_mut() {
        *x /= total;
    }
    UpdateVector::new(out)
}

/// Unweighted mean, the `weights = 1` special case kept separate so callers
/// that must not weight by quantity cannot do so by accident.
pub fn mean(vectors: &[&UpdateVector]) -> Result<UpdateVector> {
    let dim = check_uniform(vectors)?;
    let n = vectors.len() as f64;
    let mut out = vec![0.0; dim];
    for v in vectors {
        for k in 0..dim {
            out[k] += v[k];
        }
    }
    for x in out.iter_mut() {
        *x /= n;
    }
    UpdateVector::new(out)
}

/// Coordinate-wise median; even counts average the two central order
/// statistics.
pub fn coordinate_median(vectors: &[&UpdateVector]) -> Result<UpdateVector> {
    let dim = check_uniform(vectors)?;
    let n = vectors.len();
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; n];
    for k in 0..dim {
        for (i, v) in vectors.iter().enumerate() {
            column[i] = v[k];
        }
        column.sort_by(f64::total_cmp);
        out[k] = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    UpdateVector::new(out)
}

/// Coordinate-wise trimmed mean: drop the `trim_k` smallest and largest
/// values per coordinate, then average the rest in sorted order.
pub fn coordinate_trimmed_mean(vectors: &[&UpdateVector], trim_k: usize) -> Result<UpdateVector> {
    let dim = check_uniform(vectors)?;
    let n = vectors.len();
    if 2 * trim_k >= n {
        return Err(Error::invalid(
            "trim_k",
            format!("2 * trim_k = {} must be < count = {n}", 2 * trim_k),
        ));
    }
    let kept = (n - 2 * trim_k) as f64;
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; n];
    for k in 0..dim {
        for (i, v) in vectors.iter().enumerate() {
            column[i] = v[k];
        }
        column.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for &x in &column[trim_k..n - trim_k] {
            acc += x;
        }
        out[k] = acc / kept;
    }
    UpdateVector::new(out)
}
