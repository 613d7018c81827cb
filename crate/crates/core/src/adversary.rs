//! Malicious update and quantity generators.
//!
//! Each operation is a pure transform over the colluding clients' honestly
//! computed updates and true quantities. The engine decides which clients
//! collude and what they submit; nothing here touches global state.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numkit::UpdateVector;

/// Which transform malicious clients apply, plus the quantity-enlarging
/// factor shared by all attack kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default)]
    pub kind: AttackKind,
    /// Quantity-enlarging factor; 0 disables quantity inflation.
    #[serde(default)]
    pub alpha_q: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            alpha_q: 0.0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_q >= 0.0) || !self.alpha_q.is_finite() {
            return Err(Error::invalid("attack.alpha_q", "must be finite and ≥ 0"));
        }
        match self.kind {
            AttackKind::Lie { z: Some(z) } if !z.is_finite() => {
                Err(Error::invalid("attack.kind.z", "must be finite"))
            }
            AttackKind::Optimize { lambda } if !(lambda > 0.0) || !lambda.is_finite() => {
                Err(Error::invalid("attack.kind.lambda", "must be positive and finite"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    /// Malicious clients behave exactly like benign ones.
    #[default]
    None,
    /// Train on involution-flipped labels, submit the honest gradient of the
    /// poisoned data.
    LabelFlip,
    /// Submit the colluders' mean shifted by z standard deviations. A `z` of
    /// `None` selects the per-round default from `lie_default_z`.
    Lie { z: Option<f64> },
    /// Submit the colluders' mean pushed λ deviations against its own sign.
    Optimize { lambda: f64 },
}

/// Label involution y → C − 1 − y.
pub fn flip_label(y: usize, num_classes: usize) -> Result<usize> {
    if num_classes < 2 {
        return Err(Error::invalid("num_classes", "must be at least 2"));
    }
    if y >= num_classes {
        return Err(Error::invalid(
            "y",
            format!("label {y} out of range for {num_classes} classes"),
        ));
    }
    Ok(num_classes - 1 - y)
}

fn column_mean_std(updates: &[&UpdateVector]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = updates.first().ok_or(Error::EmptyInput("colluders"))?;
    let dim = first.dim();
    for u in updates {
        if u.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: u.dim(),
            });
        }
    }
    let count = updates.len() as f64;
    let mut mean = vec![0.0; dim];
    for u in updates {
        for (m, &v) in mean.iter_mut().zip(u.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut std = vec![0.0; dim];
    if updates.len() >= 2 {
        for u in updates {
            for (s, (&v, &m)) in std.iter_mut().zip(u.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / (count - 1.0)).sqrt();
        }
    }
    Ok((mean, std))
}

/// Coordinate-wise μ + z·σ over the colluders' honest updates; every
/// colluder submits the result. A single colluder has no deviation estimate
/// and falls back to its own honest update.
pub fn lie_update(colluders: &[&UpdateVector], z: f64) -> Result<UpdateVector> {
    if colluders.len() == 1 {
        return Ok(colluders[0].clone());
    }
    let (mean, std) = column_mean_std(colluders)?;
    UpdateVector::new(
        mean.iter()
            .zip(&std)
            .map(|(&m, &s)| m + z * s)
            .collect(),
    )
}

/// Coordinate-wise μ − λ·sign(μ)·σ over the colluders' honest updates.
/// With one colluder σ is the zero vector, so the result degenerates to μ.
pub fn optimize_update(colluders: &[&UpdateVector], lambda: f64) -> Result<UpdateVector> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be positive and finite"));
    }
    let (mean, std) = column_mean_std(colluders)?;
    UpdateVector::new(
        mean.iter()
            .zip(&std)
            .map(|(&m, &s)| m - lambda * sign_or_zero(m) * s)
            .collect(),
    )
}

/// `f64::signum` maps 0.0 to 1.0; the attack wants sign(0) = 0.
fn sign_or_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// The single inflated quantity every colluder reports:
/// round(μ_q + α_q·σ_q) over the colluders' true quantities, at least 1.
pub fn enhanced_quantity(quantities: &[u64], alpha_q: f64) -> Result<u64> {
    if quantities.is_empty() {
        return Err(Error::EmptyInput("quantities"));
    }
    if !(alpha_q >= 0.0) || !alpha_q.is_finite() {
        return Err(Error::invalid("alpha_q", "must be finite and ≥ 0"));
    }
    let count = quantities.len() as f64;
    let mean = quantities.iter().map(|&q| q as f64).sum::<f64>() / count;
    let std = if quantities.len() >= 2 {
        let ss: f64 = quantities
            .iter()
            .map(|&q| (q as f64 - mean) * (q as f64 - mean))
            .sum();
        (ss / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(((mean + alpha_q * std).round() as u64).max(1))
}

/// Default deviation multiplier for the mean-shift attack: the largest z
/// such that the shifted update still has enough closer-looking supporters
/// to survive a majority-style defense, clamped to [0, 3].
///
/// With m colluders among n submissions the attacker needs
/// s = ⌊n/2⌋ + 1 − m benign updates to look farther out than its own, so
/// z = Φ⁻¹(1 − s/(n − m)).
pub fn lie_default_z(round_size: usize, colluder_count: usize) -> f64 {
    if colluder_count == 0 || round_size == 0 {
        return 0.0;
    }
    if colluder_count >= round_size {
        return 3.0;
    }
    let supporters = (round_size / 2 + 1) as f64 - colluder_count as f64;
    let p = 1.0 - supporters / (round_size - colluder_count) as f64;
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 3.0;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(p).clamp(0.0, 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(rows: &[&[f64]]) -> Vec<UpdateVector> {
        rows.iter()
            .map(|r| UpdateVector::new(r.to_vec()).unwrap())
            .collect()
    }

    fn refs(owned: &[UpdateVector]) -> Vec<&UpdateVector> {
        owned.iter().collect()
    }

    #[test]
    fn flip_label_examples() {
        assert_eq!(flip_label(3, 10).unwrap(), 6);
        assert_eq!(flip_label(0, 2).unwrap(), 1);
        for c in 2..6 {
            for y in 0..c {
                assert_eq!(flip_label(flip_label(y, c).unwrap(), c).unwrap(), y);
            }
        }
        assert!(flip_label(10, 10).is_err());
        assert!(flip_label(0, 1).is_err());
    }

    #[test]
    fn lie_examples() {
        let owned = vectors(&[&[1.0], &[2.0], &[3.0]]);
        let out = lie_update(&refs(&owned), 1.0).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-12);

        let out = lie_update(&refs(&owned), 0.0).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);

        let owned = vectors(&[&[0.0], &[0.0]]);
        let out = lie_update(&refs(&owned), 5.0).unwrap();
        assert_eq!(out[0], 0.0);

        let owned = vectors(&[&[7.0, -1.0]]);
        let out = lie_update(&refs(&owned), 2.0).unwrap();
        assert_eq!(out.as_slice(), &[7.0, -1.0]);

        assert!(lie_update(&[], 1.0).is_err());
    }

    #[test]
    fn optimize_examples() {
        // Colluders with μ = [2, −2] and Bessel σ = [1, 1].
        let owned = vectors(&[&[1.0, -1.0], &[2.0, -2.0], &[3.0, -3.0]]);
        let out = optimize_update(&refs(&owned), 4.0).unwrap();
        assert!((out[0] - -2.0).abs() < 1e-12);
        assert!((out[1] - 2.0).abs() < 1e-12);

        let out = optimize_update(&refs(&owned), 1e-9).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-8);
        assert!((out[1] - -2.0).abs() < 1e-8);

        // Zero mean coordinates stay put under the sign(0) = 0 convention.
        let owned = vectors(&[&[-1.0], &[1.0], &[0.0]]);
        let out = optimize_update(&refs(&owned), 100.0).unwrap();
        assert_eq!(out[0], 0.0);

        assert!(optimize_update(&[], 1.0).is_err());
        assert!(optimize_update(&refs(&owned), 0.0).is_err());
    }

    #[test]
    fn enhanced_quantity_examples() {
        assert_eq!(enhanced_quantity(&[10, 20, 30], 2.0).unwrap(), 40);
        assert_eq!(enhanced_quantity(&[1, 2], 0.0).unwrap(), 2);
        assert_eq!(enhanced_quantity(&[5], 10.0).unwrap(), 5);
        assert!(enhanced_quantity(&[], 1.0).is_err());
        assert!(enhanced_quantity(&[3], -0.5).is_err());
    }

    #[test]
    fn enhanced_quantity_monotone_in_alpha() {
        let quantities = [1u64, 4, 9, 400, 2];
        let mut last = 0;
        for alpha in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let q = enhanced_quantity(&quantities, alpha).unwrap();
            assert!(q >= last, "alpha {alpha} decreased the quantity");
            last = q;
        }
    }

    #[test]
    fn lie_default_z_values() {
        // Half-malicious round: needs 1 supporter among 10 others, p = 0.9.
        assert!((lie_default_z(20, 10) - 1.2815515655446004).abs() < 1e-6);
        // Outright majority never needs supporters; clamp to the ceiling.
        assert_eq!(lie_default_z(20, 11), 3.0);
        assert_eq!(lie_default_z(20, 20), 3.0);
        // A lone colluder in 20 would need a negative push; clamp to 0.
        assert_eq!(lie_default_z(20, 1), 0.0);
        assert_eq!(lie_default_z(20, 0), 0.0);
        let z = lie_default_z(50, 5);
        assert!(z > 0.0 && z < 0.2, "z was {z}");
    }

    #[test]
    fn attack_spec_validation() {
        assert!(AttackSpec::default().validate().is_ok());
        let spec = AttackSpec {
            kind: AttackKind::Optimize { lambda: 0.0 },
            alpha_q: 0.0,
        };
        assert!(spec.validate().is_err());
        let spec = AttackSpec {
            kind: AttackKind::Lie { z: Some(f64::NAN) },
            alpha_q: 0.0,
        };
        assert!(spec.validate().is_err());
        let spec = AttackSpec {
            kind: AttackKind::None,
            alpha_q: -1.0,
        };
        assert!(spec.validate().is_err());
    }
}
