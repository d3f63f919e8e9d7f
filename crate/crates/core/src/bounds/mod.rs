//! Scalar entanglement bounds for isotropic states.
//!
//! All entropies are in bits, with `0 log 0 = 0`. Dimensions are `u128` so
//! that the distillation accounting can feed in output dimensions far beyond
//! anything that is ever simulated.

mod formation;

pub use formation::{
    ef_numeric_estimate, ef_numeric_estimate_with, ensemble_entanglement, pure_state_entanglement, EfEstimate,
    EfSearch, MAX_EF_DIMENSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::clamp_fidelity;

/// `x log₂ x`, zero at `x = 0`.
pub fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// `log₂ K`, exact when `K` is a power of two.
pub fn log2_dim(k: u128) -> f64 {
    if k.is_power_of_two() {
        k.trailing_zeros() as f64
    } else {
        (k as f64).log2()
    }
}

/// `H₂(F) = −F log₂ F − (1−F) log₂(1−F)`
pub fn binary_entropy(f: f64) -> Result<f64> {
    let f = clamp_fidelity(f)?;
    Ok(-xlog2x(f) - xlog2x(1.0 - f))
}

/// Shannon entropy in bits of a spectrum. Tiny negative eigenvalues from
/// rounding are treated as zero.
pub fn von_neumann_entropy(eigenvalues: &[f64]) -> f64 {
    -eigenvalues.iter().map(|&x| xlog2x(x)).sum::<f64>()
}

fn check_k(k: u128) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(())
}

/// Entanglement-of-formation interval and the p.p.t. bound of an isotropic
/// state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfBounds {
    #[serde(rename = "K")]
    pub k: u128,
    #[serde(rename = "F")]
    pub f: f64,
    pub lower: f64,
    pub upper: f64,
    pub ppt_bound: f64,
}

/// Lower bound `max(0, F log₂K − H₂(F))`; upper bound from the convex
/// combination of the fidelity-1 and fidelity-`1/K` isotropic states, which
/// is `(FK−1)/(K−1) log₂K` for `F ≥ 1/K` and `0` below.
pub fn ef_bounds_isotropic(k: u128, f: f64) -> Result<EfBounds> {
    check_k(k)?;
    let f = clamp_fidelity(f)?;
    if k == 1 {
        return Ok(EfBounds { k, f, lower: 0.0, upper: 0.0, ppt_bound: 0.0 });
    }
    let log_k = log2_dim(k);
    let inv_k = 1.0 / k as f64;
    let lower = (f * log_k - binary_entropy(f)?).max(0.0);
    let upper = if f >= inv_k { ((f - inv_k) / (1.0 - inv_k) * log_k).min(f * log_k) } else { 0.0 };
    Ok(EfBounds { k, f, lower, upper, ppt_bound: ppt_bound_isotropic(k, f)? })
}

/// `log₂K + F log₂F + (1−F) log₂(1−F) − (1−F) log₂(K−1)`; may be negative.
pub fn ppt_bound_isotropic(k: u128, f: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("p.p.t. bound needs K >= 2, got {k}")));
    }
    let f = clamp_fidelity(f)?;
    Ok(log2_dim(k) + xlog2x(f) + xlog2x(1.0 - f) - (1.0 - f) * log2_dim(k - 1))
}

/// Hashing lower bound on the one-way distillable entanglement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashingRate {
    pub raw: f64,
    pub clamped: f64,
    /// The bound is only established for `K` a power of two; other `K` are
    /// evaluated but flagged.
    pub power_of_two: bool,
}

/// `log₂K + F log₂F + (1−F) log₂((1−F)/(K²−1))`
pub fn hashing_rate(k: u128, f: f64) -> Result<HashingRate> {
    if k < 2 {
        return Err(Error::Domain(format!("hashing bound needs K >= 2, got {k}")));
    }
    let f = clamp_fidelity(f)?;
    let log_k = log2_dim(k);
    // log₂(K² − 1) = 2 log₂K + log₂(1 − K⁻²)
    let kf = k as f64;
    let log_k2_minus_1 = 2.0 * log_k + (-1.0 / (kf * kf)).ln_1p() / std::f64::consts::LN_2;
    let raw = log_k + xlog2x(f) + xlog2x(1.0 - f) - (1.0 - f) * log_k2_minus_1;
    Ok(HashingRate { raw, clamped: raw.max(0.0), power_of_two: k.is_power_of_two() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // High-precision reference values (40-digit evaluation).
    const H2_09: f64 = 0.468_995_593_589_281_2;
    const HASHING_2_09: f64 = 0.372_508_156_338_603_2;
    const PPT_2_09: f64 = 0.531_004_406_410_718_8;

    #[test]
    fn binary_entropy_values() {
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.9).unwrap(), H2_09, epsilon = 1e-15);
        assert!(binary_entropy(1.2).is_err());
    }

    #[test]
    fn binary_entropy_is_concave() {
        let h: Vec<f64> = (0..=100).map(|i| binary_entropy(i as f64 / 100.0).unwrap()).collect();
        for w in h.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 0.0);
        }
    }

    #[test]
    fn ef_bounds_examples() {
        for k in 2..8u128 {
            let b = ef_bounds_isotropic(k, 1.0).unwrap();
            assert_abs_diff_eq!(b.lower, (k as f64).log2(), epsilon = 1e-12);
            assert_abs_diff_eq!(b.upper, (k as f64).log2(), epsilon = 1e-12);
            let b = ef_bounds_isotropic(k, 1.0 / k as f64).unwrap();
            assert_abs_diff_eq!(b.upper, 0.0, epsilon = 1e-12);
        }
        let b = ef_bounds_isotropic(2, 0.9).unwrap();
        assert_abs_diff_eq!(b.lower, 0.9 - H2_09, epsilon = 1e-14);
        assert_abs_diff_eq!(b.upper, 0.8, epsilon = 1e-14);
        let b = ef_bounds_isotropic(1, 1.0).unwrap();
        assert_eq!((b.lower, b.upper, b.ppt_bound), (0.0, 0.0, 0.0));
        assert!(ef_bounds_isotropic(0, 1.0).is_err());
    }

    #[test]
    fn ppt_bound_examples() {
        for k in 2..8u128 {
            assert_abs_diff_eq!(ppt_bound_isotropic(k, 1.0).unwrap(), (k as f64).log2(), epsilon = 1e-12);
            assert_abs_diff_eq!(ppt_bound_isotropic(k, 1.0 / k as f64).unwrap(), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(ppt_bound_isotropic(2, 0.9).unwrap(), PPT_2_09, epsilon = 1e-14);
    }

    #[test]
    fn hashing_examples() {
        for k in [2u128, 4, 8, 16] {
            let h = hashing_rate(k, 1.0).unwrap();
            assert_eq!(h.raw, (k as f64).log2());
            assert!(h.power_of_two);
        }
        let h = hashing_rate(2, 0.9).unwrap();
        assert_abs_diff_eq!(h.raw, HASHING_2_09, epsilon = 1e-14);
        for i in 0..=20 {
            let f = i as f64 / 20.0;
            let h = hashing_rate(4, f).unwrap();
            assert!(h.raw - ((2.0 * f - 1.0) * 2.0 - binary_entropy(f).unwrap()) >= -1e-12);
            assert!(h.clamped >= 0.0);
        }
        assert!(!hashing_rate(6, 0.9).unwrap().power_of_two);
        assert!(hashing_rate(1, 1.0).is_err());
    }

    #[test]
    fn huge_dimensions_stay_finite() {
        let k = 1u128 << 120;
        let b = ef_bounds_isotropic(k, 0.99).unwrap();
        assert_abs_diff_eq!(b.upper, 0.99 * 120.0, epsilon = 1e-9);
        assert!(b.lower <= b.upper);
        assert!(hashing_rate(k, 0.99).unwrap().raw.is_finite());
    }
}
