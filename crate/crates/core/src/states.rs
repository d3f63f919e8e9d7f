//! The maximally entangled state, fidelity, and the isotropic family.
//!
//! `Φ⁺(K) = K^{-1/2} Σᵢ |i⟩⊗|i⟩` is fixed in the computational basis; every
//! fidelity in the crate is measured against this choice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{projector, BipartiteLabel, CMatrix, CVector, DensityOperator, C64};

/// Slack allowed on the `[0, 1]` fidelity range before rejecting.
pub const FIDELITY_SLACK: f64 = 1e-12;

/// The pair `(K, F)` naming an isotropic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicParams {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "F")]
    pub f: f64,
}

impl IsotropicParams {
    /// Rejects `F` more than [`FIDELITY_SLACK`] outside `[0, 1]`; values
    /// within the slack are clamped.
    pub fn new(k: usize, f: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("isotropic dimension must be positive".into()));
        }
        let f = clamp_fidelity(f)?;
        if k == 1 && (f - 1.0).abs() > FIDELITY_SLACK {
            return Err(Error::Domain(format!("a 1x1 state has fidelity 1, got {f}")));
        }
        Ok(IsotropicParams { k, f: if k == 1 { 1.0 } else { f } })
    }

    /// Weight `a` of `Φ⁺Φ⁺†` in `a Φ⁺Φ⁺† + (1 - a) I/K²`.
    pub fn mixing(&self) -> f64 {
        if self.k == 1 {
            return 1.0;
        }
        let k2 = (self.k * self.k) as f64;
        (self.f * k2 - 1.0) / (k2 - 1.0)
    }

    /// Inverse of [`mixing`](Self::mixing).
    pub fn from_mixing(k: usize, a: f64) -> Result<Self> {
        let k2 = (k * k) as f64;
        Self::new(k, (a * (k2 - 1.0) + 1.0) / k2)
    }
}

pub(crate) fn clamp_fidelity(f: f64) -> Result<f64> {
    if !f.is_finite() || !(-FIDELITY_SLACK..=1.0 + FIDELITY_SLACK).contains(&f) {
        return Err(Error::Domain(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}

pub fn phi_plus(k: usize) -> Result<CVector> {
    if k == 0 {
        return Err(Error::Domain("Φ⁺ needs a positive dimension".into()));
    }
    let amp = C64::new(1.0 / (k as f64).sqrt(), 0.0);
    let mut v = CVector::zeros(k * k);
    for i in 0..k {
        v[i * k + i] = amp;
    }
    Ok(v)
}

pub fn phi_plus_projector(k: usize) -> Result<CMatrix> {
    Ok(projector(&phi_plus(k)?))
}

/// `⟨Φ⁺|ρ|Φ⁺⟩` on `V ⊗ V`.
pub fn fidelity(rho: &DensityOperator) -> Result<f64> {
    let label = rho.bipartite()?;
    if !label.is_square() {
        return Err(Error::Labelling(format!("fidelity needs equal factors, got {}x{}", label.dim_a, label.dim_b)));
    }
    Ok(fidelity_of_matrix(rho.matrix(), label.dim_a))
}

/// Overlap with `Φ⁺(k)` of a `k² × k²` matrix. Only the `k²` entries on the
/// `|ii⟩⟨jj|` positions contribute.
pub(crate) fn fidelity_of_matrix(m: &CMatrix, k: usize) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            s += m[(i * k + i, j * k + j)];
        }
    }
    s.re / k as f64
}

/// `a Φ⁺Φ⁺† + (1 - a) I/K²`.
pub fn isotropic_state(p: IsotropicParams) -> Result<DensityOperator> {
    let label = BipartiteLabel::square(p.k)?;
    DensityOperator::new_unchecked(label, isotropic_matrix(p.k, p.f))
}

pub(crate) fn isotropic_matrix(k: usize, f: f64) -> CMatrix {
    let d = k * k;
    if k == 1 {
        return CMatrix::identity(1, 1);
    }
    let k2 = d as f64;
    let a = (f * k2 - 1.0) / (k2 - 1.0);
    let mut m = CMatrix::identity(d, d).scale((1.0 - a) / k2);
    let w = a / k as f64;
    for i in 0..k {
        for j in 0..k {
            m[(i * k + i, j * k + j)] += w;
        }
    }
    m
}

/// Canonical isotropic parameters of equal fidelity. Does not check that
/// `rho` is isotropic.
pub fn isotropic_fidelity(rho: &DensityOperator) -> Result<IsotropicParams> {
    let f = fidelity(rho)?;
    IsotropicParams::new(rho.bipartite()?.dim_a, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, real_matrix, Label};
    use approx::assert_abs_diff_eq;

    #[test]
    fn phi_plus_examples() {
        let v1 = phi_plus(1).unwrap();
        assert_eq!(v1.len(), 1);
        assert_abs_diff_eq!(v1[0].re, 1.0);
        let v2 = phi_plus(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [h, 0.0, 0.0, h];
        for (got, w) in v2.iter().zip(want) {
            assert_abs_diff_eq!(got.re, w, epsilon = 1e-15);
        }
        for k in [2, 3, 5] {
            assert_abs_diff_eq!(phi_plus(k).unwrap().norm(), 1.0, epsilon = 1e-15);
        }
        assert!(matches!(phi_plus(0), Err(Error::Domain(_))));
    }

    #[test]
    fn fidelity_examples() {
        for k in 2..5 {
            let label = BipartiteLabel::square(k).unwrap();
            let phi = DensityOperator::new(label, phi_plus_projector(k).unwrap()).unwrap();
            assert_abs_diff_eq!(fidelity(&phi).unwrap(), 1.0, epsilon = 1e-14);
            let mixed = DensityOperator::maximally_mixed(label);
            assert_abs_diff_eq!(fidelity(&mixed).unwrap(), 1.0 / (k * k) as f64, epsilon = 1e-15);
        }
        let ket00 = DensityOperator::new(
            BipartiteLabel::square(2).unwrap(),
            real_matrix(4, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(fidelity(&ket00).unwrap(), 0.5, epsilon = 1e-15);
        let p = isotropic_fidelity(&ket00).unwrap();
        assert_eq!(p.k, 2);
        assert_abs_diff_eq!(p.f, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_needs_matching_factors() {
        let rho = DensityOperator::maximally_mixed(BipartiteLabel::new(2, 3).unwrap());
        assert!(matches!(fidelity(&rho), Err(Error::Labelling(_))));
        let rho = DensityOperator::maximally_mixed(Label::Single(4));
        assert!(matches!(fidelity(&rho), Err(Error::Labelling(_))));
    }

    #[test]
    fn isotropic_examples() {
        let pure = isotropic_state(IsotropicParams::new(2, 1.0).unwrap()).unwrap();
        assert!(max_abs_diff(pure.matrix(), &phi_plus_projector(2).unwrap()) < 1e-15);

        let mixed = isotropic_state(IsotropicParams::new(3, 1.0 / 9.0).unwrap()).unwrap();
        assert!(max_abs_diff(mixed.matrix(), &CMatrix::identity(9, 9).unscale(9.0)) < 1e-15);

        let p = IsotropicParams::new(2, 0.7).unwrap();
        assert_abs_diff_eq!(p.mixing(), 0.6, epsilon = 1e-15);
        let rho = isotropic_state(p).unwrap();
        let want = phi_plus_projector(2).unwrap().scale(0.6) + CMatrix::identity(4, 4).scale(0.1);
        assert!(max_abs_diff(rho.matrix(), &want) < 1e-15);
        // direct overlap oracle
        let phi = phi_plus(2).unwrap();
        let overlap = (phi.adjoint() * rho.matrix() * &phi)[(0, 0)].re;
        assert_abs_diff_eq!(overlap, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn isotropic_round_trip_grid() {
        for k in 2..=4 {
            for f in [0.0, 0.3, 1.0] {
                let rho = isotropic_state(IsotropicParams::new(k, f).unwrap()).unwrap();
                let p = isotropic_fidelity(&rho).unwrap();
                assert_eq!(p.k, k);
                assert_abs_diff_eq!(p.f, f, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_range_is_enforced() {
        assert!(IsotropicParams::new(2, 1.0 + 1e-13).is_ok());
        assert!(matches!(IsotropicParams::new(2, 1.0 + 1e-9), Err(Error::Domain(_))));
        assert!(matches!(IsotropicParams::new(2, -0.1), Err(Error::Domain(_))));
        assert!(matches!(IsotropicParams::new(1, 0.5), Err(Error::Domain(_))));
        assert!(IsotropicParams::new(1, 1.0).is_ok());
    }

    #[test]
    fn mixing_round_trip() {
        let p = IsotropicParams::new(5, 0.37).unwrap();
        let q = IsotropicParams::from_mixing(5, p.mixing()).unwrap();
        assert_abs_diff_eq!(p.f, q.f, epsilon = 1e-15);
    }
}
