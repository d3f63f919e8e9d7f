//! Seeded sampling of Haar unitaries and random density operators.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{BipartiteLabel, CMatrix, DensityOperator, Label, C64};
use crate::operations::{QuantumOperation, SubOperation};

/// The generator used throughout; one seed determines every sample.
pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
pub fn substream(seed: u64, index: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed `d × d` unitary: QR of a Ginibre matrix with the phases
/// of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let qr = ginibre(rng, d, d).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Full-rank random density operator `G G† / tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, label: impl Into<Label>) -> DensityOperator {
    let label = label.into();
    let d = label.dim();
    let g = ginibre(rng, d, d);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityOperator::new_unchecked(label, m.unscale(tr)).expect("shape matches label")
}

/// Random pure state on the labelled space.
pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, label: impl Into<Label>) -> DensityOperator {
    let label = label.into();
    let v = ginibre(rng, label.dim(), 1).column(0).into_owned();
    DensityOperator::pure(label, &v).expect("nonzero Gaussian vector")
}

/// Random measuring operation with one sub-operation per entry of
/// `outputs`, each with `input.total()` Kraus matrices. The Kraus matrices
/// are the blocks of a Haar-random isometry, so the operation is complete.
pub fn random_operation<R: Rng + ?Sized>(
    rng: &mut R,
    input: BipartiteLabel,
    outputs: &[BipartiteLabel],
) -> QuantumOperation {
    assert!(!outputs.is_empty(), "need at least one outcome");
    let d = input.total();
    let rows: usize = outputs.iter().map(|o| o.total() * d).sum();
    let v = haar_unitary(rng, rows).columns(0, d).into_owned();
    let mut at = 0;
    let subops = outputs
        .iter()
        .map(|&out| {
            let kraus = (0..d)
                .map(|_| {
                    let block = v.rows(at, out.total()).into_owned();
                    at += out.total();
                    block
                })
                .collect();
            SubOperation::new(input, out, kraus).expect("block shapes match labels")
        })
        .collect();
    QuantumOperation::new(input, subops).expect("isometry blocks are complete")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, BipartiteLabel};

    #[test]
    fn haar_samples_are_unitary() {
        let mut r = rng(3);
        for d in 1..6 {
            let u = haar_unitary(&mut r, d);
            assert!(max_abs_diff(&(u.adjoint() * &u), &identity(d)) < 1e-12);
        }
    }

    #[test]
    fn random_states_are_valid() {
        let mut r = rng(11);
        for _ in 0..20 {
            random_density(&mut r, BipartiteLabel::new(2, 3).unwrap()).validate().unwrap();
            random_pure(&mut r, BipartiteLabel::new(3, 2).unwrap()).validate().unwrap();
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = haar_unitary(&mut rng(5), 3);
        let b = haar_unitary(&mut rng(5), 3);
        assert_eq!(a, b);
        let c = haar_unitary(&mut substream(5, 1), 3);
        assert_ne!(a, c);
    }

    #[test]
    fn random_operations_are_complete() {
        let mut r = rng(8);
        let input = BipartiteLabel::new(2, 3).unwrap();
        let outs = [BipartiteLabel::new(1, 2).unwrap(), BipartiteLabel::square(2).unwrap()];
        let op = random_operation(&mut r, input, &outs);
        assert_eq!(op.subops().len(), 2);
        assert!(op.completeness_defect() < 1e-12);
    }
}
