use crate::linalg::{max_abs_diff, min_eigenvalue, partial_transpose_matrix, BipartiteLabel, CMatrix, Subsystem};

use super::{SubOperation, TOL_CP};

/// A linear map between operator spaces, stored as its images of the matrix
/// units `|a⟩⟨b|` of the input space (index `a * d_in + b`).
///
/// This covers maps without a Kraus form, such as the partial-transpose
/// conjugate of a sub-operation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTable {
    input: BipartiteLabel,
    output: BipartiteLabel,
    images: Vec<CMatrix>,
}

impl ActionTable {
    pub fn from_fn<F>(input: BipartiteLabel, output: BipartiteLabel, f: F) -> Self
    where
        F: Fn(&CMatrix) -> CMatrix,
    {
        let d = input.total();
        let images = (0..d * d).map(|ab| f(&crate::linalg::matrix_unit(d, d, ab / d, ab % d))).collect();
        ActionTable { input, output, images }
    }

    pub fn from_sub(sub: &SubOperation) -> Self {
        // S(|a⟩⟨b|) = Σₖ Kₖ|a⟩⟨b|Kₖ† = C_a C_b† with C_a = [K₁|a⟩ … Kₙ|a⟩]
        let d = sub.input.total();
        let dout = sub.output.total();
        let columns: Vec<CMatrix> =
            (0..d).map(|a| CMatrix::from_fn(dout, sub.kraus.len(), |i, k| sub.kraus[k][(i, a)])).collect();
        let images = (0..d * d).map(|ab| &columns[ab / d] * columns[ab % d].adjoint()).collect();
        ActionTable { input: sub.input, output: sub.output, images }
    }

    pub fn input(&self) -> BipartiteLabel {
        self.input
    }

    pub fn output(&self) -> BipartiteLabel {
        self.output
    }

    pub fn apply(&self, m: &CMatrix) -> CMatrix {
        let d = self.input.total();
        let dout = self.output.total();
        let mut out = CMatrix::zeros(dout, dout);
        for a in 0..d {
            for b in 0..d {
                let c = m[(a, b)];
                if c.norm() != 0.0 {
                    out += &self.images[a * d + b] * c;
                }
            }
        }
        out
    }

    /// `Σ_ab |a⟩⟨b| ⊗ S(|a⟩⟨b|)`, unnormalised, on `V_in ⊗ V_out`.
    pub fn choi(&self) -> CMatrix {
        let d = self.input.total();
        let dout = self.output.total();
        CMatrix::from_fn(d * dout, d * dout, |r, c| {
            let (a, i) = (r / dout, r % dout);
            let (b, j) = (c / dout, c % dout);
            self.images[a * d + b][(i, j)]
        })
    }

    /// Smallest Choi eigenvalue, or `-inf` when the Choi matrix is not
    /// Hermitian (the map does not preserve Hermiticity).
    pub fn choi_min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.choi()).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn is_completely_positive(&self) -> bool {
        self.choi_min_eigenvalue() >= -TOL_CP
    }

    /// `ρ ↦ S(ρ^Γ)^Γ` with `Γ` transposing party B on each side.
    pub fn ppt_conjugate(&self) -> ActionTable {
        let (input, output) = (self.input, self.output);
        let (d, db) = (input.total(), input.dim_b);
        // (|a₁a₂⟩⟨b₁b₂|)^Γ = |a₁b₂⟩⟨b₁a₂|
        let images = (0..d * d)
            .map(|ab| {
                let (a, b) = (ab / d, ab % d);
                let a_t = (a / db) * db + b % db;
                let b_t = (b / db) * db + a % db;
                partial_transpose_matrix(&self.images[a_t * d + b_t], output, Subsystem::B).expect("output-shaped")
            })
            .collect();
        ActionTable { input, output, images }
    }

    /// Largest entrywise difference over all matrix-unit images.
    pub fn max_diff(&self, other: &ActionTable) -> f64 {
        if self.input != other.input || self.output != other.output {
            return f64::INFINITY;
        }
        self.images.iter().zip(&other.images).map(|(x, y)| max_abs_diff(x, y)).fold(0.0, f64::max)
    }
}
