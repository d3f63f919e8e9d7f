//! Dense complex linear algebra on small labelled spaces.
//!
//! Index convention: on a bipartite space `V_A ⊗ V_B` the basis vector
//! `|a⟩ ⊗ |b⟩` sits at position `a * dim_b + b`. Every module in the crate
//! relies on this single convention, and [`tensor`] (the Kronecker product)
//! produces exactly this layout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Hermiticity tolerance for density operators.
pub const TOL_HERM: f64 = 1e-9;
/// Unit-trace tolerance for density operators.
pub const TOL_TRACE: f64 = 1e-9;
/// Allowed negative eigenvalue slack for positive semidefiniteness.
pub const TOL_PSD: f64 = 1e-9;
/// Accuracy target of the dense Hermitian eigensolver.
pub const TOL_EIG: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dimensions of the two factors of `V_A ⊗ V_B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BipartiteLabel {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl BipartiteLabel {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::Dimension(format!("factor dimensions must be positive, got {dim_a}x{dim_b}")));
        }
        Ok(BipartiteLabel { dim_a, dim_b })
    }

    /// `K × K`, the shape of every distillation input and output.
    pub fn square(k: usize) -> Result<Self> {
        Self::new(k, k)
    }

    /// A space held entirely by party A (`V_B` trivial).
    pub fn alice(dim: usize) -> Result<Self> {
        Self::new(dim, 1)
    }

    /// A space held entirely by party B (`V_A` trivial).
    pub fn bob(dim: usize) -> Result<Self> {
        Self::new(1, dim)
    }

    pub fn total(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.dim_b + b
    }

    pub fn is_square(&self) -> bool {
        self.dim_a == self.dim_b
    }

    /// Label of the regrouped product `(A1 ⊗ A2) ⊗ (B1 ⊗ B2)`.
    pub fn tensor(&self, other: &BipartiteLabel) -> BipartiteLabel {
        BipartiteLabel { dim_a: self.dim_a * other.dim_a, dim_b: self.dim_b * other.dim_b }
    }
}

/// Space label carried by a density operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Single(usize),
    Bipartite(BipartiteLabel),
}

impl Label {
    pub fn dim(&self) -> usize {
        match self {
            Label::Single(d) => *d,
            Label::Bipartite(l) => l.total(),
        }
    }

    pub fn bipartite(&self) -> Result<BipartiteLabel> {
        match self {
            Label::Bipartite(l) => Ok(*l),
            Label::Single(d) => {
                Err(Error::Labelling(format!("operator on a plain {d}-dimensional space has no bipartite split")))
            }
        }
    }
}

impl From<BipartiteLabel> for Label {
    fn from(l: BipartiteLabel) -> Self {
        Label::Bipartite(l)
    }
}

/// Which tensor factor an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subsystem {
    A,
    B,
}

/// A Hermitian, positive semidefinite, unit-trace matrix on a labelled space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    label: Label,
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates shape, Hermiticity, trace and positivity.
    pub fn new(label: impl Into<Label>, matrix: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(label, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Checks only the shape. Used for outputs of maps already known to be
    /// positive and trace preserving, where a full eigen-check would be wasted.
    pub fn new_unchecked(label: impl Into<Label>, matrix: CMatrix) -> Result<Self> {
        let label = label.into();
        let d = label.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "label has dimension {d} but matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DensityOperator { label, matrix })
    }

    /// `|ψ⟩⟨ψ|` for a vector normalised on the way in.
    pub fn pure(label: impl Into<Label>, psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::Domain("zero vector has no pure state".into()));
        }
        let psi = psi.unscale(norm);
        Self::new_unchecked(label, projector(&psi))
    }

    pub fn maximally_mixed(label: impl Into<Label>) -> Self {
        let label = label.into();
        let d = label.dim();
        let matrix = CMatrix::identity(d, d).unscale(d as f64);
        DensityOperator { label, matrix }
    }

    pub fn validate(&self) -> Result<()> {
        let herm = hermiticity_defect(&self.matrix);
        if herm > TOL_HERM {
            return Err(Error::InvalidState(format!("Hermiticity defect {herm:e}")));
        }
        let tr = trace(&self.matrix);
        if (tr - ONE).norm() > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = min_eigenvalue(&self.matrix)?;
        if min < -TOL_PSD {
            return Err(Error::InvalidState(format!("smallest eigenvalue {min:e} is negative")));
        }
        Ok(())
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn bipartite(&self) -> Result<BipartiteLabel> {
        self.label.bipartite()
    }

    pub fn dim(&self) -> usize {
        self.label.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// Product state on the regrouped space `(A1 A2) ⊗ (B1 B2)`.
    pub fn tensor_bipartite(&self, other: &DensityOperator) -> Result<DensityOperator> {
        let l1 = self.bipartite()?;
        let l2 = other.bipartite()?;
        let m = tensor_regrouped(&self.matrix, &other.matrix, (l1, l2), (l1, l2));
        Ok(DensityOperator { label: Label::Bipartite(l1.tensor(&l2)), matrix: m })
    }
}

/// Kronecker product `m1 ⊗ m2` under the fixed index convention.
pub fn tensor(m1: &CMatrix, m2: &CMatrix) -> CMatrix {
    let (r1, c1) = m1.shape();
    let (r2, c2) = m2.shape();
    CMatrix::from_fn(r1 * r2, c1 * c2, |i, j| m1[(i / r2, j / c2)] * m2[(i % r2, j % c2)])
}

/// For each position of `(A1 B1) ⊗ (A2 B2)` in Kronecker layout, its position
/// in the regrouped layout `(A1 A2) ⊗ (B1 B2)`.
pub fn regroup_positions(l1: BipartiteLabel, l2: BipartiteLabel) -> Vec<usize> {
    let joint = l1.tensor(&l2);
    let mut out = vec![0; l1.total() * l2.total()];
    for a1 in 0..l1.dim_a {
        for b1 in 0..l1.dim_b {
            for a2 in 0..l2.dim_a {
                for b2 in 0..l2.dim_b {
                    let kron = l1.index(a1, b1) * l2.total() + l2.index(a2, b2);
                    out[kron] = joint.index(a1 * l2.dim_a + a2, b1 * l2.dim_b + b2);
                }
            }
        }
    }
    out
}

/// Kronecker product of two operators between bipartite spaces, with rows and
/// columns regrouped so that both parties' factors are adjacent.
pub fn tensor_regrouped(
    m1: &CMatrix,
    m2: &CMatrix,
    rows: (BipartiteLabel, BipartiteLabel),
    cols: (BipartiteLabel, BipartiteLabel),
) -> CMatrix {
    let k = tensor(m1, m2);
    let rp = regroup_positions(rows.0, rows.1);
    let cp = regroup_positions(cols.0, cols.1);
    let mut out = CMatrix::zeros(k.nrows(), k.ncols());
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            out[(rp[i], cp[j])] = k[(i, j)];
        }
    }
    out
}

fn check_square_on(m: &CMatrix, label: BipartiteLabel) -> Result<()> {
    let d = label.total();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension(format!(
            "{}x{} matrix on a {}x{} bipartite space",
            m.nrows(),
            m.ncols(),
            label.dim_a,
            label.dim_b
        )));
    }
    Ok(())
}

/// Partial trace of an operator on `V_A ⊗ V_B`, keeping one factor.
pub fn partial_trace_matrix(m: &CMatrix, label: BipartiteLabel, keep: Subsystem) -> Result<CMatrix> {
    check_square_on(m, label)?;
    let (da, db) = (label.dim_a, label.dim_b);
    Ok(match keep {
        Subsystem::A => {
            CMatrix::from_fn(da, da, |a, a2| (0..db).map(|b| m[(label.index(a, b), label.index(a2, b))]).sum())
        }
        Subsystem::B => {
            CMatrix::from_fn(db, db, |b, b2| (0..da).map(|a| m[(label.index(a, b), label.index(a, b2))]).sum())
        }
    })
}

pub fn partial_trace(rho: &DensityOperator, keep: Subsystem) -> Result<DensityOperator> {
    let label = rho.bipartite()?;
    let m = partial_trace_matrix(rho.matrix(), label, keep)?;
    let d = m.nrows();
    DensityOperator::new_unchecked(Label::Single(d), m)
}

/// Transpose of one tensor factor. An involution that preserves trace and
/// Hermiticity but not positivity.
pub fn partial_transpose_matrix(m: &CMatrix, label: BipartiteLabel, side: Subsystem) -> Result<CMatrix> {
    check_square_on(m, label)?;
    let (da, db) = (label.dim_a, label.dim_b);
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for a in 0..da {
        for b in 0..db {
            for a2 in 0..da {
                for b2 in 0..db {
                    let (src_row, src_col) = match side {
                        Subsystem::A => (label.index(a2, b), label.index(a, b2)),
                        Subsystem::B => (label.index(a, b2), label.index(a2, b)),
                    };
                    out[(label.index(a, b), label.index(a2, b2))] = m[(src_row, src_col)];
                }
            }
        }
    }
    Ok(out)
}

pub fn partial_transpose(rho: &DensityOperator, side: Subsystem) -> Result<CMatrix> {
    partial_transpose_matrix(rho.matrix(), rho.bipartite()?, side)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest entrywise deviation of `m` from `m†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    hermiticity_defect(m) <= tol
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigenvalues_hermitian(m: &CMatrix) -> Result<Vec<f64>> {
    let defect = hermiticity_defect(m);
    if defect > TOL_HERM {
        return Err(Error::NotHermitian(defect));
    }
    let mut ev = to_faer(&hermitian_part(m))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigen-decomposition `(values, vectors)` of a Hermitian matrix; column `k`
/// of `vectors` belongs to `values[k]`.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let defect = hermiticity_defect(m);
    if defect > TOL_HERM {
        return Err(Error::NotHermitian(defect));
    }
    let eig = to_faer(&hermitian_part(m))
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    let values = (0..m.nrows()).map(|k| s[k].re).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| u[(r, c)]);
    Ok((values, vectors))
}

fn to_faer(m: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    let ev = eigenvalues_hermitian(m)?;
    ev.first().copied().ok_or_else(|| Error::Dimension("empty matrix has no eigenvalues".into()))
}

/// `(m + m†) / 2`
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `|v⟩⟨v|` without normalisation.
pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// The matrix unit `|i⟩⟨j|` of the given shape.
pub fn matrix_unit(rows: usize, cols: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    m[(i, j)] = ONE;
    m
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Real-entried matrix from row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(values[i], 0.0) } else { ZERO })
}
