//! Measuring operations in Kraus form and their class predicates.
//!
//! An operation is a list of sub-operations `S_i(ρ) = Σⱼ S_ij ρ S_ij†`, each
//! with its own output space, jointly satisfying `Σᵢⱼ S_ij† S_ij = 1`.
//! Operations on a single party are represented on a bipartite label whose
//! other factor is trivial, so every operation carries a bipartite split.

mod action;
mod descriptor;

pub use action::ActionTable;
pub use descriptor::{classify, Classification, OperationDescriptor, SubOperationDescriptor, WitnessPair};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{
    eigh, identity, max_abs_diff, projector, tensor, tensor_regrouped, BipartiteLabel, CMatrix, DensityOperator, Label,
    Subsystem, C64,
};

/// Completeness tolerance `‖Σ S†S − 1‖`.
pub const TOL_TP: f64 = 1e-9;
/// Allowed negative Choi eigenvalue for complete positivity.
pub const TOL_CP: f64 = 1e-9;
/// Branches below this probability carry no post-measurement state.
pub const NULL_BRANCH: f64 = 1e-12;
/// Action-table agreement tolerance for witness verification.
pub const TOL_ACTION: f64 = 1e-9;

/// Classes of bipartite operations, ordered by containment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperationClass {
    Local,
    OneLocal,
    TwoLocal,
    Separable,
    Ppt,
}

/// One outcome `S_i` of a measuring operation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubOperation {
    input: BipartiteLabel,
    output: BipartiteLabel,
    kraus: Vec<CMatrix>,
}

impl SubOperation {
    pub fn new(input: BipartiteLabel, output: BipartiteLabel, kraus: Vec<CMatrix>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Dimension("sub-operation needs at least one Kraus matrix".into()));
        }
        for (j, k) in kraus.iter().enumerate() {
            if k.nrows() != output.total() || k.ncols() != input.total() {
                return Err(Error::Dimension(format!(
                    "Kraus matrix {j} is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    output.total(),
                    input.total()
                )));
            }
        }
        Ok(SubOperation { input, output, kraus })
    }

    pub fn input(&self) -> BipartiteLabel {
        self.input
    }

    pub fn output(&self) -> BipartiteLabel {
        self.output
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// `Σⱼ S_j m S_j†` for any input-shaped matrix.
    pub fn act(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.output.total(), self.output.total());
        for k in &self.kraus {
            out += k * m * k.adjoint();
        }
        out
    }

    /// `Σⱼ S_j† S_j`
    pub fn effect(&self) -> CMatrix {
        let d = self.input.total();
        self.kraus.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }
}

/// Product-form Kraus factors `(A_j, B_j)` for each sub-operation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableWitness {
    pub factors: Vec<Vec<(CMatrix, CMatrix)>>,
}

/// One measurement branch of [`apply`]: probability and normalised state,
/// or no state when the branch has (numerically) zero probability.
#[derive(Debug, Clone)]
pub struct Branch {
    pub probability: f64,
    pub state: Option<DensityOperator>,
}

/// A trace-preserving measuring operation.
#[derive(Debug, Clone)]
pub struct QuantumOperation {
    input: BipartiteLabel,
    subops: Vec<SubOperation>,
    provenance: Option<OperationClass>,
    witness: Option<SeparableWitness>,
}

impl QuantumOperation {
    /// Builds an operation and checks completeness.
    pub fn new(input: BipartiteLabel, subops: Vec<SubOperation>) -> Result<Self> {
        let op = Self::new_incomplete(input, subops)?;
        let defect = op.completeness_defect();
        if defect > TOL_TP {
            return Err(Error::Domain(format!("Kraus operators are not complete (defect {defect:e})")));
        }
        Ok(op)
    }

    /// Builds an operation without the completeness check, so that
    /// [`is_trace_preserving`] can be asked about arbitrary Kraus data.
    pub fn new_incomplete(input: BipartiteLabel, subops: Vec<SubOperation>) -> Result<Self> {
        if subops.is_empty() {
            return Err(Error::Dimension("operation needs at least one sub-operation".into()));
        }
        if let Some(s) = subops.iter().find(|s| s.input != input) {
            return Err(Error::Labelling(format!(
                "sub-operation input {:?} differs from operation input {input:?}",
                s.input
            )));
        }
        Ok(QuantumOperation { input, subops, provenance: None, witness: None })
    }

    /// Non-measuring operation with the given Kraus list.
    pub fn channel(input: BipartiteLabel, output: BipartiteLabel, kraus: Vec<CMatrix>) -> Result<Self> {
        Self::new(input, vec![SubOperation::new(input, output, kraus)?])
    }

    pub fn identity(label: BipartiteLabel) -> Self {
        let d = label.total();
        let sub = SubOperation { input: label, output: label, kraus: vec![identity(d)] };
        QuantumOperation {
            input: label,
            subops: vec![sub],
            provenance: Some(OperationClass::Local),
            witness: Some(SeparableWitness { factors: vec![vec![(identity(label.dim_a), identity(label.dim_b))]] }),
        }
    }

    /// Operation acting on one party only. `subops` lists, per outcome, the
    /// party's output dimension and Kraus matrices. A non-measuring operation
    /// on either party is local; a measuring one on A is 1-local (A → B
    /// communication) and on B is 2-local.
    pub fn single_party(party: Subsystem, dim_in: usize, subops: Vec<(usize, Vec<CMatrix>)>) -> Result<Self> {
        let label = |d: usize| match party {
            Subsystem::A => BipartiteLabel::alice(d),
            Subsystem::B => BipartiteLabel::bob(d),
        };
        let input = label(dim_in)?;
        let mut witness = Vec::with_capacity(subops.len());
        let mut built = Vec::with_capacity(subops.len());
        for (dim_out, kraus) in subops {
            let pairs = kraus
                .iter()
                .map(|k| match party {
                    Subsystem::A => (k.clone(), identity(1)),
                    Subsystem::B => (identity(1), k.clone()),
                })
                .collect();
            witness.push(pairs);
            built.push(SubOperation::new(input, label(dim_out)?, kraus)?);
        }
        let measuring = built.len() > 1;
        let mut op = Self::new(input, built)?;
        op.provenance = Some(match (measuring, party) {
            (false, _) => OperationClass::Local,
            (true, Subsystem::A) => OperationClass::OneLocal,
            (true, Subsystem::B) => OperationClass::TwoLocal,
        });
        op.witness = Some(SeparableWitness { factors: witness });
        Ok(op)
    }

    /// Discard the input and prepare `state` (a trace-and-replace channel).
    pub fn replace_with_state(input: BipartiteLabel, state: &DensityOperator) -> Result<Self> {
        let output = state.bipartite()?;
        let (values, vectors) = eigh(state.matrix())?;
        let mut kraus = Vec::new();
        for (k, &lam) in values.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let col = vectors.column(k).scale(lam.sqrt());
            for j in 0..input.total() {
                let mut m = CMatrix::zeros(output.total(), input.total());
                m.set_column(j, &col);
                kraus.push(m);
            }
        }
        Self::channel(input, output, kraus)
    }

    /// Asserts class membership established outside the constructors.
    pub fn with_provenance(mut self, class: OperationClass) -> Self {
        self.provenance = Some(class);
        self
    }

    pub fn with_witness(mut self, witness: SeparableWitness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn input(&self) -> BipartiteLabel {
        self.input
    }

    pub fn subops(&self) -> &[SubOperation] {
        &self.subops
    }

    pub fn is_measuring(&self) -> bool {
        self.subops.len() > 1
    }

    pub fn provenance(&self) -> Option<OperationClass> {
        self.provenance
    }

    /// Product-form Kraus factors carried from the constructors, if any.
    pub fn natural_witness(&self) -> Option<&SeparableWitness> {
        self.witness.as_ref()
    }

    /// `max |Σ S†S − 1|` entrywise.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.input.total();
        let total = self.subops.iter().fold(CMatrix::zeros(d, d), |acc, s| acc + s.effect());
        max_abs_diff(&total, &identity(d))
    }
}

fn join_class(a: Option<OperationClass>, b: Option<OperationClass>) -> Option<OperationClass> {
    Some(a?.max(b?))
}

/// Branch probabilities and normalised post-measurement states.
pub fn apply(op: &QuantumOperation, rho: &DensityOperator) -> Result<Vec<Branch>> {
    apply_with(op, rho, Exec::default())
}

pub fn apply_with(op: &QuantumOperation, rho: &DensityOperator, exec: Exec) -> Result<Vec<Branch>> {
    if rho.dim() != op.input.total() {
        return Err(Error::Dimension(format!(
            "state of dimension {} fed to operation on {}",
            rho.dim(),
            op.input.total()
        )));
    }
    if let Label::Bipartite(l) = rho.label() {
        if l != op.input {
            return Err(Error::Labelling(format!("state label {l:?} vs operation input {:?}", op.input)));
        }
    }
    exec.map_slice(&op.subops, |sub| {
        let sigma = sub.act(rho.matrix());
        let p = sigma.trace().re;
        let state =
            if p < NULL_BRANCH { None } else { Some(DensityOperator::new_unchecked(sub.output, sigma.unscale(p))?) };
        Ok(Branch { probability: p.max(0.0), state })
    })
    .into_iter()
    .collect()
}

/// Perform `first`; on outcome `i` continue with `then[i]`. Resulting
/// sub-operations are indexed by `(i, k)` in lexicographic order.
pub fn compose(first: &QuantumOperation, then: &[QuantumOperation]) -> Result<QuantumOperation> {
    if then.len() != first.subops.len() {
        return Err(Error::Labelling(format!("{} continuations for {} branches", then.len(), first.subops.len())));
    }
    let mut subops = Vec::new();
    let mut provenance = first.provenance;
    let mut witness = first.witness.as_ref().map(|_| Vec::new());
    for (i, (s, t)) in first.subops.iter().zip(then).enumerate() {
        if t.input != s.output {
            return Err(Error::Labelling(format!(
                "branch {i} outputs {:?} but its continuation expects {:?}",
                s.output, t.input
            )));
        }
        provenance = join_class(provenance, t.provenance);
        for (k, tk) in t.subops.iter().enumerate() {
            let kraus = tk.kraus.iter().flat_map(|tl| s.kraus.iter().map(move |sj| tl * sj)).collect();
            subops.push(SubOperation { input: first.input, output: tk.output, kraus });
            witness = match (witness, &first.witness, &t.witness) {
                (Some(mut w), Some(ws), Some(wt)) => {
                    let pairs = wt.factors[k]
                        .iter()
                        .flat_map(|(ta, tb)| ws.factors[i].iter().map(move |(sa, sb)| (ta * sa, tb * sb)))
                        .collect();
                    w.push(pairs);
                    Some(w)
                }
                _ => None,
            };
        }
    }
    Ok(QuantumOperation {
        input: first.input,
        subops,
        provenance,
        witness: witness.map(|factors| SeparableWitness { factors }),
    })
}

/// `S ⊗ T` on the regrouped space `(A_S A_T) ⊗ (B_S B_T)`, sub-operations
/// indexed by `(i, j)` in lexicographic order.
pub fn tensor_op(s: &QuantumOperation, t: &QuantumOperation) -> QuantumOperation {
    let input = s.input.tensor(&t.input);
    let mut subops = Vec::with_capacity(s.subops.len() * t.subops.len());
    let mut factors = Vec::new();
    for (i, si) in s.subops.iter().enumerate() {
        for (j, tj) in t.subops.iter().enumerate() {
            let kraus = si
                .kraus
                .iter()
                .flat_map(|a| {
                    tj.kraus.iter().map(move |b| tensor_regrouped(a, b, (si.output, tj.output), (s.input, t.input)))
                })
                .collect();
            subops.push(SubOperation { input, output: si.output.tensor(&tj.output), kraus });
            if let (Some(ws), Some(wt)) = (&s.witness, &t.witness) {
                factors.push(
                    ws.factors[i]
                        .iter()
                        .flat_map(|(a1, b1)| wt.factors[j].iter().map(move |(a2, b2)| (tensor(a1, a2), tensor(b1, b2))))
                        .collect(),
                );
            }
        }
    }
    let witness = match (&s.witness, &t.witness) {
        (Some(_), Some(_)) => Some(SeparableWitness { factors }),
        _ => None,
    };
    QuantumOperation { input, subops, provenance: join_class(s.provenance, t.provenance), witness }
}

/// Merge the branches in `merge` into one that no longer records which of
/// them occurred. The merged branch takes the position of the smallest index.
pub fn forget(op: &QuantumOperation, merge: &[usize]) -> Result<QuantumOperation> {
    let mut idx: Vec<usize> = merge.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.is_empty() {
        return Err(Error::Domain("nothing to merge".into()));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= op.subops.len()) {
        return Err(Error::Domain(format!("branch {bad} out of range")));
    }
    let output = op.subops[idx[0]].output;
    if let Some(&bad) = idx.iter().find(|&&i| op.subops[i].output != output) {
        return Err(Error::Labelling(format!("branch {bad} outputs {:?}, not {output:?}", op.subops[bad].output)));
    }
    let mut subops = Vec::new();
    let mut factors = Vec::new();
    for (i, s) in op.subops.iter().enumerate() {
        if i == idx[0] {
            let kraus = idx.iter().flat_map(|&m| op.subops[m].kraus.iter().cloned()).collect();
            subops.push(SubOperation { input: op.input, output, kraus });
            if let Some(w) = &op.witness {
                factors.push(idx.iter().flat_map(|&m| w.factors[m].iter().cloned()).collect());
            }
        } else if !idx.contains(&i) {
            subops.push(s.clone());
            if let Some(w) = &op.witness {
                factors.push(w.factors[i].clone());
            }
        }
    }
    Ok(QuantumOperation {
        input: op.input,
        subops,
        provenance: op.provenance,
        witness: op.witness.as_ref().map(|_| SeparableWitness { factors }),
    })
}

/// Merge every branch (non-measuring coarse-graining).
pub fn forget_all(op: &QuantumOperation) -> Result<QuantumOperation> {
    let all: Vec<usize> = (0..op.subops.len()).collect();
    forget(op, &all)
}

pub fn is_trace_preserving(op: &QuantumOperation) -> bool {
    op.completeness_defect() <= TOL_TP
}

/// Choi-matrix test; always true for a genuine Kraus list up to rounding.
pub fn is_completely_positive(sub: &SubOperation) -> bool {
    ActionTable::from_sub(sub).is_completely_positive()
}

/// `ρ ↦ S(ρ^Γ)^Γ` with `Γ` the partial transpose on party B, as an action
/// table (it generally has no Kraus form).
pub fn ppt_transpose(sub: &SubOperation) -> ActionTable {
    ActionTable::from_sub(sub).ppt_conjugate()
}

/// True iff every sub-operation has completely positive partial transpose.
pub fn is_ppt_operation(op: &QuantumOperation) -> bool {
    op.subops.iter().all(|s| ppt_transpose(s).is_completely_positive())
}

/// Check that `w` reproduces each sub-operation's action on the matrix
/// units of the input space.
pub fn verify_separable_form(op: &QuantumOperation, w: &SeparableWitness) -> Result<bool> {
    if w.factors.len() != op.subops.len() {
        return Err(Error::Dimension(format!(
            "witness has {} sub-operations, operation has {}",
            w.factors.len(),
            op.subops.len()
        )));
    }
    for (i, (sub, pairs)) in op.subops.iter().zip(&w.factors).enumerate() {
        if pairs.is_empty() {
            return Err(Error::Dimension(format!("witness for sub-operation {i} is empty")));
        }
        let (inp, out) = (sub.input, sub.output);
        let mut kraus = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a.shape() != (out.dim_a, inp.dim_a) || b.shape() != (out.dim_b, inp.dim_b) {
                return Err(Error::Dimension(format!(
                    "witness factor shapes {:?}/{:?} for sub-operation {i} mapping {inp:?} -> {out:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            kraus.push(tensor(a, b));
        }
        let induced = SubOperation { input: inp, output: out, kraus };
        if ActionTable::from_sub(sub).max_diff(&ActionTable::from_sub(&induced)) > TOL_ACTION {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `S_A ⊗ S_B` for non-measuring single-party operations.
pub fn make_local(sa: &QuantumOperation, sb: &QuantumOperation) -> Result<QuantumOperation> {
    if sa.is_measuring() || sb.is_measuring() {
        return Err(Error::NotApplicable("local operations are built from non-measuring parts".into()));
    }
    check_party(sa, Subsystem::A)?;
    check_party(sb, Subsystem::B)?;
    let mut op = tensor_op(sa, sb);
    op.provenance = Some(OperationClass::Local);
    Ok(op)
}

/// `S_A ⊗ 1` with `S_A` an arbitrary (possibly measuring) operation on A.
pub fn make_one_local(sa: &QuantumOperation, dim_b: usize) -> Result<QuantumOperation> {
    check_party(sa, Subsystem::A)?;
    let id_b = QuantumOperation::single_party(Subsystem::B, dim_b, vec![(dim_b, vec![identity(dim_b)])])?;
    let mut op = tensor_op(sa, &id_b);
    op.provenance = Some(if sa.is_measuring() { OperationClass::OneLocal } else { OperationClass::Local });
    Ok(op)
}

/// `1 ⊗ S_B`; with a measuring `S_B` this needs communication from B to A.
pub fn make_one_local_b(dim_a: usize, sb: &QuantumOperation) -> Result<QuantumOperation> {
    check_party(sb, Subsystem::B)?;
    let id_a = QuantumOperation::single_party(Subsystem::A, dim_a, vec![(dim_a, vec![identity(dim_a)])])?;
    let mut op = tensor_op(&id_a, sb);
    op.provenance = Some(if sb.is_measuring() { OperationClass::TwoLocal } else { OperationClass::Local });
    Ok(op)
}

fn check_party(op: &QuantumOperation, party: Subsystem) -> Result<()> {
    let trivial = |l: BipartiteLabel| match party {
        Subsystem::A => l.dim_b == 1,
        Subsystem::B => l.dim_a == 1,
    };
    if !trivial(op.input) || op.subops.iter().any(|s| !trivial(s.output)) {
        return Err(Error::Labelling(format!("operation does not act on party {party:?} alone")));
    }
    Ok(())
}

/// Projective measurement of party `party` in its computational basis.
pub fn basis_measurement(party: Subsystem, dim: usize) -> Result<QuantumOperation> {
    let subops = (0..dim)
        .map(|i| {
            let mut e = crate::linalg::CVector::zeros(dim);
            e[i] = C64::new(1.0, 0.0);
            (dim, vec![projector(&e)])
        })
        .collect();
    QuantumOperation::single_party(party, dim, subops)
}

#[cfg(test)]
mod tests;
