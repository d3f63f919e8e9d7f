//! Local dimension-reduction protocols on isotropic states and twirling.
//!
//! Protocol 1 keeps the first `K'` basis states on each side, replacing a
//! failed side by the maximally mixed state of the `K'`-subspace. Protocol 2
//! splits each side as `K' ⊗ (K/K')` and traces out the second factor.
//! Chaining them reduces any `K` to any `K' < K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{tensor, CMatrix, DensityOperator, Subsystem, C64};
use crate::operations::{apply, compose, forget_all, make_local, tensor_op, Branch, QuantumOperation};
use crate::random::{haar_unitary, substream};
use crate::states::{clamp_fidelity, fidelity, isotropic_state, IsotropicParams};

/// Whether protocol 1 keeps its four success/failure outcomes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchMode {
    #[default]
    Merged,
    Preserved,
}

fn check_dims(k: usize, kp: usize) -> Result<()> {
    if kp == 0 || kp > k {
        return Err(Error::Domain(format!("need 1 <= K' <= K, got K={k}, K'={kp}")));
    }
    Ok(())
}

/// Kraus lists of one party's half of protocol 1: `(success, failure)`.
fn subspace_measurement(k: usize, kp: usize) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let keep = CMatrix::from_fn(kp, k, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let amp = C64::new(1.0 / (kp as f64).sqrt(), 0.0);
    let mut fail = Vec::with_capacity(kp * (k - kp));
    for j in kp..k {
        for m in 0..kp {
            let mut op = CMatrix::zeros(kp, k);
            op[(m, j)] = amp;
            fail.push(op);
        }
    }
    (vec![keep], fail)
}

fn one_side(party: Subsystem, k: usize, kp: usize) -> Result<QuantumOperation> {
    let (keep, fail) = subspace_measurement(k, kp);
    let mut outcomes = vec![(kp, keep)];
    if !fail.is_empty() {
        outcomes.push((kp, fail));
    }
    QuantumOperation::single_party(party, k, outcomes)
}

/// Protocol 1 on `K × K`. With [`BranchMode::Preserved`] the outcomes are
/// ordered (succeed, succeed), (succeed, fail), (fail, succeed), (fail, fail);
/// when `K' = K` there is only the success outcome.
pub fn protocol1_op(k: usize, kp: usize, mode: BranchMode) -> Result<QuantumOperation> {
    check_dims(k, kp)?;
    let alice = one_side(Subsystem::A, k, kp)?;
    let bob = one_side(Subsystem::B, k, kp)?;
    match mode {
        BranchMode::Preserved => Ok(tensor_op(&alice, &bob)),
        BranchMode::Merged => make_local(&forget_all(&alice)?, &forget_all(&bob)?),
    }
}

/// Fidelity after protocol 1 on an isotropic input of fidelity `f`.
pub fn protocol1_fidelity(k: usize, kp: usize, f: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("protocol 1 needs K >= 2, got {k}")));
    }
    check_dims(k, kp)?;
    let f = clamp_fidelity(f)?;
    let (k, kp) = (k as f64, kp as f64);
    let k2 = k * k;
    Ok((kp / k) * f + (k - kp) * ((1.0 - f) * kp * (kp + k) + k2 - 1.0) / (kp * kp * k * (k2 - 1.0)))
}

/// Protocol 2: trace out the `K/K'` factor on each side.
pub fn protocol2_op(k: usize, kp: usize) -> Result<QuantumOperation> {
    check_dims(k, kp)?;
    if !k.is_multiple_of(kp) {
        return Err(Error::Domain(format!("K'={kp} does not divide K={k}")));
    }
    let r = k / kp;
    let kraus: Vec<CMatrix> = (0..r)
        .map(|y| CMatrix::from_fn(kp, k, |x, j| if j == x * r + y { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
        .collect();
    let alice = QuantumOperation::single_party(Subsystem::A, k, vec![(kp, kraus.clone())])?;
    let bob = QuantumOperation::single_party(Subsystem::B, k, vec![(kp, kraus)])?;
    make_local(&alice, &bob)
}

pub fn protocol2_fidelity(k: usize, kp: usize, f: f64) -> Result<f64> {
    check_dims(k, kp)?;
    if !k.is_multiple_of(kp) {
        return Err(Error::Domain(format!("K'={kp} does not divide K={k}")));
    }
    let f = clamp_fidelity(f)?;
    if k == 1 {
        return Ok(1.0);
    }
    let (k2, kp2) = ((k * k) as f64, (kp * kp) as f64);
    Ok(f + (1.0 - f) * (k2 - kp2) / ((k2 - 1.0) * kp2))
}

/// The twirl average over all `U ⊗ Ū`: the isotropic state of equal fidelity.
pub fn exact_twirl(rho: &DensityOperator) -> Result<DensityOperator> {
    let p = crate::states::isotropic_fidelity(rho)?;
    isotropic_state(p)
}

/// Sample mean of `(U ⊗ Ū) ρ (U ⊗ Ū)†` over Haar-random `U`.
///
/// Samples are split into fixed chunks with their own random streams and
/// chunk sums are added in order, so the result depends only on `seed`.
pub fn monte_carlo_twirl(rho: &DensityOperator, samples: usize, seed: u64, exec: Exec) -> Result<CMatrix> {
    let label = rho.bipartite()?;
    if !label.is_square() {
        return Err(Error::Labelling("twirling needs equal factors".into()));
    }
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let k = label.dim_a;
    let chunks = samples.min(64);
    let partial = exec.map(chunks, |c| {
        let lo = c * samples / chunks;
        let hi = (c + 1) * samples / chunks;
        let mut rng = substream(seed, c as u64);
        let mut acc = CMatrix::zeros(k * k, k * k);
        for _ in lo..hi {
            let u = haar_unitary(&mut rng, k);
            let w = tensor(&u, &u.conjugate());
            acc += &w * rho.matrix() * w.adjoint();
        }
        acc
    });
    let total = partial.into_iter().fold(CMatrix::zeros(k * k, k * k), |a, b| a + b);
    Ok(total.unscale(samples as f64))
}

/// Stage sizes of the protocol-1-then-protocol-2 reduction from `K` to `K'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub k: usize,
    pub kprime: usize,
    /// `K' ⌊K/K'⌋`
    pub stage1_target: usize,
    /// `(K'/K) ⌊K/K'⌋`
    pub guaranteed_fidelity_factor: f64,
}

impl ReductionPlan {
    pub fn new(k: usize, kp: usize) -> Result<Self> {
        check_dims(k, kp)?;
        let stage1_target = kp * (k / kp);
        Ok(ReductionPlan { k, kprime: kp, stage1_target, guaranteed_fidelity_factor: stage1_target as f64 / k as f64 })
    }

    /// `max(K − K', K') / K`, the weaker factor the guaranteed one dominates.
    pub fn weak_factor(&self) -> f64 {
        (self.k - self.kprime).max(self.kprime) as f64 / self.k as f64
    }
}

/// Local operation taking `K × K` to `K' × K'` via the two protocols.
pub fn reduce_dimension_op(k: usize, kp: usize) -> Result<QuantumOperation> {
    let plan = ReductionPlan::new(k, kp)?;
    let first = protocol1_op(k, plan.stage1_target, BranchMode::Merged)?;
    let second = protocol2_op(plan.stage1_target, kp)?;
    compose(&first, &[second])
}

/// Closed-form output fidelity of the reduction on an isotropic input.
pub fn reduce_dimension_fidelity(k: usize, kp: usize, f: f64) -> Result<f64> {
    let plan = ReductionPlan::new(k, kp)?;
    let f1 = if plan.stage1_target == k { clamp_fidelity(f)? } else { protocol1_fidelity(k, plan.stage1_target, f)? };
    protocol2_fidelity(plan.stage1_target, kp, f1)
}

/// `(K'/K) ⌊K/K'⌋ F`
pub fn reduction_bound(k: usize, kp: usize, f: f64) -> Result<f64> {
    Ok(ReductionPlan::new(k, kp)?.guaranteed_fidelity_factor * clamp_fidelity(f)?)
}

/// Input to [`reduce_dimension`].
#[derive(Debug, Clone)]
pub enum Reducible {
    State(DensityOperator),
    Fidelity(f64),
}

/// Reduce a `K × K` input to dimension `K' < K`. A state is first twirled
/// to the isotropic state of the same fidelity, then run through the
/// reduction operation; a bare fidelity goes through the closed form.
pub fn reduce_dimension(k: usize, kp: usize, input: Reducible) -> Result<Reducible> {
    if kp >= k {
        return Err(Error::Domain(format!("reduction needs K' < K, got K={k}, K'={kp}")));
    }
    match input {
        Reducible::Fidelity(f) => Ok(Reducible::Fidelity(reduce_dimension_fidelity(k, kp, f)?)),
        Reducible::State(rho) => {
            let label = rho.bipartite()?;
            if label.dim_a != k || label.dim_b != k {
                return Err(Error::Labelling(format!("expected a {k}x{k} state, got {label:?}")));
            }
            let twirled = exact_twirl(&rho)?;
            let op = reduce_dimension_op(k, kp)?;
            let branches = apply(&op, &twirled)?;
            let state = branches
                .into_iter()
                .next()
                .and_then(|b| b.state)
                .ok_or_else(|| Error::Domain("reduction produced no output".into()))?;
            Ok(Reducible::State(state))
        }
    }
}

/// `Σᵢ pᵢ F(ρᵢ)` over branches with a state: the fidelity of the
/// outcome-forgotten mixture.
pub fn branch_average_fidelity(branches: &[Branch]) -> Result<f64> {
    let mut total = 0.0;
    for b in branches {
        if let Some(s) = &b.state {
            total += b.probability * fidelity(s)?;
        }
    }
    Ok(total)
}

/// Run `op` on `isotropic(K, F)` and return the merged output fidelity.
pub fn simulate_on_isotropic(op: &QuantumOperation, k: usize, f: f64) -> Result<f64> {
    let rho = isotropic_state(IsotropicParams::new(k, f)?)?;
    branch_average_fidelity(&apply(op, &rho)?)
}

/// The unitary `U ⊗ Ū` used in twirling.
pub fn twirl_unitary(u: &CMatrix) -> CMatrix {
    tensor(u, &u.conjugate())
}
