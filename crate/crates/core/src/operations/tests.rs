use approx::assert_abs_diff_eq;

use super::*;
use crate::linalg::{diag, min_eigenvalue, partial_transpose_matrix, real_matrix, CVector};
use crate::protocols::{protocol1_op, protocol2_op, BranchMode};
use crate::random::{haar_unitary, random_density, rng};
use crate::states::{fidelity, isotropic_state, phi_plus_projector, IsotropicParams};

fn sq(k: usize) -> BipartiteLabel {
    BipartiteLabel::square(k).unwrap()
}

fn ket(d: usize, amps: &[(usize, f64)]) -> CVector {
    let mut v = CVector::zeros(d);
    for &(i, a) in amps {
        v[i] = C64::new(a, 0.0);
    }
    v.normalize()
}

fn same_action(x: &QuantumOperation, y: &QuantumOperation) -> bool {
    x.subops().len() == y.subops().len()
        && x.subops()
            .iter()
            .zip(y.subops())
            .all(|(s, t)| ActionTable::from_sub(s).max_diff(&ActionTable::from_sub(t)) < 1e-12)
}

fn phi_creation(k: usize) -> QuantumOperation {
    let state = DensityOperator::new(sq(k), phi_plus_projector(k).unwrap()).unwrap();
    QuantumOperation::replace_with_state(BipartiteLabel::new(1, 1).unwrap(), &state).unwrap()
}

#[test]
fn apply_identity_and_basis_measurement() {
    let mut r = rng(1);
    let rho = random_density(&mut r, sq(2));
    let out = apply(&QuantumOperation::identity(sq(2)), &rho).unwrap();
    assert_eq!(out.len(), 1);
    assert_abs_diff_eq!(out[0].probability, 1.0, epsilon = 1e-12);
    assert!(max_abs_diff(out[0].state.as_ref().unwrap().matrix(), rho.matrix()) < 1e-12);

    let meas = make_one_local(&basis_measurement(Subsystem::A, 2).unwrap(), 2).unwrap();
    let out = apply(&meas, &DensityOperator::maximally_mixed(sq(2))).unwrap();
    assert_eq!(out.len(), 2);
    for b in &out {
        assert_abs_diff_eq!(b.probability, 0.5, epsilon = 1e-12);
    }
}

#[test]
fn apply_rejects_wrong_dimension() {
    let rho = DensityOperator::maximally_mixed(sq(3));
    assert!(matches!(apply(&QuantumOperation::identity(sq(2)), &rho), Err(Error::Dimension(_))));
}

#[test]
fn protocol1_success_branch_on_phi_plus() {
    let op = protocol1_op(4, 2, BranchMode::Preserved).unwrap();
    let rho = DensityOperator::new(sq(4), phi_plus_projector(4).unwrap()).unwrap();
    let out = apply(&op, &rho).unwrap();
    assert_eq!(out.len(), 4);
    assert_abs_diff_eq!(out[0].probability, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(fidelity(out[0].state.as_ref().unwrap()).unwrap(), 1.0, epsilon = 1e-12);
    let total: f64 = out.iter().map(|b| b.probability).sum();
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
}

#[test]
fn compose_with_identity() {
    let op = make_one_local(&basis_measurement(Subsystem::A, 2).unwrap(), 2).unwrap();
    let id = QuantumOperation::identity(sq(2));
    let left = compose(&id, std::slice::from_ref(&op)).unwrap();
    assert!(same_action(&left, &op));
    let right = compose(&op, &[id.clone(), id]).unwrap();
    assert!(same_action(&right, &op));
}

#[test]
fn compose_matches_two_stage_apply() {
    let first = protocol1_op(4, 2, BranchMode::Merged).unwrap();
    let then = protocol2_op(2, 1).unwrap();
    let both = compose(&first, std::slice::from_ref(&then)).unwrap();
    assert_eq!(both.subops()[0].output(), sq(1));
    let mut r = rng(2);
    for _ in 0..20 {
        let rho = random_density(&mut r, sq(4));
        let direct = apply(&both, &rho).unwrap();
        let mid = apply(&first, &rho).unwrap();
        let staged = apply(&then, mid[0].state.as_ref().unwrap()).unwrap();
        assert_abs_diff_eq!(direct[0].probability, mid[0].probability * staged[0].probability, epsilon = 1e-12);
        let (x, y) = (direct[0].state.as_ref().unwrap(), staged[0].state.as_ref().unwrap());
        assert!(max_abs_diff(x.matrix(), y.matrix()) < 1e-12);
    }
}

#[test]
fn compose_rejects_label_mismatch() {
    let first = protocol1_op(4, 2, BranchMode::Merged).unwrap();
    let wrong = QuantumOperation::identity(sq(3));
    assert!(matches!(compose(&first, &[wrong]), Err(Error::Labelling(_))));
    assert!(compose(&first, &[]).is_err());
}

#[test]
fn tensor_product_rule() {
    let s = make_one_local(&basis_measurement(Subsystem::A, 2).unwrap(), 2).unwrap();
    let t = protocol1_op(3, 2, BranchMode::Preserved).unwrap();
    let st = tensor_op(&s, &t);
    assert_eq!(st.subops().len(), s.subops().len() * t.subops().len());
    let mut r = rng(3);
    let rho = random_density(&mut r, sq(2));
    let sigma = random_density(&mut r, sq(3));
    let joint = rho.tensor_bipartite(&sigma).unwrap();
    let ps = apply(&s, &rho).unwrap();
    let pt = apply(&t, &sigma).unwrap();
    let pj = apply(&st, &joint).unwrap();
    for (i, a) in ps.iter().enumerate() {
        for (j, b) in pt.iter().enumerate() {
            assert_abs_diff_eq!(pj[i * pt.len() + j].probability, a.probability * b.probability, epsilon = 1e-12);
        }
    }

    let ii = tensor_op(&QuantumOperation::identity(sq(2)), &QuantumOperation::identity(sq(2)));
    assert!(same_action(&ii, &QuantumOperation::identity(sq(4))));
    assert_eq!(ii.subops().len(), 1);
}

#[test]
fn forget_examples() {
    let meas = basis_measurement(Subsystem::A, 2).unwrap();
    let dephase = forget_all(&meas).unwrap();
    assert!(!dephase.is_measuring());
    let rho = DensityOperator::pure(BipartiteLabel::alice(2).unwrap(), &ket(2, &[(0, 1.0), (1, 1.0)])).unwrap();
    let out = apply(&dephase, &rho).unwrap();
    assert!(max_abs_diff(out[0].state.as_ref().unwrap().matrix(), &diag(&[0.5, 0.5])) < 1e-12);

    assert!(same_action(&forget(&meas, &[1]).unwrap(), &meas));

    let op = protocol1_op(4, 2, BranchMode::Preserved).unwrap();
    let merged = forget_all(&op).unwrap();
    for f in [0.0, 0.3, 0.8, 1.0] {
        let iso = isotropic_state(IsotropicParams::new(4, f).unwrap()).unwrap();
        let branches = apply(&op, &iso).unwrap();
        let avg: f64 =
            branches.iter().filter_map(|b| b.state.as_ref().map(|s| b.probability * fidelity(s).unwrap())).sum();
        let one = apply(&merged, &iso).unwrap();
        assert_abs_diff_eq!(fidelity(one[0].state.as_ref().unwrap()).unwrap(), avg, epsilon = 1e-12);
    }
}

#[test]
fn forget_rejects_mixed_outputs() {
    let a = BipartiteLabel::alice(2).unwrap();
    let subops = vec![
        SubOperation::new(a, a, vec![diag(&[1.0, 0.0])]).unwrap(),
        SubOperation::new(a, BipartiteLabel::alice(1).unwrap(), vec![real_matrix(1, 2, &[0.0, 1.0])]).unwrap(),
    ];
    let op = QuantumOperation::new(a, subops).unwrap();
    assert!(matches!(forget(&op, &[0, 1]), Err(Error::Labelling(_))));
}

#[test]
fn trace_preservation_and_positivity() {
    let id = QuantumOperation::identity(sq(2));
    assert!(is_trace_preserving(&id));
    assert!(is_completely_positive(&id.subops()[0]));

    let l = BipartiteLabel::alice(2).unwrap();
    let half =
        QuantumOperation::new_incomplete(l, vec![SubOperation::new(l, l, vec![diag(&[1.0, 0.0])]).unwrap()]).unwrap();
    assert!(!is_trace_preserving(&half));
    assert!(QuantumOperation::new(l, half.subops().to_vec()).is_err());

    let transpose = ActionTable::from_fn(l, l, |m| m.transpose());
    assert_abs_diff_eq!(transpose.choi_min_eigenvalue(), -1.0, epsilon = 1e-12);
    assert!(!transpose.is_completely_positive());
}

#[test]
fn ppt_transpose_examples() {
    let id = QuantumOperation::identity(sq(2));
    let gamma = ppt_transpose(&id.subops()[0]);
    assert!(gamma.max_diff(&ActionTable::from_sub(&id.subops()[0])) < 1e-12);

    let sub = &protocol1_op(3, 2, BranchMode::Preserved).unwrap().subops()[1].clone();
    let twice = ppt_transpose(sub).ppt_conjugate();
    assert!(twice.max_diff(&ActionTable::from_sub(sub)) < 1e-12);

    let create = phi_creation(2);
    let min = ppt_transpose(&create.subops()[0]).choi_min_eigenvalue();
    assert!(min <= -0.5 + 1e-9, "Choi minimum {min}");
    assert!(!is_ppt_operation(&create));
    assert!(is_ppt_operation(&id));
}

#[test]
fn separable_witnesses() {
    let op = protocol1_op(4, 2, BranchMode::Preserved).unwrap();
    let w = op.natural_witness().unwrap().clone();
    assert!(verify_separable_form(&op, &w).unwrap());

    let h = real_matrix(2, 2, &[1.0, 1.0, 1.0, -1.0]) / C64::new(2f64.sqrt(), 0.0);
    let sa = QuantumOperation::single_party(Subsystem::A, 2, vec![(2, vec![h.clone()])]).unwrap();
    let sb = QuantumOperation::single_party(Subsystem::B, 2, vec![(2, vec![diag(&[1.0, -1.0])])]).unwrap();
    let local = make_local(&sa, &sb).unwrap();
    let good = SeparableWitness { factors: vec![vec![(h.clone(), diag(&[1.0, -1.0]))]] };
    assert!(verify_separable_form(&local, &good).unwrap());
    let bad = SeparableWitness { factors: vec![vec![(h, diag(&[1.0, 1.0]))]] };
    assert!(!verify_separable_form(&local, &bad).unwrap());

    let wrong_shape = SeparableWitness { factors: vec![vec![(identity(3), identity(2))]] };
    assert!(verify_separable_form(&local, &wrong_shape).is_err());
}

#[test]
fn local_constructors() {
    let ia = QuantumOperation::single_party(Subsystem::A, 2, vec![(2, vec![identity(2)])]).unwrap();
    let ib = QuantumOperation::single_party(Subsystem::B, 2, vec![(2, vec![identity(2)])]).unwrap();
    let local = make_local(&ia, &ib).unwrap();
    assert_eq!(local.provenance(), Some(OperationClass::Local));
    assert!(same_action(&local, &QuantumOperation::identity(sq(2))));

    let meas = basis_measurement(Subsystem::A, 2).unwrap();
    assert!(matches!(make_local(&meas, &ib), Err(Error::NotApplicable(_))));

    let one = make_one_local(&meas, 2).unwrap();
    assert_eq!(one.provenance(), Some(OperationClass::OneLocal));
    assert_eq!(one.subops().len(), 2);
    let w = one.natural_witness().unwrap();
    for pairs in &w.factors {
        for (_, b) in pairs {
            assert!(max_abs_diff(b, &identity(2)) < 1e-15);
        }
    }
}

type Tile<'a> = (&'a [(usize, f64)], &'a [(usize, f64)]);

/// The nine product states of the 3×3 domino basis: separable measurement
/// that no local protocol with communication implements.
fn domino() -> QuantumOperation {
    let s = 0.5f64.sqrt();
    let pairs: [Tile; 9] = [
        (&[(1, 1.0)], &[(1, 1.0)]),
        (&[(0, 1.0)], &[(0, s), (1, s)]),
        (&[(0, 1.0)], &[(0, s), (1, -s)]),
        (&[(2, 1.0)], &[(1, s), (2, s)]),
        (&[(2, 1.0)], &[(1, s), (2, -s)]),
        (&[(1, s), (2, s)], &[(0, 1.0)]),
        (&[(1, s), (2, -s)], &[(0, 1.0)]),
        (&[(0, s), (1, s)], &[(2, 1.0)]),
        (&[(0, s), (1, -s)], &[(2, 1.0)]),
    ];
    let l = sq(3);
    let mut subops = Vec::new();
    let mut factors = Vec::new();
    for (a, b) in pairs {
        let (pa, pb) = (projector(&ket(3, a)), projector(&ket(3, b)));
        subops.push(SubOperation::new(l, l, vec![tensor(&pa, &pb)]).unwrap());
        factors.push(vec![(pa, pb)]);
    }
    QuantumOperation::new(l, subops)
        .unwrap()
        .with_provenance(OperationClass::Separable)
        .with_witness(SeparableWitness { factors })
}

/// Prepare the bound entangled state orthogonal to the five "tiles" product
/// states: p.p.t. but not separable.
fn tiles_preparation() -> QuantumOperation {
    let s = 0.5f64.sqrt();
    let t = 1.0 / 3.0f64.sqrt();
    let tiles: [Tile; 5] = [
        (&[(0, 1.0)], &[(0, s), (1, -s)]),
        (&[(0, s), (1, -s)], &[(2, 1.0)]),
        (&[(2, 1.0)], &[(1, s), (2, -s)]),
        (&[(1, s), (2, -s)], &[(0, 1.0)]),
        (&[(0, t), (1, t), (2, t)], &[(0, t), (1, t), (2, t)]),
    ];
    let mut m = identity(9);
    for (a, b) in tiles {
        m -= projector(&ket(3, a).kronecker(&ket(3, b)));
    }
    let rho = DensityOperator::new(sq(3), m / C64::new(4.0, 0.0)).unwrap();
    assert!(min_eigenvalue(&partial_transpose_matrix(rho.matrix(), sq(3), Subsystem::B).unwrap()).unwrap() > -1e-12);
    QuantumOperation::replace_with_state(BipartiteLabel::new(1, 1).unwrap(), &rho)
        .unwrap()
        .with_provenance(OperationClass::Ppt)
}

fn class_fixtures() -> Vec<(&'static str, QuantumOperation)> {
    let meas_a = basis_measurement(Subsystem::A, 2).unwrap();
    let meas_b = basis_measurement(Subsystem::B, 2).unwrap();
    let x = real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let flip_b = |on: bool| {
        let u = if on { x.clone() } else { identity(2) };
        make_one_local_b(2, &QuantumOperation::single_party(Subsystem::B, 2, vec![(2, vec![u])]).unwrap()).unwrap()
    };
    let mut r = rng(11);
    let ua = haar_unitary(&mut r, 2);
    let ub = haar_unitary(&mut r, 3);
    let unitaries = make_local(
        &QuantumOperation::single_party(Subsystem::A, 2, vec![(2, vec![ua])]).unwrap(),
        &QuantumOperation::single_party(Subsystem::B, 3, vec![(3, vec![ub])]).unwrap(),
    )
    .unwrap();
    let one_way = make_one_local(&meas_a, 2).unwrap();
    let two_way =
        compose(&one_way, &[make_one_local_b(2, &meas_b).unwrap(), make_one_local_b(2, &meas_b).unwrap()]).unwrap();
    vec![
        ("identity", QuantumOperation::identity(sq(3))),
        ("local unitaries", unitaries),
        ("measure A", one_way.clone()),
        ("measure B", make_one_local_b(2, &meas_b).unwrap()),
        ("measure A, correct B", compose(&one_way, &[flip_b(false), flip_b(true)]).unwrap()),
        ("measure A then B", two_way),
        ("protocol 1 branches", protocol1_op(4, 3, BranchMode::Preserved).unwrap()),
        ("protocol 2", protocol2_op(4, 2).unwrap()),
        ("domino measurement", domino()),
        ("tiles preparation", tiles_preparation()),
    ]
}

#[test]
fn class_tags_respect_containment() {
    let fixtures = class_fixtures();
    assert_eq!(fixtures.len(), 10);
    let expected = [
        OperationClass::Local,
        OperationClass::Local,
        OperationClass::OneLocal,
        OperationClass::TwoLocal,
        OperationClass::OneLocal,
        OperationClass::TwoLocal,
        OperationClass::TwoLocal,
        OperationClass::Local,
        OperationClass::Separable,
        OperationClass::Ppt,
    ];
    for ((name, op), want) in fixtures.iter().zip(expected) {
        let class = op.provenance().unwrap_or_else(|| panic!("{name} has no tag"));
        assert_eq!(class, want, "{name}");
        assert!(is_trace_preserving(op), "{name}");
        assert!(op.subops().iter().all(is_completely_positive), "{name}");
        if class <= OperationClass::Separable {
            let w = op.natural_witness().unwrap_or_else(|| panic!("{name} has no witness"));
            assert!(verify_separable_form(op, w).unwrap(), "{name}");
        }
        assert!(is_ppt_operation(op), "{name}");
    }
    assert_eq!(phi_creation(2).provenance(), None);
    assert!(!is_ppt_operation(&phi_creation(2)));
}

#[test]
fn descriptor_round_trip_and_classify() {
    let op = protocol1_op(3, 2, BranchMode::Preserved).unwrap();
    let d = OperationDescriptor::from_operation(&op, op.natural_witness());
    let text = serde_json::to_string(&d).unwrap();
    let back: OperationDescriptor = serde_json::from_str(&text).unwrap();
    let (op2, w2) = back.to_operation().unwrap();
    assert!(same_action(&op, &op2));
    let c = classify(&op2, w2.as_ref()).unwrap();
    assert_eq!(c, Classification { tp: true, cp: true, ppt: true, separable_verified: true });

    let id = QuantumOperation::identity(sq(2));
    let c = classify(&id, id.natural_witness()).unwrap();
    assert_eq!(c, Classification { tp: true, cp: true, ppt: true, separable_verified: true });
    let c = classify(&phi_creation(2), None).unwrap();
    assert_eq!(c, Classification { tp: true, cp: true, ppt: false, separable_verified: false });
}

#[test]
fn transposed_protocol_choi_has_finite_spectrum() {
    for (k, kp) in [(4, 4), (5, 3), (6, 6)] {
        let op = protocol1_op(k, kp, BranchMode::Merged).unwrap();
        let t = ppt_transpose(&op.subops()[0]);
        let min = min_eigenvalue(&t.choi()).unwrap();
        assert!(min.is_finite(), "({k},{kp}): {min}");
    }
}
