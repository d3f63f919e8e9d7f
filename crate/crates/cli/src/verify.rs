//! The `verify` invariant suites.

use clap::ValueEnum;
use distill_core::bounds::{
    binary_entropy, ef_bounds_isotropic, ef_numeric_estimate, hashing_rate, log2_dim, ppt_bound_isotropic,
};
use distill_core::distillation::{
    def1_rate, def1prime_check, rate_bound_exact, theorem2_transform, theorem3_compile, BranchOutcome, CompilerConfig,
    ProtocolTrace, TraceStep,
};
use distill_core::linalg::{max_abs_diff, CMatrix};
use distill_core::operations::{
    apply, compose, forget_all, is_completely_positive, is_ppt_operation, is_trace_preserving, tensor_op,
    verify_separable_form, QuantumOperation,
};
use distill_core::protocols::{
    exact_twirl, monte_carlo_twirl, protocol1_fidelity, protocol1_op, protocol2_fidelity, protocol2_op,
    reduce_dimension_op, simulate_on_isotropic, twirl_unitary, BranchMode, ReductionPlan,
};
use distill_core::random::{haar_unitary, random_density, random_operation, substream, SeededRng};
use distill_core::states::{fidelity, isotropic_state, IsotropicParams};
use distill_core::{BipartiteLabel, DensityOperator, Exec, C64};
use rand::Rng;
use serde::Serialize;

use crate::commands::{TOL_BOUND, TOL_SIMULATION, TOL_TWIRL_SAMPLED};
use crate::output::{to_json, Emit, Table};

/// Deliberate errors for exercising the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Shift every protocol-1 closed-form fidelity up by 1e-3.
    Protocol1Fidelity,
}

pub const FAULT_SHIFT: f64 = 1e-3;
const TOL_IDENTITY: f64 = 1e-12;
const TOL_ALGEBRA: f64 = 1e-9;
const ALGEBRA_CASES: usize = 200;
const TWIRL_CONJUGATIONS: usize = 100;
const TWIRL_SAMPLES: usize = 10_000;
/// Failures listed per suite in the report.
const MAX_LISTED: usize = 20;

pub const SUITES: [&str; 9] = [
    "protocol1-closed-form",
    "protocol2-closed-form",
    "twirl",
    "lemma2-bound",
    "lemma1-chain",
    "lemma3-identity",
    "operation-algebra",
    "theorem2-transform",
    "theorem3-compiler",
];

struct Checks {
    total: usize,
    failures: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks { total: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, point: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failures.push(point());
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

fn f_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn protocol1_suite(c: &mut Checks, fault: Option<Fault>) {
    let shift = if fault == Some(Fault::Protocol1Fidelity) { FAULT_SHIFT } else { 0.0 };
    for k in 2..=6 {
        for kp in 1..=k {
            let op = protocol1_op(k, kp, BranchMode::Merged).expect("valid protocol 1");
            for f in f_grid() {
                let closed = protocol1_fidelity(k, kp, f).expect("valid grid point") + shift;
                let sim = simulate_on_isotropic(&op, k, f).expect("valid grid point");
                c.check((sim - closed).abs() <= TOL_SIMULATION, || {
                    format!("K={k} K'={kp} F={f}: simulated {sim} vs closed form {closed}")
                });
                c.check(closed >= kp as f64 / k as f64 * f - TOL_BOUND, || {
                    format!("K={k} K'={kp} F={f}: closed form {closed} below (K'/K)F")
                });
            }
        }
    }
    let spot = protocol1_fidelity(4, 2, 1.0).expect("valid") + shift;
    c.check(spot == 0.625, || format!("K=4 K'=2 F=1: {spot} != 0.625"));
}

fn protocol2_suite(c: &mut Checks) {
    for k in 2..=9usize {
        for kp in (1..=k).filter(|kp| k % kp == 0) {
            let op = protocol2_op(k, kp).expect("divisor pair");
            let (k2, kp2) = ((k * k) as f64, (kp * kp) as f64);
            for f in f_grid() {
                let formula = f + (1.0 - f) * (k2 - kp2) / ((k2 - 1.0) * kp2);
                let closed = protocol2_fidelity(k, kp, f).expect("valid grid point");
                let sim = simulate_on_isotropic(&op, k, f).expect("valid grid point");
                c.check((sim - formula).abs() <= TOL_SIMULATION && (closed - formula).abs() <= TOL_SIMULATION, || {
                    format!("K={k} K'={kp} F={f}: simulated {sim}, closed form {closed}, formula {formula}")
                });
                c.check(closed >= f - TOL_BOUND, || format!("K={k} K'={kp} F={f}: {closed} below F"));
            }
            let one = simulate_on_isotropic(&op, k, 1.0).expect("valid");
            c.check((one - 1.0).abs() <= TOL_SIMULATION, || format!("K={k} K'={kp}: F=1 maps to {one}"));
            let random_in = 1.0 / (k * k) as f64;
            let random_out = simulate_on_isotropic(&op, k, random_in).expect("valid");
            c.check((random_out - 1.0 / kp2).abs() <= TOL_SIMULATION, || {
                format!("K={k} K'={kp}: random input maps to fidelity {random_out}")
            });
        }
    }
}

fn twirl_suite(c: &mut Checks, rng: &mut SeededRng, seed: u64) {
    for k in [2usize, 3] {
        let label = BipartiteLabel::square(k).expect("k >= 1");
        for case in 0..3u64 {
            let rho = random_density(rng, label);
            let tw = exact_twirl(&rho).expect("square input");
            let (f0, f1) = (fidelity(&rho).expect("square"), fidelity(&tw).expect("square"));
            c.check((f0 - f1).abs() <= TOL_IDENTITY, || format!("K={k} case {case}: fidelity {f0} -> {f1}"));
            let mut worst = 0.0f64;
            for _ in 0..TWIRL_CONJUGATIONS {
                let w = twirl_unitary(&haar_unitary(rng, k));
                worst = worst.max(max_abs_diff(&(&w * tw.matrix() * w.adjoint()), tw.matrix()));
            }
            c.check(worst <= TOL_ALGEBRA, || format!("K={k} case {case}: conjugation moves twirl by {worst:e}"));
            let sampled = monte_carlo_twirl(&rho, TWIRL_SAMPLES, seed ^ (k as u64 * 16 + case), Exec::default())
                .expect("square input");
            let gap = max_abs_diff(&sampled, tw.matrix());
            c.check(gap <= TOL_TWIRL_SAMPLED, || format!("K={k} case {case}: sampled twirl off by {gap:e}"));
        }
    }
}

fn lemma2_suite(c: &mut Checks) {
    for k in 2..=6 {
        for kp in 1..k {
            let op = reduce_dimension_op(k, kp).expect("valid reduction");
            let plan = ReductionPlan::new(k, kp).expect("valid reduction");
            let weak = plan.weak_factor();
            c.check(plan.guaranteed_fidelity_factor >= weak - TOL_BOUND, || {
                format!("K={k} K'={kp}: factor {} below {weak}", plan.guaranteed_fidelity_factor)
            });
            for f in f_grid() {
                let sim = simulate_on_isotropic(&op, k, f).expect("valid grid point");
                let bound = plan.guaranteed_fidelity_factor * f;
                c.check(sim >= bound - TOL_BOUND, || format!("K={k} K'={kp} F={f}: simulated {sim} below {bound}"));
            }
        }
    }
}

fn lemma1_suite(c: &mut Checks, seed: u64) {
    for k in 2..=8u128 {
        let lk = log2_dim(k);
        for i in 0..=20 {
            let f = i as f64 / 20.0;
            let ppt = ppt_bound_isotropic(k, f).expect("valid");
            let h = binary_entropy(f).expect("valid");
            let gap = ppt - (f * lk - h) - (1.0 - f) * (k as f64 / (k as f64 - 1.0)).log2();
            c.check(gap.abs() <= TOL_IDENTITY, || format!("K={k} F={f}: p.p.t. identity off by {gap:e}"));
            let b = ef_bounds_isotropic(k, f).expect("valid");
            c.check(b.lower <= b.upper, || format!("K={k} F={f}: E_f lower {} above upper {}", b.lower, b.upper));
        }
    }
    for (i, f) in [0.5, 0.7, 0.9, 1.0].into_iter().enumerate() {
        let rho = isotropic_state(IsotropicParams::new(2, f).expect("valid")).expect("valid");
        let est = ef_numeric_estimate(&rho, 400, seed.wrapping_add(i as u64)).expect("two qubits");
        let b = ef_bounds_isotropic(2, f).expect("valid");
        c.check(est >= b.lower - 1e-6 && est <= b.upper + 1e-4, || {
            format!("K=2 F={f}: E_f estimate {est} outside [{}, {}]", b.lower, b.upper)
        });
    }
}

fn lemma3_suite(c: &mut Checks) {
    for k in [2u128, 4, 8, 16] {
        let (lk, kf) = (log2_dim(k), k as f64);
        for i in 1..20 {
            let f = i as f64 / 20.0;
            let raw = hashing_rate(k, f).expect("valid").raw;
            let h = binary_entropy(f).expect("valid");
            let other = (2.0 * f - 1.0) * lk - h + (1.0 - f) * (kf * kf / (kf * kf - 1.0)).log2();
            c.check((raw - other).abs() <= TOL_IDENTITY, || {
                format!("K={k} F={f}: hashing {raw} vs rearranged {other}")
            });
        }
        let top = hashing_rate(k, 1.0).expect("valid").raw;
        c.check(top == lk, || format!("K={k}: hashing at F=1 is {top}, not {lk}"));
    }
}

fn random_label(rng: &mut SeededRng) -> BipartiteLabel {
    BipartiteLabel::new(rng.random_range(1..=2), rng.random_range(1..=3)).expect("positive dims")
}

fn random_case(rng: &mut SeededRng) -> (QuantumOperation, DensityOperator) {
    let input = random_label(rng);
    let n = rng.random_range(1..=3);
    let outputs: Vec<BipartiteLabel> = (0..n).map(|_| random_label(rng)).collect();
    let op = random_operation(rng, input, &outputs);
    let rho = random_density(rng, input);
    (op, rho)
}

fn algebra_suite(c: &mut Checks, rng: &mut SeededRng) {
    for case in 0..ALGEBRA_CASES {
        let (op, rho) = random_case(rng);
        c.check(is_trace_preserving(&op), || format!("case {case}: random operation is incomplete"));
        let branches = apply(&op, &rho).expect("matching input");
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        c.check((total - 1.0).abs() <= TOL_ALGEBRA, || format!("case {case}: probabilities sum to {total}"));
        c.check(op.subops().iter().all(is_completely_positive), || format!("case {case}: Choi matrix not PSD"));

        let then: Vec<QuantumOperation> = op
            .subops()
            .iter()
            .map(|s| random_operation(rng, s.output(), &[BipartiteLabel::new(1, 2).expect("dims"), s.output()]))
            .collect();
        let direct = apply(&compose(&op, &then).expect("matching labels"), &rho).expect("matching input");
        let mut idx = 0;
        let mut worst = 0.0f64;
        for (i, b) in branches.iter().enumerate() {
            let staged = b.state.as_ref().map(|s| apply(&then[i], s).expect("matching input"));
            for j in 0..then[i].subops().len() {
                let d = &direct[idx];
                idx += 1;
                match &staged {
                    None => worst = worst.max(d.probability),
                    Some(st) => {
                        worst = worst.max((d.probability - b.probability * st[j].probability).abs());
                        if let (Some(x), Some(y)) = (&d.state, &st[j].state) {
                            worst = worst.max(max_abs_diff(x.matrix(), y.matrix()));
                        }
                    }
                }
            }
        }
        c.check(worst <= TOL_ALGEBRA && idx == direct.len(), || {
            format!("case {case}: compose and staged apply differ by {worst:e}")
        });

        let (t, sigma) = random_case(rng);
        let joint =
            apply(&tensor_op(&op, &t), &rho.tensor_bipartite(&sigma).expect("bipartite")).expect("matching input");
        let pt = apply(&t, &sigma).expect("matching input");
        let mut worst = 0.0f64;
        for (i, a) in branches.iter().enumerate() {
            for (j, b) in pt.iter().enumerate() {
                worst = worst.max((joint[i * pt.len() + j].probability - a.probability * b.probability).abs());
            }
        }
        c.check(worst <= TOL_ALGEBRA, || format!("case {case}: tensor product rule off by {worst:e}"));

        let input = BipartiteLabel::new(2, 2).expect("dims");
        let out = BipartiteLabel::new(1, 2).expect("dims");
        let three = random_operation(rng, input, &[out, out, out]);
        let rho2 = random_density(rng, input);
        let mut mix = CMatrix::zeros(2, 2);
        for b in apply(&three, &rho2).expect("matching input") {
            if let Some(s) = b.state {
                mix += s.matrix() * C64::new(b.probability, 0.0);
            }
        }
        let merged = apply(&forget_all(&three).expect("same outputs"), &rho2).expect("matching input");
        let gap = merged[0].state.as_ref().map_or(f64::INFINITY, |s| max_abs_diff(s.matrix(), &mix));
        c.check(gap <= TOL_ALGEBRA, || format!("case {case}: forget differs from the mixture by {gap:e}"));
    }

    // preparing Φ⁺ from nothing is not p.p.t.
    let phi = isotropic_state(IsotropicParams::new(2, 1.0).expect("valid")).expect("valid");
    let create = QuantumOperation::replace_with_state(BipartiteLabel::new(1, 1).expect("dims"), &phi).expect("valid");
    let table = distill_core::operations::ppt_transpose(&create.subops()[0]);
    let min = table.choi_min_eigenvalue();
    c.check(min <= -0.5 + 1e-9, || format!("Φ⁺ creation: p.p.t. Choi minimum {min}"));
    c.check(!is_ppt_operation(&create), || "Φ⁺ creation reported p.p.t.".into());

    for k in 2..=4 {
        for kp in 1..=k {
            let mut ops = vec![
                protocol1_op(k, kp, BranchMode::Merged).expect("valid"),
                protocol1_op(k, kp, BranchMode::Preserved).expect("valid"),
            ];
            if k % kp == 0 {
                ops.push(protocol2_op(k, kp).expect("valid"));
            }
            for op in ops {
                let ok = op.natural_witness().is_some_and(|w| verify_separable_form(&op, w).unwrap_or(false));
                c.check(ok && is_ppt_operation(&op), || format!("protocol op K={k} K'={kp}: not separable and p.p.t."));
            }
        }
    }
}

fn theorem2_suite(c: &mut Checks) {
    let steps = (1..=40u64).map(|i| TraceStep::single(i, 1u128 << (3 * i), 1.0 - 1.0 / i as f64)).collect();
    let trace = ProtocolTrace::new(steps).expect("valid synthetic trace");
    let r = theorem2_transform(&trace).expect("single-branch trace");
    c.check(def1prime_check(&r.trace), || "transformed dimensions are not powers of two".into());
    for w in r.steps.windows(2).filter(|w| w[0].n >= 4) {
        c.check(w[1].ratio <= w[0].ratio, || format!("i={}: K'/K increases", w[1].n));
    }
    // K'·n < K forces K'/K < 1/n
    for s in &r.steps {
        c.check(s.ratio < 1.0 / s.n as f64, || format!("i={}: K'/K = {} is not below 1/i", s.n, s.ratio));
    }
    let d1 = def1_rate(&r.trace).expect("single-branch trace");
    c.check((d1.limit_estimate - 3.0).abs() <= 1e-6, || format!("i=40: rate limit {}", d1.limit_estimate));

    let worked = ProtocolTrace::new(vec![TraceStep::single(10, 1u128 << 30, 0.99)]).expect("valid");
    let w = &theorem2_transform(&worked).expect("single branch").steps[0];
    c.check(w.k_prime == 1 << 26, || format!("n=10 K=2^30: K' = {}", w.k_prime));
    c.check(w.f_prime >= 0.928125 - 1e-12, || format!("n=10 K=2^30: F' = {}", w.f_prime));
}

fn theorem3_suite(c: &mut Checks) {
    let trace = ProtocolTrace::new(vec![TraceStep {
        n: 10,
        branches: vec![BranchOutcome::new(0.5, 1024, 0.99), BranchOutcome::new(0.5, 1, 1.0)],
    }])
    .expect("valid fixture");
    let exact = rate_bound_exact(&trace.steps[0]);
    let exact = exact.map(|r| (*r.numer(), *r.denom()));
    c.check(exact == Some((39, 100)), || format!("rate bound {exact:?} != 39/100"));
    let big = theorem3_compile(&trace, &CompilerConfig::relative(0.1, 0.01, 10_000)).expect("valid margins");
    let s = &big.steps[0];
    c.check((s.achieved_rate - s.target_rate).abs() <= 1e-3, || {
        format!("k=10000: achieved {} vs target {}", s.achieved_rate, s.target_rate)
    });
    let probs: Vec<f64> = [10u64, 100, 1000]
        .iter()
        .map(|&k| {
            theorem3_compile(&trace, &CompilerConfig::relative(0.1, 0.01, k)).expect("valid margins").steps[0]
                .failure_prob
        })
        .collect();
    c.check(probs.windows(2).all(|w| w[1] < w[0]), || format!("failure probabilities {probs:?} not decreasing"));
}

pub fn run(seed: u64, suites: &[String], fault: Option<Fault>) -> Result<VerifyReport, String> {
    if let Some(bad) = suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(format!("unknown suite `{bad}`; expected one of {}", SUITES.join(", ")));
    }
    let mut reports = Vec::new();
    for (i, name) in SUITES.iter().enumerate() {
        if !suites.is_empty() && !suites.iter().any(|s| s == name) {
            continue;
        }
        let mut rng = substream(seed, i as u64);
        let mut c = Checks::new();
        match *name {
            "protocol1-closed-form" => protocol1_suite(&mut c, fault),
            "protocol2-closed-form" => protocol2_suite(&mut c),
            "twirl" => twirl_suite(&mut c, &mut rng, seed),
            "lemma2-bound" => lemma2_suite(&mut c),
            "lemma1-chain" => lemma1_suite(&mut c, seed),
            "lemma3-identity" => lemma3_suite(&mut c),
            "operation-algebra" => algebra_suite(&mut c, &mut rng),
            "theorem2-transform" => theorem2_suite(&mut c),
            "theorem3-compiler" => theorem3_suite(&mut c),
            _ => unreachable!("names come from SUITES"),
        }
        let failed = c.failures.len();
        c.failures.truncate(MAX_LISTED);
        reports.push(SuiteReport { suite: name.to_string(), checks: c.total, failed, failures: c.failures });
    }
    Ok(VerifyReport { seed, passed: reports.iter().all(|r| r.failed == 0), suites: reports })
}

pub fn render(report: &VerifyReport, emit: Emit, precision: u32) -> String {
    match emit {
        Emit::Json => to_json(report, precision),
        Emit::Csv => {
            let mut t = Table::new(&["suite", "checks", "failed", "first_failure"]);
            for s in &report.suites {
                t.push(vec![
                    s.suite.clone(),
                    s.checks.to_string(),
                    s.failed.to_string(),
                    s.failures.first().cloned().unwrap_or_default(),
                ]);
            }
            t.to_csv()
        }
    }
}
