use serde::{Deserialize, Serialize};

use crate::bounds::log2_dim;
use crate::error::Result;

use super::rates::step_rate;
use super::trace::{BranchOutcome, ProtocolTrace, TraceStep};

/// Largest power of two strictly below `k / n`, or 1 when `k < 2n`.
pub fn power_of_two_below(k: u128, n: u64) -> u128 {
    let n = n as u128;
    let mut out: u128 = 1;
    // 2·out·n < k  ⇔  the next power still fits strictly below k / n
    while let Some(next) = out.checked_mul(2) {
        match next.checked_mul(n) {
            Some(v) if v < k => out = next,
            _ => break,
        }
    }
    out
}

/// Reduce one branch to a power-of-two dimension with the guaranteed
/// fidelity `(1 − K'/K)·F` (1 for `K' = 1`).
pub fn normalize_branch(b: &BranchOutcome, n: u64) -> BranchOutcome {
    let kp = power_of_two_below(b.k, n);
    let f = if kp == 1 { 1.0 } else { (1.0 - kp as f64 / b.k as f64) * b.f };
    BranchOutcome { p: b.p, k: kp, f }
}

/// Applies the power-of-two reduction to every branch of every step.
pub fn normalize_powers_of_two(trace: &ProtocolTrace) -> ProtocolTrace {
    ProtocolTrace {
        steps: trace
            .steps
            .iter()
            .map(|s| TraceStep { n: s.n, branches: s.branches.iter().map(|b| normalize_branch(b, s.n)).collect() })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Step {
    pub n: u64,
    #[serde(rename = "K")]
    pub k: u128,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "K_prime")]
    pub k_prime: u128,
    /// Guaranteed lower bound on the reduced fidelity.
    #[serde(rename = "F_prime")]
    pub f_prime: f64,
    /// `K'/K`, which tends to zero.
    pub ratio: f64,
    /// `(log₂K − log₂K')/n`, the rate given up, which tends to zero.
    pub rate_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub trace: ProtocolTrace,
    pub steps: Vec<Theorem2Step>,
}

/// Turns a non-measuring trace into one whose dimensions are powers of two,
/// at an asymptotically vanishing cost in rate.
pub fn theorem2_transform(trace: &ProtocolTrace) -> Result<Theorem2Report> {
    trace.validate()?;
    if let Some(i) = trace.steps.iter().position(|s| !s.is_single_branch()) {
        return Err(crate::error::Error::NotApplicable(format!("step {i} is measuring")));
    }
    let out = normalize_powers_of_two(trace);
    let steps = trace
        .steps
        .iter()
        .zip(&out.steps)
        .map(|(s, t)| {
            let (b, c) = (&s.branches[0], &t.branches[0]);
            Theorem2Step {
                n: s.n,
                k: b.k,
                f: b.f,
                k_prime: c.k,
                f_prime: c.f,
                ratio: c.k as f64 / b.k as f64,
                rate_loss: (log2_dim(b.k) - log2_dim(c.k)) / s.n as f64,
            }
        })
        .collect();
    Ok(Theorem2Report { trace: out, steps })
}

/// The protocol used at input count `n` when surplus copies are discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedStep {
    pub n: u64,
    /// Input count of the reused step; absent below the smallest one.
    pub source_n: Option<u64>,
    pub discarded: u64,
    /// Definition 2' rate per actual input copy.
    pub rate: f64,
    pub source_rate: f64,
    pub branches: Vec<BranchOutcome>,
}

/// Runs the largest step with `nᵢ ≤ n` and throws the other copies away.
pub fn discard_padding_at(trace: &ProtocolTrace, n: u64) -> PaddedStep {
    match trace.steps.iter().rev().find(|s| s.n <= n) {
        Some(s) => {
            let source_rate = step_rate(s);
            PaddedStep {
                n,
                source_n: Some(s.n),
                discarded: n - s.n,
                rate: source_rate * s.n as f64 / n as f64,
                source_rate,
                branches: s.branches.clone(),
            }
        }
        None => PaddedStep {
            n,
            source_n: None,
            discarded: n,
            rate: 0.0,
            source_rate: 0.0,
            branches: vec![BranchOutcome::failure(1.0)],
        },
    }
}

/// The padded protocol at every input count `1..=max_n`.
pub fn discard_padding(trace: &ProtocolTrace, max_n: u64) -> Result<(ProtocolTrace, Vec<PaddedStep>)> {
    trace.validate()?;
    let padded: Vec<PaddedStep> = (1..=max_n).map(|n| discard_padding_at(trace, n)).collect();
    let out =
        ProtocolTrace { steps: padded.iter().map(|p| TraceStep { n: p.n, branches: p.branches.clone() }).collect() };
    Ok((out, padded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn power_of_two_examples() {
        assert_eq!(power_of_two_below(1 << 30, 10), 1 << 26);
        assert_eq!(power_of_two_below(15, 8), 1);
        assert_eq!(power_of_two_below(16, 8), 1);
        assert_eq!(power_of_two_below(17, 8), 2);
        assert_eq!(power_of_two_below(1 << 20, 1), 1 << 19);
        assert_eq!(power_of_two_below(u128::MAX, 1), 1 << 127);
        assert_eq!(power_of_two_below(1, 1), 1);
    }

    #[test]
    fn transform_examples() {
        let t = ProtocolTrace::new(vec![TraceStep::single(10, 1 << 30, 0.99)]).unwrap();
        let r = theorem2_transform(&t).unwrap();
        assert_eq!(r.steps[0].k_prime, 1 << 26);
        assert_abs_diff_eq!(r.steps[0].f_prime, 0.928125, epsilon = 1e-15);

        let t = ProtocolTrace::new(vec![TraceStep::single(10, 19, 0.7)]).unwrap();
        let r = theorem2_transform(&t).unwrap();
        assert_eq!((r.steps[0].k_prime, r.steps[0].f_prime), (1, 1.0));

        let t = ProtocolTrace::new(vec![TraceStep::single(1, 64, 0.8)]).unwrap();
        let r = theorem2_transform(&t).unwrap();
        assert_eq!(r.steps[0].k_prime, 32);
        assert_abs_diff_eq!(r.steps[0].rate_loss, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn padding_examples() {
        let t = ProtocolTrace::new(vec![
            TraceStep::single(10, 1 << 5, 1.0),
            TraceStep::single(20, 1 << 10, 1.0),
            TraceStep::single(40, 1 << 20, 1.0),
        ])
        .unwrap();
        let p = discard_padding_at(&t, 25);
        assert_eq!((p.source_n, p.discarded), (Some(20), 5));
        assert_abs_diff_eq!(p.rate, 0.5 * 20.0 / 25.0, epsilon = 1e-15);

        let p = discard_padding_at(&t, 20);
        assert_eq!(p.discarded, 0);
        assert_eq!(p.rate, p.source_rate);

        let p = discard_padding_at(&t, 7);
        assert_eq!((p.source_n, p.rate), (None, 0.0));
        assert_eq!(p.branches, vec![BranchOutcome::failure(1.0)]);

        let (padded, _) = discard_padding(&t, 50).unwrap();
        assert_eq!(padded.len(), 50);
        padded.validate().unwrap();
    }
}
