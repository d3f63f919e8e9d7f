use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities of one step must sum to one within this tolerance.
pub const TOL_PROBABILITY: f64 = 1e-9;
/// Branches below this probability are never produced and are skipped in
/// fidelity statistics.
pub const NULL_PROBABILITY: f64 = 1e-12;

/// One outcome of a distillation step: with probability `p` the protocol
/// leaves a `K × K` state of fidelity `F`. Failure is `K = 1, F = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub p: f64,
    #[serde(rename = "K")]
    pub k: u128,
    #[serde(rename = "F")]
    pub f: f64,
}

impl BranchOutcome {
    pub fn new(p: f64, k: u128, f: f64) -> Self {
        BranchOutcome { p, k, f }
    }

    /// The "nothing produced" outcome.
    pub fn failure(p: f64) -> Self {
        BranchOutcome { p, k: 1, f: 1.0 }
    }
}

/// Outcome statistics of the protocol run on `n` input copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub n: u64,
    pub branches: Vec<BranchOutcome>,
}

impl TraceStep {
    pub fn single(n: u64, k: u128, f: f64) -> Self {
        TraceStep { n, branches: vec![BranchOutcome::new(1.0, k, f)] }
    }

    pub fn is_single_branch(&self) -> bool {
        self.branches.len() == 1
    }

    /// Branches that can actually occur.
    pub fn live_branches(&self) -> impl Iterator<Item = &BranchOutcome> {
        self.branches.iter().filter(|b| b.p >= NULL_PROBABILITY)
    }
}

/// A sequence of protocol steps with strictly increasing input counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub steps: Vec<TraceStep>,
}

impl ProtocolTrace {
    pub fn new(steps: Vec<TraceStep>) -> Result<Self> {
        let t = ProtocolTrace { steps };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_n = 0u64;
        for (i, s) in self.steps.iter().enumerate() {
            let at = |msg: String| Error::Domain(format!("steps[{i}]: {msg}"));
            if s.n == 0 {
                return Err(at("n must be positive".into()));
            }
            if i > 0 && s.n <= prev_n {
                return Err(at(format!("n={} does not increase on {prev_n}", s.n)));
            }
            prev_n = s.n;
            if s.branches.is_empty() {
                return Err(at("no branches".into()));
            }
            let mut total = 0.0;
            for (j, b) in s.branches.iter().enumerate() {
                if !(0.0..=1.0).contains(&b.p) {
                    return Err(at(format!("branches[{j}].p={} outside [0, 1]", b.p)));
                }
                if b.k == 0 {
                    return Err(at(format!("branches[{j}].K must be positive")));
                }
                if !(0.0..=1.0).contains(&b.f) {
                    return Err(at(format!("branches[{j}].F={} outside [0, 1]", b.f)));
                }
                if b.k == 1 && (b.f - 1.0).abs() > TOL_PROBABILITY {
                    return Err(at(format!("branches[{j}] has K=1 but F={}", b.f)));
                }
                total += b.p;
            }
            if (total - 1.0).abs() > TOL_PROBABILITY {
                return Err(at(format!("probabilities sum to {total}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_traces() {
        let good =
            TraceStep { n: 10, branches: vec![BranchOutcome::new(0.5, 1024, 0.99), BranchOutcome::failure(0.5)] };
        assert!(ProtocolTrace::new(vec![good.clone()]).is_ok());

        let mut s = good.clone();
        s.branches[0].p = 0.4;
        assert!(ProtocolTrace::new(vec![s]).is_err());

        let mut s = good.clone();
        s.branches[1].f = 0.9;
        assert!(ProtocolTrace::new(vec![s]).is_err());

        let later = TraceStep { n: 10, ..good.clone() };
        assert!(ProtocolTrace::new(vec![good.clone(), later]).is_err());

        assert!(ProtocolTrace::new(vec![TraceStep { n: 1, branches: vec![] }]).is_err());
        assert!(ProtocolTrace::new(vec![]).is_ok());
    }

    #[test]
    fn json_field_names() {
        let t = ProtocolTrace::new(vec![TraceStep::single(3, 1u128 << 100, 0.5)]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"steps":[{"n":3,"branches":[{"p":1.0,"K":1267650600228229401496703205376,"F":0.5}]}]}"#);
        let back: ProtocolTrace = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
