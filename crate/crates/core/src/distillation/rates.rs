use serde::{Deserialize, Serialize};

use crate::bounds::{ef_bounds_isotropic, log2_dim};
use crate::error::{Error, Result};

use super::trace::{ProtocolTrace, TraceStep};

/// A sequence is taken to have reached zero once its last value is this small.
pub const TOL_VANISHED: f64 = 1e-9;
/// Slack when testing a tail for monotonicity.
pub const TOL_MONOTONE: f64 = 1e-12;

/// Finite-sequence evidence that a nonnegative quantity tends to zero.
///
/// The tail is the last half of the sequence (at least two entries when
/// available). The sequence is judged to vanish when its last value is below
/// [`TOL_VANISHED`], or when the tail is nonincreasing and strictly smaller
/// at its end than at its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub last: f64,
    pub tail_start: usize,
    pub nonincreasing_tail: bool,
    pub vanishes: bool,
}

pub fn vanishing_trend(values: &[f64]) -> Trend {
    let Some(&last) = values.last() else {
        return Trend { last: 0.0, tail_start: 0, nonincreasing_tail: true, vanishes: true };
    };
    let len = values.len();
    let tail_start = if len >= 2 { (len / 2).min(len - 2) } else { 0 };
    let tail = &values[tail_start..];
    let nonincreasing_tail = tail.windows(2).all(|w| w[1] <= w[0] + TOL_MONOTONE);
    let decreasing = tail.len() >= 2 && last < tail[0] - TOL_MONOTONE;
    Trend {
        last,
        tail_start,
        nonincreasing_tail,
        vanishes: last.abs() <= TOL_VANISHED || (nonincreasing_tail && decreasing),
    }
}

/// Steps over which the limit of `log₂K / n` is estimated by a difference
/// quotient. Two steps absorb period-two oscillation in the dimensions.
pub const LIMIT_WINDOW: usize = 2;

/// Stolz–Cesàro estimate of `lim aᵢ / nᵢ` from the last [`LIMIT_WINDOW`]
/// increments; falls back to the last ratio for a single step.
pub fn limit_estimate(n: &[u64], a: &[f64]) -> f64 {
    let len = n.len().min(a.len());
    if len == 0 {
        return 0.0;
    }
    if len == 1 {
        return a[0] / n[0] as f64;
    }
    let from = len - 1 - LIMIT_WINDOW.min(len - 1);
    (a[len - 1] - a[from]) / (n[len - 1] - n[from]) as f64
}

/// Definition 1 evaluation of a trace of non-measuring steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Def1Report {
    /// `log₂Kᵢ / nᵢ` per step.
    pub per_step: Vec<f64>,
    pub last_rate: f64,
    /// Difference-quotient estimate of the limiting rate.
    pub limit_estimate: f64,
    /// Trend of `1 − Fᵢ`.
    pub fidelity_deficit: Trend,
    /// The limit estimate when the fidelity tends to one, otherwise absent.
    pub rate: Option<f64>,
}

fn single_branches(trace: &ProtocolTrace) -> Result<()> {
    if let Some((i, _)) = trace.steps.iter().enumerate().find(|(_, s)| !s.is_single_branch()) {
        return Err(Error::NotApplicable(format!(
            "step {i} is measuring; the non-measuring definition does not apply"
        )));
    }
    Ok(())
}

pub fn def1_rate(trace: &ProtocolTrace) -> Result<Def1Report> {
    single_branches(trace)?;
    let ns: Vec<u64> = trace.steps.iter().map(|s| s.n).collect();
    let logs: Vec<f64> = trace.steps.iter().map(|s| log2_dim(s.branches[0].k)).collect();
    let per_step: Vec<f64> = logs.iter().zip(&ns).map(|(l, &n)| l / n as f64).collect();
    let deficits: Vec<f64> = trace.steps.iter().map(|s| 1.0 - s.branches[0].f).collect();
    let fidelity_deficit = vanishing_trend(&deficits);
    let limit = limit_estimate(&ns, &logs).max(0.0);
    Ok(Def1Report {
        last_rate: per_step.last().copied().unwrap_or(0.0),
        per_step,
        limit_estimate: limit,
        rate: fidelity_deficit.vanishes.then_some(limit),
        fidelity_deficit,
    })
}

/// True iff every output dimension in the trace is a power of two.
pub fn def1prime_check(trace: &ProtocolTrace) -> bool {
    trace.steps.iter().flat_map(|s| &s.branches).all(|b| b.k.is_power_of_two())
}

/// `(1/n) Σⱼ pⱼ log₂Kⱼ`
pub fn step_rate(step: &TraceStep) -> f64 {
    step.branches.iter().map(|b| b.p * log2_dim(b.k)).sum::<f64>() / step.n as f64
}

/// `(1/n) Σⱼ pⱼ (1 − Fⱼ) log₂Kⱼ`
pub fn step_residual(step: &TraceStep) -> f64 {
    step.branches.iter().map(|b| b.p * (1.0 - b.f) * log2_dim(b.k)).sum::<f64>() / step.n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Def2PrimeReport {
    pub rates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rate: f64,
    pub residual: f64,
    pub residual_trend: Trend,
    pub condition: bool,
}

pub fn def2prime_evaluate(trace: &ProtocolTrace) -> Def2PrimeReport {
    let rates: Vec<f64> = trace.steps.iter().map(step_rate).collect();
    let residuals: Vec<f64> = trace.steps.iter().map(step_residual).collect();
    let residual_trend = vanishing_trend(&residuals);
    Def2PrimeReport {
        rate: rates.last().copied().unwrap_or(0.0),
        residual: residuals.last().copied().unwrap_or(0.0),
        condition: residual_trend.vanishes,
        residual_trend,
        rates,
        residuals,
    }
}

/// Per-step interval for `(1/n) Σⱼ pⱼ E_f(Fⱼ, Kⱼ)` from the isotropic bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Def2Report {
    pub intervals: Vec<[f64; 2]>,
    pub interval: [f64; 2],
}

pub fn step_ef_interval(step: &TraceStep) -> Result<[f64; 2]> {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for b in &step.branches {
        let e = ef_bounds_isotropic(b.k, b.f)?;
        lo += b.p * e.lower;
        hi += b.p * e.upper;
    }
    let n = step.n as f64;
    Ok([lo / n, hi / n])
}

pub fn def2_evaluate(trace: &ProtocolTrace) -> Result<Def2Report> {
    let intervals = trace.steps.iter().map(step_ef_interval).collect::<Result<Vec<_>>>()?;
    Ok(Def2Report { interval: intervals.last().copied().unwrap_or([0.0, 0.0]), intervals })
}

/// Smallest fidelity over the branches that occur, per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfFidelityReport {
    pub per_step: Vec<f64>,
    pub last: f64,
    pub deficit_trend: Trend,
    pub condition: bool,
}

pub fn step_inf_fidelity(step: &TraceStep) -> f64 {
    step.live_branches().map(|b| b.f).fold(1.0, f64::min)
}

pub fn inf_fidelity_check(trace: &ProtocolTrace) -> InfFidelityReport {
    let per_step: Vec<f64> = trace.steps.iter().map(step_inf_fidelity).collect();
    let deficits: Vec<f64> = per_step.iter().map(|f| 1.0 - f).collect();
    let deficit_trend = vanishing_trend(&deficits);
    InfFidelityReport {
        last: per_step.last().copied().unwrap_or(1.0),
        condition: deficit_trend.vanishes,
        deficit_trend,
        per_step,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRates {
    pub n: u64,
    pub def1_rate: Option<f64>,
    pub def2_lower: f64,
    pub def2_upper: f64,
    pub def2prime_rate: f64,
    pub def2prime_residual: f64,
    pub inf_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    /// Absent when the trace contains measuring steps.
    pub def1_fidelity: Option<bool>,
    pub def1prime_powers_of_two: bool,
    pub def2prime_residual: bool,
    pub inf_fidelity: bool,
}

/// Every definition evaluated on one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub def1_rate: Option<f64>,
    pub def1_limit_estimate: Option<f64>,
    pub def2_interval: [f64; 2],
    pub def2prime_rate: f64,
    pub def2prime_residual: f64,
    pub inf_fidelity: f64,
    pub conditions: Conditions,
    pub steps: Vec<StepRates>,
}

pub fn rate_report(trace: &ProtocolTrace) -> Result<RateReport> {
    trace.validate()?;
    if trace.is_empty() {
        return Err(Error::Domain("trace has no steps".into()));
    }
    let def1 = match def1_rate(trace) {
        Ok(r) => Some(r),
        Err(Error::NotApplicable(_)) => None,
        Err(e) => return Err(e),
    };
    let d2 = def2_evaluate(trace)?;
    let d2p = def2prime_evaluate(trace);
    let inf = inf_fidelity_check(trace);
    let steps = trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| StepRates {
            n: s.n,
            def1_rate: def1.as_ref().map(|d| d.per_step[i]),
            def2_lower: d2.intervals[i][0],
            def2_upper: d2.intervals[i][1],
            def2prime_rate: d2p.rates[i],
            def2prime_residual: d2p.residuals[i],
            inf_fidelity: inf.per_step[i],
        })
        .collect();
    Ok(RateReport {
        def1_rate: def1.as_ref().and_then(|d| d.rate),
        def1_limit_estimate: def1.as_ref().map(|d| d.limit_estimate),
        def2_interval: d2.interval,
        def2prime_rate: d2p.rate,
        def2prime_residual: d2p.residual,
        inf_fidelity: inf.last,
        conditions: Conditions {
            def1_fidelity: def1.as_ref().map(|d| d.fidelity_deficit.vanishes),
            def1prime_powers_of_two: def1prime_check(trace),
            def2prime_residual: d2p.condition,
            inf_fidelity: inf.condition,
        },
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distillation::trace::BranchOutcome;
    use approx::assert_abs_diff_eq;

    fn geometric(len: u64, k: impl Fn(u64) -> u128, f: impl Fn(u64) -> f64) -> ProtocolTrace {
        ProtocolTrace::new((1..=len).map(|i| TraceStep::single(i, k(i), f(i))).collect()).unwrap()
    }

    fn two_branch() -> ProtocolTrace {
        ProtocolTrace::new(vec![TraceStep {
            n: 10,
            branches: vec![BranchOutcome::new(0.5, 1024, 0.99), BranchOutcome::failure(0.5)],
        }])
        .unwrap()
    }

    #[test]
    fn def1_examples() {
        let t = geometric(30, |i| 1u128 << i, |i| 1.0 - 1.0 / i as f64);
        let r = def1_rate(&t).unwrap();
        assert_eq!(r.rate, Some(1.0));
        assert!(r.fidelity_deficit.vanishes);

        let t = geometric(30, |i| 1u128 << i, |_| 0.9);
        assert_eq!(def1_rate(&t).unwrap().rate, None);

        for len in [30, 31] {
            let t = geometric(len, |i| 1u128 << (i / 2), |_| 1.0);
            assert_abs_diff_eq!(def1_rate(&t).unwrap().rate.unwrap(), 0.5, epsilon = 1e-15);
        }

        assert!(matches!(def1_rate(&two_branch()), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn def1prime_examples() {
        let t = |ks: &[u128]| {
            ProtocolTrace::new(ks.iter().enumerate().map(|(i, &k)| TraceStep::single(i as u64 + 1, k, 0.9)).collect())
                .unwrap()
        };
        assert!(def1prime_check(&t(&[2, 4, 8])));
        assert!(!def1prime_check(&t(&[2, 6, 8])));
        assert!(def1prime_check(&ProtocolTrace::default()));
    }

    #[test]
    fn def2prime_examples() {
        let r = def2prime_evaluate(&two_branch());
        assert_abs_diff_eq!(r.rate, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.residual, 0.005, epsilon = 1e-15);
        assert!(!r.condition);

        let t = geometric(10, |i| 1u128 << i, |_| 1.0);
        let r = def2prime_evaluate(&t);
        assert_eq!(r.residual, 0.0);
        assert!(r.condition);

        let t = ProtocolTrace::new((1..=5).map(|i| TraceStep::single(i, 1, 1.0)).collect()).unwrap();
        let r = def2prime_evaluate(&t);
        assert_eq!((r.rate, r.residual), (0.0, 0.0));
    }

    #[test]
    fn def2_examples() {
        let t = ProtocolTrace::new(vec![TraceStep::single(4, 8, 1.0)]).unwrap();
        let r = def2_evaluate(&t).unwrap();
        assert_abs_diff_eq!(r.interval[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(r.interval[1], 0.75, epsilon = 1e-15);

        let t = ProtocolTrace::new(vec![TraceStep::single(10, 2, 0.9)]).unwrap();
        let r = def2_evaluate(&t).unwrap();
        assert_abs_diff_eq!(r.interval[0], 0.04310044064107188, epsilon = 1e-14);
        assert_abs_diff_eq!(r.interval[1], 0.08, epsilon = 1e-14);

        let t = ProtocolTrace::new(vec![TraceStep::single(3, 1, 1.0)]).unwrap();
        assert_eq!(def2_evaluate(&t).unwrap().interval, [0.0, 0.0]);
    }

    #[test]
    fn inf_fidelity_examples() {
        let step = |fs: &[f64]| TraceStep {
            n: 1,
            branches: fs.iter().map(|&f| BranchOutcome::new(1.0 / fs.len() as f64, 4, f)).collect(),
        };
        assert_eq!(step_inf_fidelity(&step(&[0.99, 1.0])), 0.99);
        assert_eq!(step_inf_fidelity(&step(&[1.0, 1.0])), 1.0);
        assert_eq!(step_inf_fidelity(&two_branch().steps[0]), 0.99);
        let only_failure = TraceStep { n: 1, branches: vec![BranchOutcome::failure(1.0)] };
        assert_eq!(step_inf_fidelity(&only_failure), 1.0);
        let unreachable =
            TraceStep { n: 1, branches: vec![BranchOutcome::new(0.0, 4, 0.1), BranchOutcome::new(1.0, 4, 0.95)] };
        assert_eq!(step_inf_fidelity(&unreachable), 0.95);
    }

    #[test]
    fn trend_judgement() {
        assert!(vanishing_trend(&[0.5, 0.25, 0.125]).vanishes);
        assert!(!vanishing_trend(&[0.1, 0.1, 0.1]).vanishes);
        assert!(!vanishing_trend(&[0.3, 0.1, 0.2]).vanishes);
        assert!(vanishing_trend(&[0.3, 0.2, 0.0]).vanishes);
        assert!(!vanishing_trend(&[0.005]).vanishes);
        assert!(vanishing_trend(&[]).vanishes);
    }

    #[test]
    fn report_on_measuring_trace() {
        let r = rate_report(&two_branch()).unwrap();
        assert_eq!(r.def1_rate, None);
        assert_eq!(r.conditions.def1_fidelity, None);
        assert_abs_diff_eq!(r.def2prime_rate, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.def2prime_residual, 0.005, epsilon = 1e-15);
        assert!(r.def2_interval[0] <= r.def2_interval[1]);
        assert!(rate_report(&ProtocolTrace::default()).is_err());
    }
}
