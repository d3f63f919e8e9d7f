use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub};
use serde::{Deserialize, Serialize};

use crate::bounds::log2_dim;
use crate::error::{Error, Result};
use crate::exec::Exec;

use super::multinomial::{hoeffding_shortfall_bound, shortfall_probability};
use super::trace::{ProtocolTrace, TraceStep, NULL_PROBABILITY};

/// Above this many tensor copies the failure probability is bounded rather
/// than computed exactly.
pub const EXACT_TAIL_LIMIT: u64 = 2000;
/// Added before flooring `p'·k`, so that products such as `0.45·100` that
/// round just below an integer are not pushed down by one.
const FLOOR_SLACK: f64 = 1e-9;

/// How the compiler chooses `p'ᵢⱼ < pᵢⱼ` and `R'ᵢⱼ < (2Fᵢⱼ − 1)·log₂Kᵢⱼ − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Margins {
    /// `p' = (1 − p_slack)·p` and, where the hashing margin is positive,
    /// `R' = (1 − rate_slack)·margin`. Other branches are not hashed.
    Relative { p_slack: f64, rate_slack: f64 },
    /// Per step and branch; a null rate leaves the branch unhashed.
    Explicit { p_prime: Vec<Vec<f64>>, r_prime: Vec<Vec<Option<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompilerConfig {
    pub margins: Margins,
    /// Number of copies of each step's protocol run in parallel.
    pub k: u64,
    #[serde(default = "default_exact_limit")]
    pub exact_limit: u64,
}

fn default_exact_limit() -> u64 {
    EXACT_TAIL_LIMIT
}

impl CompilerConfig {
    pub fn relative(p_slack: f64, rate_slack: f64, k: u64) -> Self {
        CompilerConfig { margins: Margins::Relative { p_slack, rate_slack }, k, exact_limit: EXACT_TAIL_LIMIT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    Exact,
    Hoeffding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledBranch {
    pub p: f64,
    #[serde(rename = "K")]
    pub k: u128,
    #[serde(rename = "F")]
    pub f: f64,
    pub p_prime: f64,
    pub r_prime: Option<f64>,
    /// `(2F − 1)·log₂K − 1`
    pub hashing_margin: f64,
    /// `⌊p'·k⌋`, the count this branch must reach.
    pub min_count: u64,
    /// `log₂ max(1, ⌊2^{R'p'k}⌋)`
    pub log2_factor: f64,
}

/// One step of the compiled non-measuring protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledStep {
    pub n: u64,
    pub k: u64,
    /// Input copies consumed, `n·k`.
    pub copies: u128,
    pub branches: Vec<CompiledBranch>,
    pub log2_output_dim: f64,
    /// The output dimension when every factor is exact and the product fits.
    pub output_dim: Option<u128>,
    pub achieved_rate: f64,
    /// `(1/n) Σⱼ max(R'ⱼ, 0)·p'ⱼ`, the limit of `achieved_rate`.
    pub target_rate: f64,
    pub rate_bound: f64,
    /// `rate_bound` as a reduced fraction, when all inputs are representable.
    pub rate_bound_exact: Option<[i128; 2]>,
    pub failure_prob: f64,
    pub failure_method: TailMethod,
    /// Fidelity of the random state produced on failure, as `log₂`.
    pub log2_failure_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compilation {
    pub k: u64,
    pub steps: Vec<CompiledStep>,
}

/// `(1/n) Σⱼ pⱼ (2Fⱼ − 1) log₂Kⱼ − 1/n`
pub fn rate_bound(step: &TraceStep) -> f64 {
    let n = step.n as f64;
    step.branches.iter().map(|b| b.p * (2.0 * b.f - 1.0) * log2_dim(b.k)).sum::<f64>() / n - 1.0 / n
}

fn to_ratio(x: f64) -> Option<Ratio<i128>> {
    let r = Ratio::<i64>::approximate_float(x)?;
    Some(Ratio::new(*r.numer() as i128, *r.denom() as i128))
}

/// [`rate_bound`] in rational arithmetic: probabilities and fidelities are
/// read as the simplest fractions within `f64` resolution. `None` unless every
/// `K` is a power of two and the result fits in `i128`.
pub fn rate_bound_exact(step: &TraceStep) -> Option<Ratio<i128>> {
    let one = Ratio::from_integer(1i128);
    let two = Ratio::from_integer(2i128);
    let mut sum = Ratio::from_integer(0i128);
    for b in &step.branches {
        if !b.k.is_power_of_two() {
            return None;
        }
        let log_k = Ratio::from_integer(b.k.trailing_zeros() as i128);
        let term = to_ratio(b.p)?.checked_mul(&two.checked_mul(&to_ratio(b.f)?)?.checked_sub(&one)?)?;
        sum = sum.checked_add(&term.checked_mul(&log_k)?)?;
    }
    let n = Ratio::from_integer(step.n as i128);
    sum.checked_sub(&one)?.checked_div(&n)
}

struct BranchMargin {
    p_prime: f64,
    r_prime: Option<f64>,
}

fn margins_for(trace: &ProtocolTrace, margins: &Margins) -> Result<Vec<Vec<BranchMargin>>> {
    let hashing = |f: f64, k: u128| (2.0 * f - 1.0) * log2_dim(k) - 1.0;
    match margins {
        Margins::Relative { p_slack, rate_slack } => {
            if !(*p_slack > 0.0 && *p_slack < 1.0) {
                return Err(Error::Config(format!("p_slack must lie in (0, 1), got {p_slack}")));
            }
            if !(*rate_slack > 0.0 && *rate_slack < 1.0) {
                return Err(Error::Config(format!("rate_slack must lie in (0, 1), got {rate_slack}")));
            }
            Ok(trace
                .steps
                .iter()
                .map(|s| {
                    s.branches
                        .iter()
                        .map(|b| {
                            let h = hashing(b.f, b.k);
                            BranchMargin {
                                p_prime: (1.0 - p_slack) * b.p,
                                r_prime: (h > 0.0).then(|| (1.0 - rate_slack) * h),
                            }
                        })
                        .collect()
                })
                .collect())
        }
        Margins::Explicit { p_prime, r_prime } => {
            if p_prime.len() != trace.len() || r_prime.len() != trace.len() {
                return Err(Error::Config(format!(
                    "margins cover {}/{} steps, trace has {}",
                    p_prime.len(),
                    r_prime.len(),
                    trace.len()
                )));
            }
            let mut out = Vec::with_capacity(trace.len());
            for (i, s) in trace.steps.iter().enumerate() {
                if p_prime[i].len() != s.branches.len() || r_prime[i].len() != s.branches.len() {
                    return Err(Error::Config(format!("steps[{i}]: one margin per branch required")));
                }
                let mut row = Vec::with_capacity(s.branches.len());
                for (j, b) in s.branches.iter().enumerate() {
                    let (pp, rp) = (p_prime[i][j], r_prime[i][j]);
                    let live = b.p >= NULL_PROBABILITY;
                    if live && !(pp > 0.0 && pp < b.p) {
                        return Err(Error::Config(format!(
                            "steps[{i}].branches[{j}]: need 0 < p' < p = {}, got {pp}",
                            b.p
                        )));
                    }
                    if let Some(r) = rp {
                        let h = hashing(b.f, b.k);
                        if r.is_nan() || r >= h {
                            return Err(Error::Config(format!(
                                "steps[{i}].branches[{j}]: need R' < (2F-1)log2K - 1 = {h}, got {r}"
                            )));
                        }
                    }
                    row.push(BranchMargin { p_prime: if live { pp } else { 0.0 }, r_prime: rp });
                }
                out.push(row);
            }
            Ok(out)
        }
    }
}

/// `log₂ max(1, ⌊2^x⌋)` and the integer itself when it is exactly known.
fn floor_power(x: f64) -> (f64, Option<u128>) {
    if x < 1.0 {
        (0.0, Some(1))
    } else if x < 53.0 {
        let v = x.exp2().floor();
        (v.log2(), Some(v as u128))
    } else {
        (x, None)
    }
}

/// Runs `k` copies of each step's protocol side by side, hashes the outputs
/// of each branch at rate `R'` once it occurs at least `⌊p'k⌋` times, and
/// reports the resulting non-measuring protocol.
pub fn theorem3_compile(trace: &ProtocolTrace, cfg: &CompilerConfig) -> Result<Compilation> {
    theorem3_compile_with(trace, cfg, Exec::default())
}

pub fn theorem3_compile_with(trace: &ProtocolTrace, cfg: &CompilerConfig, exec: Exec) -> Result<Compilation> {
    trace.validate()?;
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if let Some((i, b)) = trace
        .steps
        .iter()
        .enumerate()
        .find_map(|(i, s)| s.branches.iter().find(|b| !b.k.is_power_of_two()).map(|b| (i, b)))
    {
        return Err(Error::NotApplicable(format!(
            "steps[{i}] has K={} which is not a power of two; normalize the trace first",
            b.k
        )));
    }
    let margins = margins_for(trace, &cfg.margins)?;
    let k = cfg.k;
    let kf = k as f64;
    let steps = trace
        .steps
        .iter()
        .zip(&margins)
        .map(|(s, m)| {
            let mut branches = Vec::with_capacity(s.branches.len());
            let mut log2_dim_total = 0.0;
            let mut dim: Option<u128> = Some(1);
            let mut target = 0.0;
            for (b, bm) in s.branches.iter().zip(m) {
                let live = b.p >= NULL_PROBABILITY;
                let x = bm.r_prime.map_or(0.0, |r| r * bm.p_prime * kf);
                let (lf, exact) = floor_power(x);
                log2_dim_total += lf;
                dim = match (dim, exact) {
                    (Some(d), Some(e)) => d.checked_mul(e),
                    _ => None,
                };
                target += bm.r_prime.map_or(0.0, |r| r.max(0.0)) * bm.p_prime;
                branches.push(CompiledBranch {
                    p: b.p,
                    k: b.k,
                    f: b.f,
                    p_prime: bm.p_prime,
                    r_prime: bm.r_prime,
                    hashing_margin: (2.0 * b.f - 1.0) * log2_dim(b.k) - 1.0,
                    min_count: if live { (bm.p_prime * kf + FLOOR_SLACK).floor() as u64 } else { 0 },
                    log2_factor: lf,
                });
            }
            let live: Vec<&CompiledBranch> = branches.iter().filter(|b| b.p >= NULL_PROBABILITY).collect();
            let ps: Vec<f64> = live.iter().map(|b| b.p).collect();
            let ts: Vec<u64> = live.iter().map(|b| b.min_count).collect();
            let (failure_prob, failure_method) = if k <= cfg.exact_limit {
                (shortfall_probability(k, &ps, &ts, exec), TailMethod::Exact)
            } else {
                (hoeffding_shortfall_bound(k, &ps, &ts), TailMethod::Hoeffding)
            };
            let n = s.n as f64;
            CompiledStep {
                n: s.n,
                k,
                copies: s.n as u128 * k as u128,
                log2_output_dim: log2_dim_total,
                output_dim: dim,
                achieved_rate: log2_dim_total / (n * kf),
                target_rate: target / n,
                rate_bound: rate_bound(s),
                rate_bound_exact: rate_bound_exact(s).map(|r| [*r.numer(), *r.denom()]),
                failure_prob,
                failure_method,
                log2_failure_fidelity: -2.0 * log2_dim_total,
                branches,
            }
        })
        .collect();
    Ok(Compilation { k, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distillation::trace::BranchOutcome;
    use approx::assert_abs_diff_eq;

    fn fixture() -> ProtocolTrace {
        ProtocolTrace::new(vec![TraceStep {
            n: 10,
            branches: vec![BranchOutcome::new(0.5, 1024, 0.99), BranchOutcome::failure(0.5)],
        }])
        .unwrap()
    }

    #[test]
    fn rate_bound_of_fixture() {
        let s = &fixture().steps[0];
        assert_abs_diff_eq!(rate_bound(s), 0.39, epsilon = 1e-12);
        assert_eq!(rate_bound_exact(s), Some(Ratio::new(39, 100)));
    }

    #[test]
    fn exact_rate_bound_gives_up_on_overflow() {
        let b = |p, f| BranchOutcome { p, k: 32, f };
        let s = TraceStep {
            n: 13,
            branches: vec![b(0.17578680846823583, 0.7617108059056832), b(0.8242131915317641, 0.48933640870957673)],
        };
        assert_eq!(rate_bound_exact(&s), None);
        assert!(rate_bound(&s).is_finite());
    }

    #[test]
    fn half_margins_at_thousand_copies() {
        let c = theorem3_compile(&fixture(), &CompilerConfig::relative(0.5, 0.5, 1000)).unwrap();
        let s = &c.steps[0];
        assert_eq!(s.failure_method, TailMethod::Exact);
        assert!(s.failure_prob < 1e-10);
        // R' = 4.4, p' = 0.25, so log₂K' = 1100 exactly
        assert_abs_diff_eq!(s.target_rate, 0.11, epsilon = 1e-12);
        assert_abs_diff_eq!(s.achieved_rate, s.target_rate, epsilon = 1e-3);
        assert!(s.achieved_rate <= s.rate_bound);
    }

    #[test]
    fn degenerate_branch_gives_rate_zero() {
        let t = ProtocolTrace::new(vec![TraceStep::single(1, 2, 1.0)]).unwrap();
        let c = theorem3_compile(&t, &CompilerConfig::relative(0.1, 0.1, 100)).unwrap();
        assert_eq!(c.steps[0].achieved_rate, 0.0);
        assert_eq!(c.steps[0].output_dim, Some(1));
        let bad = CompilerConfig {
            margins: Margins::Explicit { p_prime: vec![vec![0.9]], r_prime: vec![vec![Some(0.0)]] },
            k: 100,
            exact_limit: EXACT_TAIL_LIMIT,
        };
        assert!(matches!(theorem3_compile(&t, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn margin_violations() {
        let t = fixture();
        let cfg = |pp: Vec<f64>, rp: Vec<Option<f64>>| CompilerConfig {
            margins: Margins::Explicit { p_prime: vec![pp], r_prime: vec![rp] },
            k: 10,
            exact_limit: EXACT_TAIL_LIMIT,
        };
        assert!(theorem3_compile(&t, &cfg(vec![0.4, 0.4], vec![Some(8.0), None])).is_ok());
        assert!(theorem3_compile(&t, &cfg(vec![0.5, 0.4], vec![Some(8.0), None])).is_err());
        assert!(theorem3_compile(&t, &cfg(vec![0.4, 0.4], vec![Some(8.8), None])).is_err());
        assert!(theorem3_compile(&t, &cfg(vec![0.4], vec![Some(8.0)])).is_err());
        assert!(theorem3_compile(&t, &CompilerConfig::relative(0.0, 0.5, 10)).is_err());
    }

    #[test]
    fn rejects_non_power_of_two() {
        let t = ProtocolTrace::new(vec![TraceStep::single(1, 6, 1.0)]).unwrap();
        assert!(matches!(theorem3_compile(&t, &CompilerConfig::relative(0.1, 0.1, 10)), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn large_k_uses_tail_bound() {
        let c = theorem3_compile(&fixture(), &CompilerConfig::relative(0.1, 0.01, 10_000)).unwrap();
        let s = &c.steps[0];
        assert_eq!(s.failure_method, TailMethod::Hoeffding);
        assert!(s.failure_prob < 1e-10);
        assert_abs_diff_eq!(s.achieved_rate, s.target_rate, epsilon = 1e-3);
    }
}
