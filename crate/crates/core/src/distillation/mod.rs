//! Rate accounting over protocol traces.
//!
//! A trace records, for growing input counts `n`, the outcome branches
//! `(p, K, F)` of a distillation protocol. From it this module evaluates the
//! rate definitions, reduces dimensions to powers of two, and compiles
//! measuring protocols into non-measuring ones by running many copies.

mod compile;
pub mod multinomial;
mod rates;
mod trace;
mod transform;

pub use compile::{
    rate_bound, rate_bound_exact, theorem3_compile, theorem3_compile_with, Compilation, CompiledBranch, CompiledStep,
    CompilerConfig, Margins, TailMethod, EXACT_TAIL_LIMIT,
};
pub use rates::{
    def1_rate, def1prime_check, def2_evaluate, def2prime_evaluate, inf_fidelity_check, limit_estimate, rate_report,
    step_ef_interval, step_inf_fidelity, step_rate, step_residual, vanishing_trend, Conditions, Def1Report,
    Def2PrimeReport, Def2Report, InfFidelityReport, RateReport, StepRates, Trend, LIMIT_WINDOW, TOL_MONOTONE,
    TOL_VANISHED,
};
pub use trace::{BranchOutcome, ProtocolTrace, TraceStep, NULL_PROBABILITY, TOL_PROBABILITY};
pub use transform::{
    discard_padding, discard_padding_at, normalize_branch, normalize_powers_of_two, power_of_two_below,
    theorem2_transform, PaddedStep, Theorem2Report, Theorem2Step,
};
