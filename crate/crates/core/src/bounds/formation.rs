//! Numerical upper estimate of the entanglement of formation.
//!
//! Every pure-state ensemble of `ρ = W W†` (with `W = [√λ_k e_k]`) is
//! `ψ̃ᵢ = Σ_k U_ik W_k` for an isometry `U` of size `m × r`. The search runs
//! Riemannian gradient descent over such isometries with a QR retraction and
//! an Armijo line search. A first phase minimises the average linear entropy
//! of the reduced states, which is smooth at product states; a second phase
//! polishes the von Neumann entropy itself. The value reported is always the
//! von Neumann average of an explicit ensemble, so it is a genuine upper bound.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{eigenvalues_hermitian, eigh, BipartiteLabel, CMatrix, CVector, DensityOperator, C64};
use crate::random::{haar_unitary, substream};

use super::von_neumann_entropy;

/// Largest total dimension accepted by the search.
pub const MAX_EF_DIMENSION: usize = 16;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const RANK_CUTOFF: f64 = 1e-14;

/// Search configuration.
#[derive(Debug, Clone, Copy)]
pub struct EfSearch {
    /// Gradient iterations per restart, split evenly between the two phases.
    pub iterations: usize,
    pub restarts: usize,
    /// Ensemble size `m`; defaults to `max(rank, min(2D, D² + 1))`.
    pub ensemble_size: Option<usize>,
    pub exec: Exec,
}

impl EfSearch {
    pub fn new(iterations: usize) -> Self {
        EfSearch { iterations, restarts: 4, ensemble_size: None, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfEstimate {
    /// Best average entanglement found, in bits.
    pub value: f64,
    /// Value reached by each restart.
    pub per_restart: Vec<f64>,
    pub ensemble_size: usize,
}

/// Upper estimate of `E_f(ρ)` with `budget` iterations per restart and the
/// default four restarts. Deterministic for a given seed.
pub fn ef_numeric_estimate(rho: &DensityOperator, budget: usize, seed: u64) -> Result<f64> {
    Ok(ef_numeric_estimate_with(rho, &EfSearch::new(budget), seed)?.value)
}

pub fn ef_numeric_estimate_with(rho: &DensityOperator, search: &EfSearch, seed: u64) -> Result<EfEstimate> {
    let label = rho.bipartite()?;
    let d = label.total();
    if d > MAX_EF_DIMENSION {
        return Err(Error::Dimension(format!(
            "entanglement-of-formation search supports total dimension <= {MAX_EF_DIMENSION}, got {d}"
        )));
    }
    if search.restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }
    let (values, vectors) = eigh(rho.matrix())?;
    let cols: Vec<CVector> = values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > RANK_CUTOFF)
        .map(|(k, &l)| vectors.column(k).scale(l.sqrt()))
        .collect();
    let r = cols.len();
    if r == 0 {
        return Err(Error::InvalidState("zero operator".into()));
    }
    let w = CMatrix::from_columns(&cols);
    let m = search.ensemble_size.unwrap_or_else(|| (2 * d).min(d * d + 1)).max(r);
    let problem = Problem { label, w };

    let per_restart = search.exec.map(search.restarts, |i| {
        let start = if i == 0 {
            CMatrix::identity(m, r)
        } else {
            let u = haar_unitary(&mut substream(seed, i as u64), m);
            u.columns(0, r).into_owned()
        };
        problem.descend(start, search.iterations)
    });
    let value = per_restart.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EfEstimate { value, per_restart, ensemble_size: m })
}

/// Entropy of entanglement of a (not necessarily normalised) pure state.
pub fn pure_state_entanglement(psi: &CVector, label: BipartiteLabel) -> f64 {
    let m = reshape(psi.as_slice(), label);
    let sigma = &m * m.adjoint();
    let p = sigma.trace().re;
    if p <= 0.0 {
        return 0.0;
    }
    let ev = eigenvalues_hermitian(&sigma.unscale(p)).expect("reduced state is Hermitian");
    von_neumann_entropy(&ev)
}

/// `Σᵢ pᵢ E(ψᵢ)` for unnormalised ensemble members `ψ̃ᵢ` with `pᵢ = ‖ψ̃ᵢ‖²`.
pub fn ensemble_entanglement(members: &[CVector], label: BipartiteLabel) -> f64 {
    members.iter().map(|v| v.norm_squared() * pure_state_entanglement(v, label)).sum()
}

fn reshape(v: &[C64], label: BipartiteLabel) -> CMatrix {
    CMatrix::from_row_slice(label.dim_a, label.dim_b, v)
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Linear,
    Entropy,
}

struct Problem {
    label: BipartiteLabel,
    /// `D × r`, columns `√λ_k e_k`.
    w: CMatrix,
}

impl Problem {
    fn members(&self, u: &CMatrix) -> CMatrix {
        // row i is ψ̃ᵢᵀ
        u * self.w.transpose()
    }

    /// Cost and its gradient with respect to `conj(U)`.
    fn cost_grad(&self, u: &CMatrix, phase: Phase, want_grad: bool) -> (f64, CMatrix) {
        let psi = self.members(u);
        let (m, d) = psi.shape();
        let mut z = CMatrix::zeros(m, d);
        let mut cost = 0.0;
        for i in 0..m {
            let row: Vec<C64> = psi.row(i).iter().copied().collect();
            let mi = reshape(&row, self.label);
            let sigma = &mi * mi.adjoint();
            let p = sigma.trace().re;
            if p <= 1e-300 {
                continue;
            }
            let g = match phase {
                Phase::Linear => {
                    let purity = (&sigma * &sigma).trace().re;
                    cost += p - purity / p;
                    if !want_grad {
                        continue;
                    }
                    let n = sigma.nrows();
                    CMatrix::identity(n, n).scale(1.0 + purity / (p * p)) - sigma.scale(2.0 / p)
                }
                Phase::Entropy => {
                    let (ev, v) = eigh(&sigma).expect("reduced state is Hermitian");
                    let terms: f64 = ev.iter().map(|&l| if l > 0.0 { l * l.ln() } else { 0.0 }).sum();
                    cost += (p * p.ln() - terms) / LN_2;
                    if !want_grad {
                        continue;
                    }
                    let logs: Vec<C64> =
                        ev.iter().map(|&l| C64::new(-(l.max(1e-300).ln() - p.ln()) / LN_2, 0.0)).collect();
                    &v * CMatrix::from_diagonal(&CVector::from_vec(logs)) * v.adjoint()
                }
            };
            let zi = g * mi;
            for a in 0..self.label.dim_a {
                for b in 0..self.label.dim_b {
                    z[(i, a * self.label.dim_b + b)] = zi[(a, b)];
                }
            }
        }
        let grad = if want_grad { z * self.w.conjugate() } else { CMatrix::zeros(0, 0) };
        (cost, grad)
    }

    fn cost(&self, u: &CMatrix, phase: Phase) -> f64 {
        self.cost_grad(u, phase, false).0
    }

    /// Two-phase descent from `u`; returns the best entropy cost seen.
    fn descend(&self, mut u: CMatrix, iterations: usize) -> f64 {
        let mut best = self.cost(&u, Phase::Entropy);
        let linear_iters = iterations / 2;
        for (phase, iters) in [(Phase::Linear, linear_iters), (Phase::Entropy, iterations - linear_iters)] {
            let mut step = 1.0;
            for _ in 0..iters {
                let (c0, g) = self.cost_grad(&u, phase, true);
                let herm = {
                    let x = u.adjoint() * &g;
                    (&x + x.adjoint()).scale(0.5)
                };
                let xi = &g - &u * herm;
                let gnorm2 = xi.norm_squared();
                if gnorm2 < 1e-30 {
                    break;
                }
                step *= 2.0;
                let mut accepted = None;
                while step > MIN_STEP {
                    let cand = retract(&(&u - xi.scale(step)));
                    let c1 = self.cost(&cand, phase);
                    if c1 <= c0 - ARMIJO * step * gnorm2 {
                        accepted = Some(cand);
                        break;
                    }
                    step *= 0.5;
                }
                match accepted {
                    Some(next) => u = next,
                    None => break,
                }
                if phase == Phase::Entropy {
                    best = best.min(self.cost(&u, Phase::Entropy));
                }
            }
            best = best.min(self.cost(&u, Phase::Entropy));
        }
        best.max(0.0)
    }
}

/// Orthonormalise the columns (QR with a positive diagonal in `R`).
fn retract(x: &CMatrix) -> CMatrix {
    let qr = x.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        if n > 0.0 {
            let phase = rjj / n;
            for i in 0..q.nrows() {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}
