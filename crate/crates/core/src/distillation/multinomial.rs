//! Tail probabilities of multinomial branch counts.

use statrs::function::factorial::ln_factorial;

use crate::exec::Exec;

fn ln_factorials(k: u64) -> Vec<f64> {
    (0..=k).map(ln_factorial).collect()
}

/// `Bin(c; r, q)` for `c = 0..=r`.
fn binomial_row(r: u64, q: f64, lnf: &[f64]) -> Vec<f64> {
    let r_us = r as usize;
    if q <= 0.0 {
        let mut row = vec![0.0; r_us + 1];
        row[0] = 1.0;
        return row;
    }
    if q >= 1.0 {
        let mut row = vec![0.0; r_us + 1];
        row[r_us] = 1.0;
        return row;
    }
    let (lq, lnq) = (q.ln(), (-q).ln_1p());
    (0..=r_us).map(|c| (lnf[r_us] - lnf[c] - lnf[r_us - c] + c as f64 * lq + (r_us - c) as f64 * lnq).exp()).collect()
}

/// Exact probability that some count `cⱼ` of a multinomial `(k; p)` sample
/// falls below `t[j]`.
///
/// Counts are drawn one branch at a time as conditional binomials, so the
/// result is a sum of positive terms and keeps full relative precision for
/// tiny tails. Cost is `O(m k²)` for `m` branches.
pub fn shortfall_probability(k: u64, p: &[f64], t: &[u64], exec: Exec) -> f64 {
    assert_eq!(p.len(), t.len(), "one threshold per branch");
    let m = p.len();
    if m == 0 {
        return 0.0;
    }
    let total: f64 = p.iter().sum();
    let p: Vec<f64> = p.iter().map(|x| x / total).collect();
    let mut suffix = vec![0.0; m + 1];
    for j in (0..m).rev() {
        suffix[j] = suffix[j + 1] + p[j];
    }
    let lnf = ln_factorials(k);
    // g[r]: probability of a shortfall among branches j.. given r draws left
    let mut g: Vec<f64> = (0..=k).map(|r| if r < t[m - 1] { 1.0 } else { 0.0 }).collect();
    for j in (0..m - 1).rev() {
        let q = if suffix[j] > 0.0 { (p[j] / suffix[j]).min(1.0) } else { 0.0 };
        let tj = t[j];
        let next = &g;
        let level = |r: u64| {
            let row = binomial_row(r, q, &lnf);
            row.iter()
                .enumerate()
                .map(|(c, w)| if (c as u64) < tj { *w } else { w * next[(r - c as u64) as usize] })
                .sum::<f64>()
                .min(1.0)
        };
        g = if j == 0 {
            let mut top = vec![0.0; k as usize + 1];
            top[k as usize] = level(k);
            top
        } else {
            exec.map(k as usize + 1, |r| level(r as u64))
        };
    }
    g[k as usize]
}

/// Union of Hoeffding bounds `Σⱼ exp(−2k εⱼ²)` with `εⱼ = pⱼ − (tⱼ − 1)/k`,
/// capped at 1.
pub fn hoeffding_shortfall_bound(k: u64, p: &[f64], t: &[u64]) -> f64 {
    let kf = k as f64;
    p.iter()
        .zip(t)
        .map(|(&pj, &tj)| {
            if tj == 0 {
                return 0.0;
            }
            let eps = pj - (tj as f64 - 1.0) / kf;
            if eps <= 0.0 {
                1.0
            } else {
                (-2.0 * kf * eps * eps).exp()
            }
        })
        .sum::<f64>()
        .min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_branch_values() {
        let cases = [(10, 4, 0.34375), (100, 45, 0.27125), (1000, 450, 0.00139174)];
        for (k, t, want) in cases {
            let got = shortfall_probability(k, &[0.5, 0.5], &[t, t], Exec::Sequential);
            assert_relative_eq!(got, want, max_relative = 1e-4);
        }
        let tiny = shortfall_probability(1000, &[0.5, 0.5], &[250, 250], Exec::Sequential);
        assert_relative_eq!(tiny, 4.47e-59, max_relative = 1e-2);
    }

    #[test]
    fn zero_thresholds_never_fail() {
        assert_eq!(shortfall_probability(50, &[0.2, 0.3, 0.5], &[0, 0, 0], Exec::Sequential), 0.0);
        assert_eq!(hoeffding_shortfall_bound(50, &[0.2, 0.8], &[0, 0]), 0.0);
    }

    #[test]
    fn hoeffding_dominates_exact() {
        let p = [0.3, 0.7];
        for k in [20u64, 200, 2000] {
            let t: Vec<u64> = p.iter().map(|x| (0.8 * x * k as f64).floor() as u64).collect();
            let exact = shortfall_probability(k, &p, &t, Exec::Sequential);
            assert!(exact <= hoeffding_shortfall_bound(k, &p, &t) + 1e-15);
        }
    }
}
