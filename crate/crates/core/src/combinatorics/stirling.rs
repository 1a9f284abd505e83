//! Unsigned Stirling numbers of the first kind.
//!
//! `[n k]` counts permutations of `n` elements with exactly `k` cycles and
//! obeys `[n+1, k] = n·[n, k] + [n, k−1]` with `[0, 0] = 1`. The table is
//! triangular, grown on demand, and shared process-wide behind a lock so
//! repeat queries during CRF evaluation are O(1). The log-domain rows are
//! kept alongside an exact `u64` table; the exact table stops at n = 20,
//! the last row whose entries all fit in 64 bits.

use once_cell::sync::Lazy;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp_pair, Real};

/// Largest `n` for which every `[n k]` fits in a `u64` (row sums are `n!`).
pub const STIRLING_EXACT_MAX_N: usize = 20;

struct StirlingTable {
    /// `log_rows[n][k] = ln [n k]`, with `-inf` for structural zeros.
    log_rows: Vec<Vec<f64>>,
    /// Exact rows for `n ≤ STIRLING_EXACT_MAX_N`.
    exact_rows: Vec<Vec<u64>>,
}

impl StirlingTable {
    fn new() -> Self {
        let mut t = StirlingTable {
            log_rows: vec![vec![0.0]],
            exact_rows: vec![vec![1]],
        };
        t.grow_to(STIRLING_EXACT_MAX_N);
        t
    }

    fn grow_to(&mut self, n: usize) {
        while self.log_rows.len() <= n {
            let m = self.log_rows.len(); // building row m from row m-1
            let prev = &self.log_rows[m - 1];
            let mut row = vec![f64::NEG_INFINITY; m + 1];
            let ln_m_minus_1 = if m >= 2 {
                ((m - 1) as f64).ln()
            } else {
                f64::NEG_INFINITY
            };
            for k in 1..=m {
                let carry = if k <= m - 1 {
                    ln_m_minus_1 + prev[k]
                } else {
                    f64::NEG_INFINITY
                };
                row[k] = log_sum_exp_pair(carry, prev[k - 1]);
            }
            self.log_rows.push(row);

            if m <= STIRLING_EXACT_MAX_N {
                let prev = &self.exact_rows[m - 1];
                let mut row = vec![0u64; m + 1];
                for k in 1..=m {
                    let carry = if k <= m - 1 {
                        (m as u64 - 1)
                            .checked_mul(prev[k])
                            .expect("exact Stirling row within u64 range")
                    } else {
                        0
                    };
                    row[k] = carry
                        .checked_add(prev[k - 1])
                        .expect("exact Stirling row within u64 range");
                }
                self.exact_rows.push(row);
            }
        }
    }
}

static TABLE: Lazy<RwLock<StirlingTable>> = Lazy::new(|| RwLock::new(StirlingTable::new()));

fn check_args(n: usize, k: usize) -> Result<()> {
    if k > n {
        return Err(Error::domain(format!(
            "Stirling number [n k] requires k <= n, got n = {n}, k = {k}"
        )));
    }
    Ok(())
}

/// `ln [n k]`; structural zeros (`k = 0 < n`) come back as `-inf`.
pub fn log_stirling1u<R: Real>(n: usize, k: usize) -> Result<R> {
    check_args(n, k)?;
    {
        let table = TABLE.read().expect("stirling table lock");
        if n < table.log_rows.len() {
            return Ok(R::of(table.log_rows[n][k]));
        }
    }
    let mut table = TABLE.write().expect("stirling table lock");
    table.grow_to(n);
    Ok(R::of(table.log_rows[n][k]))
}

/// Exact `[n k]` for `n ≤ 20`.
pub fn stirling1u_exact(n: usize, k: usize) -> Result<u64> {
    check_args(n, k)?;
    if n > STIRLING_EXACT_MAX_N {
        return Err(Error::domain(format!(
            "exact Stirling numbers overflow u64 beyond n = {STIRLING_EXACT_MAX_N}, got n = {n}"
        )));
    }
    let table = TABLE.read().expect("stirling table lock");
    Ok(table.exact_rows[n][k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::log_rising_factorial;
    use crate::scalar::log_sum_exp;

    #[test]
    fn base_cases_and_frozen_values() {
        // Enumeration oracle output frozen below in `matches_cycle_counts`.
        assert_eq!(stirling1u_exact(0, 0).unwrap(), 1);
        assert_eq!(stirling1u_exact(3, 2).unwrap(), 3);
        assert_eq!(stirling1u_exact(4, 2).unwrap(), 11);
        for n in 1..=20 {
            assert_eq!(stirling1u_exact(n, n).unwrap(), 1, "identity permutation");
            assert_eq!(stirling1u_exact(n, 0).unwrap(), 0);
        }
        assert_eq!(log_stirling1u::<f64>(0, 0).unwrap(), 0.0);
        assert_eq!(log_stirling1u::<f64>(5, 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_k_above_n() {
        assert!(log_stirling1u::<f64>(3, 4).is_err());
        assert!(stirling1u_exact(3, 4).is_err());
    }

    #[test]
    fn exact_variant_caps_at_20() {
        assert!(stirling1u_exact(20, 10).is_ok());
        assert!(stirling1u_exact(21, 10).is_err());
        // The log table has no such cap.
        assert!(log_stirling1u::<f64>(64, 10).is_ok());
    }

    #[test]
    fn log_table_agrees_with_exact_table() {
        for n in 0..=20usize {
            for k in 0..=n {
                let exact = stirling1u_exact(n, k).unwrap();
                let log = log_stirling1u::<f64>(n, k).unwrap();
                if exact == 0 {
                    assert_eq!(log, f64::NEG_INFINITY);
                } else {
                    let want = (exact as f64).ln();
                    assert!(
                        (log - want).abs() <= 1e-11 * want.abs().max(1.0),
                        "[{n} {k}]"
                    );
                }
            }
        }
    }

    /// Count permutations of n elements with k cycles by brute force.
    fn cycle_counts(n: usize) -> Vec<u64> {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for rest in permutations(n - 1) {
                for pos in 0..=rest.len() {
                    let mut p = rest.clone();
                    p.insert(pos, n - 1);
                    out.push(p);
                }
            }
            out
        }
        let mut counts = vec![0u64; n + 1];
        for perm in permutations(n) {
            let mut seen = vec![false; n];
            let mut cycles = 0;
            for start in 0..n {
                if !seen[start] {
                    cycles += 1;
                    let mut i = start;
                    while !seen[i] {
                        seen[i] = true;
                        i = perm[i];
                    }
                }
            }
            counts[cycles] += 1;
        }
        counts
    }

    #[test]
    fn matches_cycle_counts_up_to_8() {
        for n in 1..=8usize {
            let counts = cycle_counts(n);
            for k in 0..=n {
                assert_eq!(
                    stirling1u_exact(n, k).unwrap(),
                    counts[k],
                    "[{n} {k}] vs permutation-cycle enumeration"
                );
            }
        }
    }

    #[test]
    fn rising_factorial_marginalization_identity() {
        // Σ_k [n k] α^k = α^(n) — the identity behind the CRF count marginal.
        for &alpha in &[0.5f64, 1.0, 3.0] {
            for n in 0..=12usize {
                let terms: Vec<f64> = (0..=n)
                    .map(|k| {
                        log_stirling1u::<f64>(n, k).unwrap() + (k as f64) * alpha.ln()
                    })
                    .collect();
                let lhs = log_sum_exp(&terms);
                let rhs = log_rising_factorial(alpha, n).unwrap();
                if n == 0 {
                    assert!(lhs.abs() < 1e-12 && rhs.abs() < 1e-12);
                } else {
                    assert!(
                        (lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0),
                        "n = {n}, alpha = {alpha}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }
}
