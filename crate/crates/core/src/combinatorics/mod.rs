//! Exact log-space evaluation of CRP and CRF partition probabilities.
//!
//! Two conventions coexist deliberately. [`crp_log_prob`] evaluates the
//! table-count probability with `c_ℓ!` factors, exactly as the franchise
//! construction composes it; [`crp_partition_log_prob`] evaluates the
//! normalized set-partition law, which carries `(c_ℓ−1)!` instead. Only the
//! latter sums to one over the set partitions of `{1..n}` — the enumeration
//! oracle in [`enumerate`] makes that checkable rather than folklore.
//!
//! Everything is computed in natural-log space; `Γ` ratios that would
//! overflow long before `n = 100` stay tame as rising-factorial log sums.

mod enumerate;
mod stirling;

pub use enumerate::{
    crf_seating_log_probs, enumerate_crp_outcomes, set_partitions, CrpOutcome,
    CRF_ENUMERATION_MAX_CUSTOMERS, CRP_ENUMERATION_MAX_N,
};
pub use stirling::{log_stirling1u, stirling1u_exact, STIRLING_EXACT_MAX_N};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{ln_factorial, log_rising_factorial};

/// Customers per table of a single restaurant, in table-creation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    counts: Vec<usize>,
}

impl TableCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("table counts must contain at least one table"));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("every table must seat at least one customer"));
        }
        Ok(TableCounts { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_tables(&self) -> usize {
        self.counts.len()
    }

    pub fn total_customers(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// CRF concentration pair: top-level `κ` and per-restaurant `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentrations<R> {
    kappa: R,
    alpha: R,
}

impl<R: Real> Concentrations<R> {
    pub fn new(kappa: R, alpha: R) -> Result<Self> {
        for (name, v) in [("kappa", kappa), ("alpha", alpha)] {
            if !(v > R::zero()) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "concentration {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(Concentrations { kappa, alpha })
    }

    pub fn kappa(&self) -> R {
        self.kappa
    }

    pub fn alpha(&self) -> R {
        self.alpha
    }

    pub fn to_log(&self) -> LogConcentrations<R> {
        LogConcentrations {
            log_kappa: self.kappa.ln(),
            log_alpha: self.alpha.ln(),
        }
    }
}

/// Concentrations given directly in log space.
///
/// The small-variance limits drive `κ = exp(−λ₁ β_s)` far below the smallest
/// positive float; supplying `ln κ` keeps the `(K−1) ln κ` term exact while
/// the `Γ(κ + ·)` factors, whose arguments stay ≥ 1, lose only O(κ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogConcentrations<R> {
    pub log_kappa: R,
    pub log_alpha: R,
}

/// A log-probability value plus a marker for whether the quantity is a
/// normalized probability (exponentials over an exhaustive event set sum
/// to one) or an as-printed unnormalized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProb<R> {
    value: R,
    normalized: bool,
}

impl<R: Real> LogProb<R> {
    pub fn normalized(value: R) -> Self {
        debug_assert!(!value.is_nan());
        LogProb {
            value,
            normalized: true,
        }
    }

    pub fn unnormalized(value: R) -> Self {
        debug_assert!(!value.is_nan());
        LogProb {
            value,
            normalized: false,
        }
    }

    pub fn value(&self) -> R {
        self.value
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn prob(&self) -> R {
        self.value.exp()
    }
}

/// Table and customer count matrices of a Chinese restaurant franchise.
///
/// `tables[i][j]` is the number of tables in restaurant `i` serving dish `j`;
/// `customers[i][j]` the number of customers in restaurant `i` eating dish
/// `j`. Rows may be empty (a restaurant no one visited); [`CrfCounts::new`]
/// additionally requires every dish column to be used, which holds for
/// mixture-derived counts. Sequence-derived transition counts go through
/// [`CrfCounts::new_allowing_unused_dishes`], since the pinned first state
/// of a sequence need not be transitioned into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfCounts {
    tables: Vec<Vec<usize>>,
    customers: Vec<Vec<usize>>,
}

impl CrfCounts {
    pub fn new(tables: Vec<Vec<usize>>, customers: Vec<Vec<usize>>) -> Result<Self> {
        let counts = Self::new_allowing_unused_dishes(tables, customers)?;
        for j in 0..counts.num_dishes() {
            if (0..counts.num_restaurants()).all(|i| counts.customers[i][j] == 0) {
                return Err(Error::invalid(format!("dish {j} is served to no one")));
            }
        }
        Ok(counts)
    }

    pub fn new_allowing_unused_dishes(
        tables: Vec<Vec<usize>>,
        customers: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if tables.len() != customers.len() {
            return Err(Error::invalid("table and customer matrices differ in rows"));
        }
        if tables.is_empty() {
            return Err(Error::invalid("CRF counts need at least one restaurant"));
        }
        let k = tables[0].len();
        for (i, (t_row, c_row)) in tables.iter().zip(&customers).enumerate() {
            if t_row.len() != k || c_row.len() != k {
                return Err(Error::invalid(format!("ragged count matrix at row {i}")));
            }
            for j in 0..k {
                let (t, c) = (t_row[j], c_row[j]);
                if (t == 0) != (c == 0) {
                    return Err(Error::invalid(format!(
                        "tables and customers must be zero together at ({i}, {j})"
                    )));
                }
                if t > c {
                    return Err(Error::invalid(format!(
                        "more tables than customers at ({i}, {j}): {t} > {c}"
                    )));
                }
            }
        }
        Ok(CrfCounts { tables, customers })
    }

    pub fn tables(&self) -> &[Vec<usize>] {
        &self.tables
    }

    pub fn customers(&self) -> &[Vec<usize>] {
        &self.customers
    }

    pub fn num_restaurants(&self) -> usize {
        self.tables.len()
    }

    pub fn num_dishes(&self) -> usize {
        self.tables[0].len()
    }

    pub fn tables_in_restaurant(&self, i: usize) -> usize {
        self.tables[i].iter().sum()
    }

    pub fn total_tables(&self) -> usize {
        self.tables.iter().flatten().sum()
    }

    pub fn tables_serving_dish(&self, j: usize) -> usize {
        self.tables.iter().map(|row| row[j]).sum()
    }

    pub fn customers_in_restaurant(&self, i: usize) -> usize {
        self.customers[i].iter().sum()
    }

    pub fn total_customers(&self) -> usize {
        self.customers.iter().flatten().sum()
    }
}

/// One table of a franchise restaurant: the dish it serves and how many
/// customers sit at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSeating {
    pub dish: usize,
    pub customers: usize,
}

/// Per-restaurant, per-table seating configuration of a franchise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seatings {
    restaurants: Vec<Vec<TableSeating>>,
}

impl Seatings {
    pub fn new(restaurants: Vec<Vec<TableSeating>>) -> Result<Self> {
        if restaurants.is_empty() {
            return Err(Error::invalid("seatings need at least one restaurant"));
        }
        let mut max_dish = None;
        for (i, tables) in restaurants.iter().enumerate() {
            for table in tables {
                if table.customers == 0 {
                    return Err(Error::invalid(format!(
                        "empty table in restaurant {i} (dish {})",
                        table.dish
                    )));
                }
                max_dish = Some(max_dish.map_or(table.dish, |m: usize| m.max(table.dish)));
            }
        }
        if let Some(max_dish) = max_dish {
            for j in 0..=max_dish {
                let used = restaurants
                    .iter()
                    .flatten()
                    .any(|table| table.dish == j);
                if !used {
                    return Err(Error::domain(format!(
                        "inconsistent dish labels: dish {j} never served but dish {max_dish} is"
                    )));
                }
            }
        }
        Ok(Seatings { restaurants })
    }

    /// Constructor for enumeration code that has already established the
    /// invariants (tables non-empty, dish labels inherited from validated
    /// counts).
    pub(super) fn from_validated_parts(restaurants: Vec<Vec<TableSeating>>) -> Self {
        Seatings { restaurants }
    }

    pub fn restaurants(&self) -> &[Vec<TableSeating>] {
        &self.restaurants
    }

    pub fn num_dishes(&self) -> usize {
        self.restaurants
            .iter()
            .flatten()
            .map(|t| t.dish + 1)
            .max()
            .unwrap_or(0)
    }

    /// Collapse the seating to its (t, C) count matrices.
    pub fn to_counts(&self) -> Result<CrfCounts> {
        let n = self.restaurants.len();
        let k = self.num_dishes();
        if k == 0 {
            return Err(Error::invalid("seatings contain no tables"));
        }
        let mut tables = vec![vec![0usize; k]; n];
        let mut customers = vec![vec![0usize; k]; n];
        for (i, rest) in self.restaurants.iter().enumerate() {
            for table in rest {
                tables[i][table.dish] += 1;
                customers[i][table.dish] += table.customers;
            }
        }
        CrfCounts::new_allowing_unused_dishes(tables, customers)
    }
}

/// `ln Γ(x+1) − ln Γ(x+n)` computed as a negated rising-factorial log sum,
/// valid for `x ≥ 0` and `n ≥ 1` (only `x + 1 > 0` is ever touched).
fn neg_log_gamma_ratio<R: Real>(x: R, n: usize) -> R {
    debug_assert!(n >= 1);
    -log_rising_factorial(x + R::one(), n - 1).expect("x + 1 > 0")
}

/// Eq.-style CRP table-count probability with `c_ℓ!` factors, as the
/// franchise construction composes it:
/// `(L−1) ln κ + ln Γ(κ+1) − ln Γ(κ+c·) + Σ ln c_ℓ!`.
///
/// This quantity does not sum to one over set partitions; see
/// [`crp_partition_log_prob`] for the normalized law.
pub fn crp_log_prob<R: Real>(counts: &TableCounts, kappa: R) -> Result<LogProb<R>> {
    let conc = Concentrations::new(kappa, kappa)?;
    let v = crp_factor(counts.counts(), conc.to_log().log_kappa, kappa, false);
    Ok(LogProb::unnormalized(v))
}

/// Normalized CRP probability of a set partition with the given block
/// sizes: `(L−1) ln κ + ln Γ(κ+1) − ln Γ(κ+c·) + Σ ln (c_ℓ−1)!`.
///
/// Summing `exp` of this over all set partitions of `{1..n}` gives one.
pub fn crp_partition_log_prob<R: Real>(block_sizes: &TableCounts, kappa: R) -> Result<LogProb<R>> {
    let conc = Concentrations::new(kappa, kappa)?;
    let v = crp_factor(block_sizes.counts(), conc.to_log().log_kappa, kappa, true);
    Ok(LogProb::normalized(v))
}

/// Shared CRP factor. `partition_law` selects `(c−1)!` (normalized set
/// partition law) versus `c!` (as-printed table-count form).
fn crp_factor<R: Real>(counts: &[usize], log_kappa: R, kappa: R, partition_law: bool) -> R {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return R::zero();
    }
    let l = counts.len();
    let mut v = R::of_usize(l - 1) * log_kappa + neg_log_gamma_ratio(kappa, total);
    for &c in counts {
        v += if partition_law {
            ln_factorial::<R>(c - 1)
        } else {
            ln_factorial::<R>(c)
        };
    }
    v
}

/// CRF probability of the table/customer count matrices, with table
/// arrangements marginalized into unsigned Stirling numbers of the first
/// kind:
///
/// `top(κ; t) + Σ_i [(t_i·−1) ln α + ln Γ(α+1) − ln Γ(α+C_i·) + Σ_j ln [C_ij t_ij]]`
///
/// where `top(κ; t) = (K−1) ln κ + ln Γ(κ+1) − ln Γ(κ+t··) + Σ_j ln t_·j!`.
pub fn crf_log_prob_counts<R: Real>(
    counts: &CrfCounts,
    conc: &Concentrations<R>,
) -> Result<LogProb<R>> {
    let v = crf_log_prob_counts_from_logs(counts, &conc.to_log())?;
    Ok(LogProb::unnormalized(v))
}

/// [`crf_log_prob_counts`] with concentrations supplied in log space, for
/// precision-scale sweeps where `κ`, `α` underflow as plain floats.
pub fn crf_log_prob_counts_from_logs<R: Real>(
    counts: &CrfCounts,
    conc: &LogConcentrations<R>,
) -> Result<R> {
    if counts.total_customers() == 0 {
        return Ok(R::zero());
    }
    let mut v = crf_top_factor(counts, conc.log_kappa);
    let alpha = conc.log_alpha.exp();
    for i in 0..counts.num_restaurants() {
        let c_total = counts.customers_in_restaurant(i);
        if c_total == 0 {
            // An unvisited restaurant contributes Γ(α+1)/(α Γ(α)) = 1 exactly.
            continue;
        }
        let t_total = counts.tables_in_restaurant(i);
        let mut f = signed_count_times(t_total as i64 - 1, conc.log_alpha)
            + neg_log_gamma_ratio(alpha, c_total);
        for j in 0..counts.num_dishes() {
            f += log_stirling1u::<R>(counts.customers()[i][j], counts.tables()[i][j])?;
        }
        v += f;
    }
    Ok(v)
}

/// CRF probability of one specific seating arrangement of labeled customers:
/// the same top-level factor as [`crf_log_prob_counts`], with each
/// restaurant's factor carrying `(c_ijt −1)!` per table — the set-partition
/// seating law whose sum over all arrangements consistent with `(t, C)`
/// recovers the Stirling-number count form exactly.
pub fn crf_log_prob_seatings<R: Real>(
    seatings: &Seatings,
    conc: &Concentrations<R>,
) -> Result<LogProb<R>> {
    if seatings.restaurants.iter().all(|r| r.is_empty()) {
        return Ok(LogProb::unnormalized(R::zero()));
    }
    let counts = seatings.to_counts()?;
    let logs = conc.to_log();
    let mut v = crf_top_factor(&counts, logs.log_kappa);
    for (i, rest) in seatings.restaurants().iter().enumerate() {
        let c_total = counts.customers_in_restaurant(i);
        if c_total == 0 {
            continue;
        }
        let t_total = rest.len();
        let mut f = signed_count_times(t_total as i64 - 1, logs.log_alpha)
            + neg_log_gamma_ratio(conc.alpha(), c_total);
        for table in rest {
            f += ln_factorial::<R>(table.customers - 1);
        }
        v += f;
    }
    Ok(LogProb::unnormalized(v))
}

/// Top-level restaurant factor `(K−1) ln κ + ln Γ(κ+1) − ln Γ(κ+t··) + Σ_j ln t_·j!`.
fn crf_top_factor<R: Real>(counts: &CrfCounts, log_kappa: R) -> R {
    let t_total = counts.total_tables();
    if t_total == 0 {
        return R::zero();
    }
    let k = counts.num_dishes();
    let kappa = log_kappa.exp();
    let mut v = signed_count_times(k as i64 - 1, log_kappa) + neg_log_gamma_ratio(kappa, t_total);
    for j in 0..k {
        v += ln_factorial::<R>(counts.tables_serving_dish(j));
    }
    v
}

/// `m · x` for a possibly negative integer coefficient, skipping the
/// multiply at zero so `0 · (−inf)` can never poison a sum.
fn signed_count_times<R: Real>(m: i64, x: R) -> R {
    if m == 0 {
        R::zero()
    } else {
        R::of(m as f64) * x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::log_sum_exp;

    #[test]
    fn crp_log_prob_spec_examples() {
        // Single table, single customer: probability one for any κ.
        let c = TableCounts::new(vec![1]).unwrap();
        for kappa in [0.1f64, 1.0, 10.0] {
            assert!(crp_log_prob(&c, kappa).unwrap().value().abs() < 1e-14);
        }
        // c = (2), κ = 1: 2!·Γ(2)/Γ(3) = 1.
        let c = TableCounts::new(vec![2]).unwrap();
        assert!(crp_log_prob(&c, 1.0f64).unwrap().value().abs() < 1e-14);
        // c = (1,1), κ = 1: κ·Γ(2)/Γ(3) = 1/2.
        let c = TableCounts::new(vec![1, 1]).unwrap();
        let v = crp_log_prob(&c, 1.0f64).unwrap().value();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn crp_partition_log_prob_spec_examples() {
        // {{1,2}}: second customer joins the first table w.p. 1/(κ+1).
        let one_block = TableCounts::new(vec![2]).unwrap();
        let v = crp_partition_log_prob(&one_block, 1.0f64).unwrap();
        assert!((v.value() - 0.5f64.ln()).abs() < 1e-14);
        assert!(v.is_normalized());
        // {{1},{2}}: new table w.p. κ/(κ+1).
        let two_blocks = TableCounts::new(vec![1, 1]).unwrap();
        let v = crp_partition_log_prob(&two_blocks, 1.0f64).unwrap();
        assert!((v.value() - 0.5f64.ln()).abs() < 1e-14);
        // n = 1.
        let single = TableCounts::new(vec![1]).unwrap();
        assert!(crp_partition_log_prob(&single, 2.5f64)
            .unwrap()
            .value()
            .abs()
            < 1e-14);
    }

    #[test]
    fn the_two_crp_conventions_differ_by_block_factorials() {
        let c = TableCounts::new(vec![3, 2, 1]).unwrap();
        let printed = crp_log_prob(&c, 0.7f64).unwrap().value();
        let partition = crp_partition_log_prob(&c, 0.7f64).unwrap().value();
        // Σ ln c! − Σ ln (c−1)! = Σ ln c.
        let gap: f64 = [3.0f64, 2.0, 1.0].iter().map(|c| c.ln()).sum();
        assert!((printed - partition - gap).abs() < 1e-13);
    }

    #[test]
    fn crp_rejects_invalid_inputs() {
        assert!(TableCounts::new(vec![]).is_err());
        assert!(TableCounts::new(vec![2, 0]).is_err());
        let c = TableCounts::new(vec![2]).unwrap();
        assert!(crp_log_prob(&c, 0.0f64).is_err());
        assert!(crp_log_prob(&c, f64::NAN).is_err());
    }

    #[test]
    fn crf_counts_trivial_instances() {
        let conc = Concentrations::new(1.0f64, 1.0).unwrap();
        // One restaurant, one dish, one customer at one table: probability 1.
        let counts = CrfCounts::new(vec![vec![1]], vec![vec![1]]).unwrap();
        assert!(crf_log_prob_counts(&counts, &conc).unwrap().value().abs() < 1e-14);
        // C = [[2]], t = [[1]], κ = α = 1: Γ(2)/Γ(3)·[2 1] with trivial top = 1/2.
        let counts = CrfCounts::new(vec![vec![1]], vec![vec![2]]).unwrap();
        let v = crf_log_prob_counts(&counts, &conc).unwrap().value();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn crf_seatings_single_table_single_customer() {
        let conc = Concentrations::new(1.0f64, 1.0).unwrap();
        let seatings = Seatings::new(vec![vec![TableSeating {
            dish: 0,
            customers: 1,
        }]])
        .unwrap();
        assert!(
            crf_log_prob_seatings(&seatings, &conc)
                .unwrap()
                .value()
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn crf_seatings_two_customers_one_table() {
        // N = 1, one dish, two customers at one table, κ = α = 1.
        // Top factor: 1 table total, trivial. Restaurant factor:
        // Γ(2)/Γ(3) · (2−1)! = 1/2.
        let conc = Concentrations::new(1.0f64, 1.0).unwrap();
        let seatings = Seatings::new(vec![vec![TableSeating {
            dish: 0,
            customers: 2,
        }]])
        .unwrap();
        let v = crf_log_prob_seatings(&seatings, &conc).unwrap().value();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn crf_counts_equal_seating_marginal_small_instance() {
        let conc = Concentrations::new(1.3f64, 0.6).unwrap();
        let counts = CrfCounts::new(vec![vec![2, 1], vec![1, 2]], vec![vec![3, 1], vec![1, 2]])
            .unwrap();
        let lhs = crf_log_prob_counts(&counts, &conc).unwrap().value();
        let rhs = log_sum_exp(&crf_seating_log_probs(&counts, &conc).unwrap());
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn crf_counts_validation() {
        // t and C must be zero together.
        assert!(CrfCounts::new(vec![vec![1, 0]], vec![vec![1, 1]]).is_err());
        // t must not exceed C.
        assert!(CrfCounts::new(vec![vec![3]], vec![vec![2]]).is_err());
        // Strict constructor rejects unused dishes; permissive one allows.
        assert!(CrfCounts::new(vec![vec![1, 0]], vec![vec![2, 0]]).is_err());
        assert!(
            CrfCounts::new_allowing_unused_dishes(vec![vec![1, 0]], vec![vec![2, 0]]).is_ok()
        );
    }

    #[test]
    fn seatings_reject_gap_in_dish_labels() {
        let r = vec![vec![
            TableSeating {
                dish: 0,
                customers: 1,
            },
            TableSeating {
                dish: 2,
                customers: 1,
            },
        ]];
        assert!(Seatings::new(r).is_err());
    }

    #[test]
    fn log_conc_path_matches_plain_path() {
        let conc = Concentrations::new(0.8f64, 1.7).unwrap();
        let counts =
            CrfCounts::new(vec![vec![2, 1], vec![0, 1]], vec![vec![4, 1], vec![0, 3]]).unwrap();
        let a = crf_log_prob_counts(&counts, &conc).unwrap().value();
        let b = crf_log_prob_counts_from_logs(&counts, &conc.to_log()).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn log_conc_path_survives_underflowing_kappa() {
        // ln κ = −10^6: κ underflows to zero but the factor stays finite and
        // is dominated by (K−1) ln κ.
        let counts =
            CrfCounts::new(vec![vec![1, 1], vec![1, 1]], vec![vec![2, 2], vec![1, 1]]).unwrap();
        let logs = LogConcentrations {
            log_kappa: -1.0e6f64,
            log_alpha: -1.0e6f64,
        };
        let v = crf_log_prob_counts_from_logs(&counts, &logs).unwrap();
        assert!(v.is_finite());
        // (K−1) ln κ + Σ_i (t_i·−1) ln α = (1 + 1 + 1) · (−1e6).
        assert!((v - (-3.0e6)).abs() / 3.0e6 < 1e-6, "v = {v}");
    }
}
