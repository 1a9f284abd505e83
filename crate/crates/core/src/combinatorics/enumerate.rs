//! Exhaustive enumeration oracles for small partition instances.
//!
//! These are deliberately naive recursions: they exist so the closed-form
//! log-probability evaluators elsewhere in this module have something
//! independent to be checked against. Hard guards keep the factorial
//! blowups from ever being hit by accident.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{Concentrations, CrfCounts, Seatings, TableSeating};

/// Hard guard for [`enumerate_crp_outcomes`].
pub const CRP_ENUMERATION_MAX_N: usize = 9;

/// Hard guard (total customers) for [`crf_seating_log_probs`].
pub const CRF_ENUMERATION_MAX_CUSTOMERS: usize = 6;

/// A set partition together with its sequential-CRP probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpOutcome<R> {
    /// Blocks in creation order; each block lists 0-based customer indices
    /// in arrival order.
    pub partition: Vec<Vec<usize>>,
    pub probability: R,
}

/// All set partitions of `{0..n−1}`, each as an assignment vector in
/// restricted-growth form (first element 0, every new label one past the
/// current maximum).
pub fn set_partitions(n: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 || n > 10 {
        return Err(Error::TooLarge(format!(
            "set partition enumeration supports 1 ≤ n ≤ 10, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut assignment = vec![0usize; n];
    fn recurse(assignment: &mut Vec<usize>, pos: usize, max_label: usize, out: &mut Vec<Vec<usize>>) {
        if pos == assignment.len() {
            out.push(assignment.clone());
            return;
        }
        for label in 0..=max_label + 1 {
            assignment[pos] = label;
            recurse(assignment, pos + 1, max_label.max(label), out);
        }
    }
    // First element is pinned to block 0.
    recurse(&mut assignment, 1, 0, &mut out);
    Ok(out)
}

/// Simulate the sequential CRP law exactly: customer `m` (0-based) joins an
/// existing block `b` with probability `|b| / (κ + m)` or opens a new block
/// with probability `κ / (κ + m)`. Every set partition of `{0..n−1}` shows
/// up exactly once and the probabilities sum to one.
pub fn enumerate_crp_outcomes<R: Real>(n: usize, kappa: R) -> Result<Vec<CrpOutcome<R>>> {
    if n == 0 || n > CRP_ENUMERATION_MAX_N {
        return Err(Error::TooLarge(format!(
            "CRP enumeration supports 1 ≤ n ≤ {CRP_ENUMERATION_MAX_N}, got {n}"
        )));
    }
    if !(kappa > R::zero()) || !kappa.is_finite() {
        return Err(Error::domain(format!(
            "CRP enumeration requires finite κ > 0, got {kappa}"
        )));
    }
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    recurse_crp(n, 0, kappa, R::one(), &mut blocks, &mut out);
    Ok(out)
}

fn recurse_crp<R: Real>(
    n: usize,
    customer: usize,
    kappa: R,
    prob: R,
    blocks: &mut Vec<Vec<usize>>,
    out: &mut Vec<CrpOutcome<R>>,
) {
    if customer == n {
        out.push(CrpOutcome {
            partition: blocks.clone(),
            probability: prob,
        });
        return;
    }
    let denom = kappa + R::of_usize(customer);
    for b in 0..blocks.len() {
        let p = R::of_usize(blocks[b].len()) / denom;
        blocks[b].push(customer);
        recurse_crp(n, customer + 1, kappa, prob * p, blocks, out);
        blocks[b].pop();
    }
    let p_new = kappa / denom;
    blocks.push(vec![customer]);
    recurse_crp(n, customer + 1, kappa, prob * p_new, blocks, out);
    blocks.pop();
}

/// Log-probability of every seating arrangement consistent with the given
/// count matrices, by recursive assignment of labeled customers to tables
/// within each `(restaurant, dish)` cell.
///
/// The log-sum-exp of the returned values equals
/// [`super::crf_log_prob_counts`]; that identity is exactly the Stirling
/// marginalization `Σ_{partitions into t blocks} Π (c_b − 1)! = [C t]`.
pub fn crf_seating_log_probs<R: Real>(
    counts: &CrfCounts,
    conc: &Concentrations<R>,
) -> Result<Vec<R>> {
    let total = counts.total_customers();
    if total > CRF_ENUMERATION_MAX_CUSTOMERS {
        return Err(Error::TooLarge(format!(
            "CRF seating enumeration supports at most {CRF_ENUMERATION_MAX_CUSTOMERS} customers, got {total}"
        )));
    }

    // Per (i, j) cell: all ways to split C_ij labeled customers into exactly
    // t_ij unordered non-empty tables, recorded as block-size vectors in
    // block-creation order.
    let mut cell_options: Vec<Vec<Vec<usize>>> = Vec::new(); // per cell: list of size vectors
    let mut cell_dish: Vec<(usize, usize)> = Vec::new(); // (restaurant, dish)
    for i in 0..counts.num_restaurants() {
        for j in 0..counts.num_dishes() {
            let c = counts.customers()[i][j];
            let t = counts.tables()[i][j];
            if c == 0 {
                continue;
            }
            cell_options.push(partitions_into_blocks(c, t));
            cell_dish.push((i, j));
        }
    }

    let mut out = Vec::new();
    let mut choice = vec![0usize; cell_options.len()];
    loop {
        // Assemble the seating for this combination of per-cell partitions.
        let mut restaurants: Vec<Vec<TableSeating>> =
            vec![Vec::new(); counts.num_restaurants()];
        for (cell, &(i, j)) in cell_dish.iter().enumerate() {
            for &size in &cell_options[cell][choice[cell]] {
                restaurants[i].push(TableSeating {
                    dish: j,
                    customers: size,
                });
            }
        }
        // Dish labels are inherited from validated counts, which may legally
        // skip a dish when the counts came in through the permissive
        // constructor, so bypass Seatings' contiguity re-validation.
        let seatings = Seatings::from_validated_parts(restaurants);
        out.push(super::crf_log_prob_seatings(&seatings, conc)?.value());

        // Advance the mixed-radix counter over cell choices.
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok(out);
            }
            choice[pos] += 1;
            if choice[pos] < cell_options[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// All set partitions of `c` labeled customers into exactly `t` non-empty
/// blocks, returned as block-size vectors in block-creation order (blocks
/// ordered by their smallest member).
fn partitions_into_blocks(c: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    fn recurse(remaining: usize, target: usize, sizes: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            if sizes.len() == target {
                out.push(sizes.clone());
            }
            return;
        }
        // Next customer joins an existing block...
        for b in 0..sizes.len() {
            sizes[b] += 1;
            recurse(remaining - 1, target, sizes, out);
            sizes[b] -= 1;
        }
        // ...or opens a new one (only productive while below the target).
        if sizes.len() < target {
            sizes.push(1);
            recurse(remaining - 1, target, sizes, out);
            sizes.pop();
        }
    }
    recurse(c, t, &mut sizes, &mut out);
    out
}
