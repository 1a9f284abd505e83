//! Minimum-cost path decoding over a fixed state alphabet.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exact minimizer of `Σ_t unary[t][z_t] + Σ_{t≥2} arc[z_{t−1}][z_t]` with
/// `z_1` pinned to `initial_state`.
///
/// Ties break toward the smaller state index, both at each backtrack step
/// and at the final state.
pub fn viterbi_path<R: Real>(
    unary: &[Vec<R>],
    arc: &[Vec<R>],
    initial_state: usize,
) -> Result<Vec<usize>> {
    let t_len = unary.len();
    if t_len == 0 {
        return Err(Error::invalid("unary cost matrix has no rows"));
    }
    let k = unary[0].len();
    if k == 0 {
        return Err(Error::invalid("unary cost matrix has no states"));
    }
    if unary.iter().any(|row| row.len() != k) {
        return Err(Error::invalid("ragged unary cost matrix"));
    }
    if arc.len() != k || arc.iter().any(|row| row.len() != k) {
        return Err(Error::invalid("arc cost matrix must be K x K"));
    }
    if initial_state >= k {
        return Err(Error::invalid("initial state out of range"));
    }
    if unary
        .iter()
        .flatten()
        .chain(arc.iter().flatten())
        .any(|c| !c.is_finite())
    {
        return Err(Error::domain("viterbi costs must be finite"));
    }

    let mut cost = vec![R::infinity(); k];
    cost[initial_state] = unary[0][initial_state];
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut next = vec![R::infinity(); k];
        let mut parent = vec![0usize; k];
        for s in 0..k {
            let mut best = R::infinity();
            let mut best_j = 0usize;
            for (j, &c) in cost.iter().enumerate() {
                let v = c + arc[j][s];
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            next[s] = best + unary[t][s];
            parent[s] = best_j;
        }
        parents.push(parent);
        cost = next;
    }

    let mut last = 0usize;
    let mut best = R::infinity();
    for (s, &c) in cost.iter().enumerate() {
        if c < best {
            best = c;
            last = s;
        }
    }

    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = parents[t - 1][path[t]];
    }
    debug_assert_eq!(path[0], initial_state);
    Ok(path)
}

/// Left-to-right cost of a given path under the same cost matrices,
/// accumulated in the same association order as the recursion.
pub fn path_cost<R: Real>(path: &[usize], unary: &[Vec<R>], arc: &[Vec<R>]) -> R {
    let mut acc = unary[0][path[0]];
    for t in 1..path.len() {
        acc = acc + arc[path[t - 1]][path[t]] + unary[t][path[t]];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_paths_are_all_zero() {
        let unary = vec![vec![1.0f64]; 4];
        let arc = vec![vec![0.5f64]];
        assert_eq!(viterbi_path(&unary, &arc, 0).unwrap(), vec![0, 0, 0, 0]);
    }

    #[test]
    fn exact_tie_breaks_to_smaller_index() {
        // T = 2, K = 2, both completions cost the same.
        let unary = vec![vec![0.0f64, 0.0], vec![1.0, 1.0]];
        let arc = vec![vec![2.0f64, 2.0], vec![2.0, 2.0]];
        assert_eq!(viterbi_path(&unary, &arc, 0).unwrap(), vec![0, 0]);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        // Deterministic pseudo-random costs, T = 5, K = 3.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed % 1000) as f64 / 100.0
        };
        for _case in 0..50 {
            let t_len = 5;
            let k = 3;
            let unary: Vec<Vec<f64>> =
                (0..t_len).map(|_| (0..k).map(|_| next()).collect()).collect();
            let arc: Vec<Vec<f64>> =
                (0..k).map(|_| (0..k).map(|_| next()).collect()).collect();
            let got = viterbi_path(&unary, &arc, 0).unwrap();

            let mut best_cost = f64::INFINITY;
            let mut stack = vec![vec![0usize]];
            while let Some(prefix) = stack.pop() {
                if prefix.len() == t_len {
                    let c = path_cost(&prefix, &unary, &arc);
                    if c < best_cost {
                        best_cost = c;
                    }
                    continue;
                }
                for s in 0..k {
                    let mut p = prefix.clone();
                    p.push(s);
                    stack.push(p);
                }
            }
            assert_eq!(path_cost(&got, &unary, &arc), best_cost);
        }
    }

    #[test]
    fn rejects_bad_shapes_and_nonfinite_costs() {
        let unary = vec![vec![0.0f64, 0.0]];
        let arc = vec![vec![0.0f64]];
        assert!(viterbi_path(&unary, &arc, 0).is_err());
        let arc2 = vec![vec![0.0f64, f64::INFINITY], vec![0.0, 0.0]];
        assert!(viterbi_path(&unary, &arc2, 0).is_err());
        let arc3 = vec![vec![0.0f64, 0.0], vec![0.0, 0.0]];
        assert!(viterbi_path(&unary, &arc3, 5).is_err());
    }
}
