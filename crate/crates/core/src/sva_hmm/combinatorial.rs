//! Exact-delta coordinate descent for the combinatorial HMM objective.
//!
//! Means never appear explicitly during the search: every state's
//! contribution is kept in collapsed form `Q_k − ‖S_k‖²/(n_k + λ₃)`, the
//! value of `Σ‖y − μ‖² + λ₃‖μ‖²` at the ridge-optimal mean. A move's score
//! is therefore the exact full-objective delta with the affected means
//! refit, which is what keeps the descent monotone.
//!
//! A round is one left-to-right position sweep (each position offered every
//! existing state plus a fresh state at the ridge-shrunk mean `y/(1+λ₃)`),
//! followed by one merge pass over state pairs. Moves are accepted only on
//! a strict decrease; ties prefer staying, then the lowest state index, and
//! a fresh state loses all ties.

use crate::error::{Error, Result};
use crate::objectives::{hdp_hmm_comb_objective, HmmSolution, Hyperparams, SequenceDataset};
use crate::options::FitOptions;
use crate::scalar::Real;

/// Strict-decrease threshold: float noise from incremental bookkeeping must
/// not count as an improvement.
const ACCEPT_EPS: f64 = 1e-12;

struct CombState<R> {
    states: Vec<usize>,
    /// Per-state coordinate sums.
    sums: Vec<Vec<R>>,
    /// Per-state Σ‖y‖².
    sq_norms: Vec<R>,
    counts: Vec<usize>,
    /// Transition multiplicities, `succ[i][j]` = #(i → j).
    succ: Vec<Vec<usize>>,
    /// Σ_i s_i, the total number of distinct transitions.
    distinct_total: usize,
}

impl<R: Real> CombState<R> {
    fn k(&self) -> usize {
        self.counts.len()
    }

    fn rebuild(states: Vec<usize>, data: &SequenceDataset<R>) -> Self {
        let k = states.iter().copied().max().map_or(0, |m| m + 1);
        let dim = data.dim();
        let mut sums = vec![vec![R::zero(); dim]; k];
        let mut sq_norms = vec![R::zero(); k];
        let mut counts = vec![0usize; k];
        for (&z, y) in states.iter().zip(data.observations()) {
            counts[z] += 1;
            for (s, &v) in sums[z].iter_mut().zip(y) {
                *s += v;
            }
            sq_norms[z] += dot(y, y);
        }
        let mut succ = vec![vec![0usize; k]; k];
        for w in states.windows(2) {
            succ[w[0]][w[1]] += 1;
        }
        let distinct_total = succ
            .iter()
            .flatten()
            .filter(|&&c| c > 0)
            .count();
        CombState {
            states,
            sums,
            sq_norms,
            counts,
            succ,
            distinct_total,
        }
    }

    /// Collapsed data + shrinkage cost of one state.
    fn contribution(&self, k: usize, lambda3: R) -> R {
        collapsed_cost(self.sq_norms[k], &self.sums[k], self.counts[k], lambda3)
    }

    /// Full objective with every mean at its ridge optimum.
    fn objective(&self, hp: &Hyperparams<R>) -> R {
        let k = self.k();
        let mut quad = R::zero();
        for s in 0..k {
            quad += self.contribution(s, hp.lambda3);
        }
        quad + hp.lambda1 * R::of_usize(k - 1)
            + hp.lambda2 * R::of(self.distinct_total as f64 - k as f64)
    }

    fn ridge_means(&self, lambda3: R) -> Vec<Vec<R>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(sum, &n)| {
                let denom = R::of_usize(n) + lambda3;
                sum.iter().map(|&s| s / denom).collect()
            })
            .collect()
    }
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    let mut acc = R::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `min_μ Σ‖y − μ‖² + λ₃‖μ‖² = Q − ‖S‖²/(n + λ₃)`; zero for an empty state.
fn collapsed_cost<R: Real>(q: R, sum: &[R], n: usize, lambda3: R) -> R {
    if n == 0 {
        return R::zero();
    }
    let denom = R::of_usize(n) + lambda3;
    q - dot(sum, sum) / denom
}

/// Fit from the default single-state initialization.
pub fn fit_hmm_combinatorial<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    opts: &FitOptions,
) -> Result<(HmmSolution<R>, Vec<R>)> {
    let init = vec![0usize; data.len()];
    fit_from_states(data, hp, opts, init)
}

/// Fit starting from a caller-provided solution (its means are discarded;
/// the search keeps means implicitly optimal).
pub fn fit_hmm_combinatorial_with_init<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    opts: &FitOptions,
    init: &HmmSolution<R>,
) -> Result<(HmmSolution<R>, Vec<R>)> {
    if init.states().len() != data.len() {
        return Err(Error::invalid(
            "initial solution length does not match sequence",
        ));
    }
    fit_from_states(data, hp, opts, init.states().to_vec())
}

fn fit_from_states<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    opts: &FitOptions,
    init: Vec<usize>,
) -> Result<(HmmSolution<R>, Vec<R>)> {
    opts.validate()?;
    let tol = R::of(opts.tol);
    let monotone_tol = R::of(1e-9);
    let mut state = CombState::rebuild(init, data);
    let mut trace = Vec::new();
    let mut prev = state.objective(hp);
    for _round in 0..opts.max_sweeps {
        let moved = position_sweep(&mut state, data, hp);
        let after_positions = state.objective(hp);
        assert!(
            after_positions <= prev + monotone_tol,
            "position sweep increased the objective: {prev} -> {after_positions}"
        );
        trace.push(after_positions);

        let merged = merge_pass(&mut state, data, hp);
        let after_merges = state.objective(hp);
        assert!(
            after_merges <= after_positions + monotone_tol,
            "merge pass increased the objective: {after_positions} -> {after_merges}"
        );
        trace.push(after_merges);

        let improved = prev - after_merges;
        prev = after_merges;
        if (moved == 0 && merged == 0) || improved < tol {
            break;
        }
    }
    if trace.is_empty() {
        trace.push(prev);
    }

    // Canonicalize labels by first appearance for the output solution.
    let mut relabel = vec![usize::MAX; state.k()];
    let mut next = 0usize;
    let mut states = state.states.clone();
    for z in states.iter_mut() {
        if relabel[*z] == usize::MAX {
            relabel[*z] = next;
            next += 1;
        }
        *z = relabel[*z];
    }
    let final_state = CombState::rebuild(states, data);
    let means = final_state.ridge_means(hp.lambda3);
    let solution = HmmSolution::new(final_state.states, means)?;
    #[cfg(debug_assertions)]
    {
        let check = hdp_hmm_comb_objective(data, &solution, hp)?;
        debug_assert!(
            (check - prev).abs() <= R::of(1e-6) * prev.abs().max(R::one()),
            "collapsed objective drifted from the explicit one: {check} vs {prev}"
        );
    }
    Ok((solution, trace))
}

/// One left-to-right pass of single-position moves; returns accepted moves.
fn position_sweep<R: Real>(
    state: &mut CombState<R>,
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
) -> usize {
    let mut moves = 0;
    for t in 0..state.states.len() {
        let current = state.states[t];

        let mut best_delta = R::zero();
        let mut best: Option<usize> = None; // None = stay; Some(k()) = fresh
        for b in 0..state.k() {
            if b == current {
                continue;
            }
            let delta = move_delta(state, data, hp, t, b);
            if delta < best_delta {
                best_delta = delta;
                best = Some(b);
            }
        }
        let fresh = state.k();
        let fresh_delta = move_delta(state, data, hp, t, fresh);
        if fresh_delta < best_delta {
            best_delta = fresh_delta;
            best = Some(fresh);
        }

        if let Some(b) = best {
            if best_delta < R::of(-ACCEPT_EPS) {
                apply_move(state, data, t, b);
                moves += 1;
            }
        }
    }
    moves
}

/// Exact objective delta of setting `states[t] = b` (`b == k()` means a
/// fresh state), with the means of the affected states refit.
fn move_delta<R: Real>(
    state: &CombState<R>,
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    t: usize,
    b: usize,
) -> R {
    let a = state.states[t];
    if b == a {
        return R::zero();
    }
    let y = &data.observations()[t];
    let y_sq = dot(y, y);

    // Collapsed-cost changes of the two touched states.
    let old_a = state.contribution(a, hp.lambda3);
    let sum_a_minus: Vec<R> = state.sums[a].iter().zip(y).map(|(&s, &v)| s - v).collect();
    let new_a = collapsed_cost(
        state.sq_norms[a] - y_sq,
        &sum_a_minus,
        state.counts[a] - 1,
        hp.lambda3,
    );
    let (old_b, new_b) = if b == state.k() {
        let fresh = collapsed_cost(y_sq, y, 1, hp.lambda3);
        (R::zero(), fresh)
    } else {
        let old_b = state.contribution(b, hp.lambda3);
        let sum_b_plus: Vec<R> = state.sums[b].iter().zip(y).map(|(&s, &v)| s + v).collect();
        let new_b = collapsed_cost(
            state.sq_norms[b] + y_sq,
            &sum_b_plus,
            state.counts[b] + 1,
            hp.lambda3,
        );
        (old_b, new_b)
    };

    // State-count change: a may empty, b may be fresh.
    let mut dk: i64 = 0;
    if state.counts[a] == 1 {
        dk -= 1;
    }
    if b == state.k() {
        dk += 1;
    }

    // Distinct-transition change from rewiring the at-most-two incident edges.
    let mut edits: Vec<(usize, usize, i64)> = Vec::with_capacity(4);
    let note = |edits: &mut Vec<(usize, usize, i64)>, from: usize, to: usize, d: i64| {
        for e in edits.iter_mut() {
            if e.0 == from && e.1 == to {
                e.2 += d;
                return;
            }
        }
        edits.push((from, to, d));
    };
    if t > 0 {
        let p = state.states[t - 1];
        note(&mut edits, p, a, -1);
        note(&mut edits, p, b, 1);
    }
    if t + 1 < state.states.len() {
        let q = state.states[t + 1];
        note(&mut edits, a, q, -1);
        note(&mut edits, b, q, 1);
    }
    let mut d_distinct: i64 = 0;
    for &(from, to, d) in &edits {
        if d == 0 {
            continue;
        }
        let old = if from < state.k() && to < state.k() {
            state.succ[from][to] as i64
        } else {
            0
        };
        let new = old + d;
        debug_assert!(new >= 0);
        d_distinct += (new > 0) as i64 - (old > 0) as i64;
    }

    new_a - old_a + new_b - old_b
        + hp.lambda1 * R::of(dk as f64)
        + hp.lambda2 * R::of((d_distinct - dk) as f64)
}

/// Commit `states[t] = b` and rebuild the derived structures. Labels stay
/// in their existing order; an emptied state's label is compacted away.
fn apply_move<R: Real>(state: &mut CombState<R>, data: &SequenceDataset<R>, t: usize, b: usize) {
    let a = state.states[t];
    state.states[t] = b;
    if state.counts[a] == 1 {
        // a vanished: close the label gap.
        for z in state.states.iter_mut() {
            if *z > a {
                *z -= 1;
            }
        }
    }
    *state = CombState::rebuild(std::mem::take(&mut state.states), data);
}

/// One merge pass: repeatedly take the first state pair (lexicographic)
/// whose merge strictly lowers the objective. Returns accepted merges.
fn merge_pass<R: Real>(
    state: &mut CombState<R>,
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
) -> usize {
    let mut merges = 0;
    'outer: loop {
        let current = state.objective(hp);
        for keep in 0..state.k() {
            for drop in (keep + 1)..state.k() {
                let mut candidate = state.states.clone();
                for z in candidate.iter_mut() {
                    if *z == drop {
                        *z = keep;
                    } else if *z > drop {
                        *z -= 1;
                    }
                }
                let merged = CombState::rebuild(candidate, data);
                if merged.objective(hp) < current - R::of(ACCEPT_EPS) {
                    *state = merged;
                    merges += 1;
                    continue 'outer;
                }
            }
        }
        return merges;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(l1: f64, l2: f64, l3: f64) -> Hyperparams<f64> {
        Hyperparams::new(l1, l2, l3).unwrap()
    }

    fn seq(values: &[f64]) -> SequenceDataset<f64> {
        SequenceDataset::new(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn constant_sequence_stays_single_state() {
        let data = seq(&[2.0, 2.0, 2.0, 2.0]);
        let h = hp(1.0, 1.0, 0.0);
        let (sol, trace) = fit_hmm_combinatorial(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(sol.k(), 1);
        assert_eq!(sol.states(), &[0, 0, 0, 0]);
        assert!((sol.means()[0][0] - 2.0).abs() < 1e-12);
        assert!(trace.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn staircase_segments_recovered() {
        // Three well-separated levels; noise amplitude 0.3, separation 20.
        let mut values = Vec::new();
        let noise = [0.1, -0.2, 0.3, -0.1, 0.2, -0.3];
        for base in [0.0f64, 20.0, 40.0] {
            for &n in &noise {
                values.push(base + n);
            }
        }
        let data = seq(&values);
        let h = hp(4.0, 1.0, 0.0);
        let (sol, _) = fit_hmm_combinatorial(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(sol.k(), 3);
        let want: Vec<usize> = (0..18).map(|t| t / 6).collect();
        assert_eq!(sol.states(), &want[..]);
    }

    #[test]
    fn trace_is_non_increasing() {
        let data = seq(&[0.0, 0.2, 8.0, 8.1, 0.1, 7.9, 8.2, 0.05]);
        let h = hp(2.0, 0.5, 0.1);
        let (_, trace) = fit_hmm_combinatorial(&data, &h, &FitOptions::default()).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn move_deltas_match_full_objective_recompute() {
        let data = seq(&[0.0, 1.0, 5.0, 5.5, 0.2, 9.0]);
        let h = hp(1.5, 0.8, 0.3);
        let state = CombState::rebuild(vec![0, 0, 1, 1, 0, 1], &data);
        let base = state.objective(&h);
        for t in 0..6 {
            for b in 0..=state.k() {
                if b == state.states[t] {
                    continue;
                }
                let delta = move_delta(&state, &data, &h, t, b);
                let mut probe = state.states.clone();
                probe[t] = b;
                if state.counts[state.states[t]] == 1 {
                    let a = state.states[t];
                    for z in probe.iter_mut() {
                        if *z > a {
                            *z -= 1;
                        }
                    }
                }
                let full = CombState::rebuild(probe, &data).objective(&h);
                assert!(
                    ((base + delta) - full).abs() < 1e-9,
                    "t = {t}, b = {b}: {} vs {}",
                    base + delta,
                    full
                );
            }
        }
    }

    #[test]
    fn canonical_labels_on_output() {
        let data = seq(&[0.0, 10.0, 0.1, 10.1, 0.05]);
        let h = hp(1.0, 0.5, 0.0);
        let (sol, _) = fit_hmm_combinatorial(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(sol.states()[0], 0);
        // First appearances must be in label order.
        let mut seen = 0usize;
        for &z in sol.states() {
            assert!(z <= seen);
            if z == seen {
                seen += 1;
            }
        }
        assert_eq!(seen, sol.k());
    }
}
