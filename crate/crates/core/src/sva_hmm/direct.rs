//! Alternating minimization of the direct HMM objective at fixed K.
//!
//! One round is four exact block updates, each of which minimizes the full
//! objective in its own block of variables, so the objective is
//! non-increasing across every phase:
//!
//! 1. states — Viterbi on unary `‖y_t − μ_k‖²` and arc `−ζ ln π_jk`;
//! 2. means — the ridge closed form `Σy / (n + λ₃)`;
//! 3. transition rows — `π_ij = (ζ n_ij + λ₂ β_j) / (ζ n_i· + λ₂)`;
//! 4. shared weights — the normalized geometric mean of the rows.
//!
//! K is a fixed input here; [`fit_hmm_direct_sweep`] scores a range of K
//! with the full objective (which carries the `λ₁K` penalty) and keeps the
//! argmin, breaking ties toward the smaller K.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{
    hdp_hmm_direct_objective, HmmDirectSolution, Hyperparams, SequenceDataset,
};
use crate::options::FitOptions;
use crate::scalar::Real;

use super::viterbi::viterbi_path;

/// Count matrix of observed transitions, `n[i][j] = #{t ≥ 2 : z_{t−1} = i, z_t = j}`.
pub fn transition_counts(states: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut n = vec![vec![0usize; k]; k];
    for w in states.windows(2) {
        n[w[0]][w[1]] += 1;
    }
    n
}

/// Closed-form row update: `π_ij = (ζ n_ij + λ₂ β_j) / (ζ n_i· + λ₂)` over
/// `j = 1..K+1`, with no data mass in the remainder column. Each row is the
/// unique stationary point of `−ζ Σ_j n_ij ln π_ij + λ₂ KL(β ‖ π_i)` on the
/// simplex, so rows sum to one and inherit strict positivity from `β`.
pub fn update_transition_rows<R: Real>(
    transition_counts: &[Vec<usize>],
    shared_weights: &[R],
    hp: &Hyperparams<R>,
) -> Result<Vec<Vec<R>>> {
    let k = transition_counts.len();
    if shared_weights.len() != k + 1 {
        return Err(Error::invalid(format!(
            "shared weights must have K+1 = {} entries, got {}",
            k + 1,
            shared_weights.len()
        )));
    }
    if shared_weights
        .iter()
        .any(|&b| !(b > R::zero()) || !b.is_finite())
    {
        return Err(Error::invalid("shared weights must be strictly positive"));
    }
    let mut rows = Vec::with_capacity(k);
    for counts in transition_counts {
        if counts.len() != k {
            return Err(Error::invalid("transition count matrix must be K x K"));
        }
        let row_total: usize = counts.iter().sum();
        let denom = hp.zeta * R::of_usize(row_total) + hp.lambda2;
        let mut row = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let n_ij = if j < k { counts[j] } else { 0 };
            row.push((hp.zeta * R::of_usize(n_ij) + hp.lambda2 * shared_weights[j]) / denom);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Closed-form shared-weight update: `β_j ∝ exp((1/K) Σ_i ln π_ij)`,
/// the unique minimizer of `Σ_i KL(β ‖ π_i)` over the simplex.
pub fn update_shared_weights<R: Real>(transition_rows: &[Vec<R>]) -> Result<Vec<R>> {
    let k = transition_rows.len();
    if k == 0 {
        return Err(Error::invalid("need at least one transition row"));
    }
    let width = transition_rows[0].len();
    for row in transition_rows {
        if row.len() != width {
            return Err(Error::invalid("ragged transition rows"));
        }
        if row.iter().any(|&p| !(p > R::zero()) || !p.is_finite()) {
            return Err(Error::invalid("transition rows must be strictly positive"));
        }
    }
    let inv_k = R::of_usize(k).recip();
    let mut log_means: Vec<R> = vec![R::zero(); width];
    for row in transition_rows {
        for (acc, &p) in log_means.iter_mut().zip(row) {
            *acc += p.ln() * inv_k;
        }
    }
    let max = log_means
        .iter()
        .copied()
        .fold(R::neg_infinity(), |a, b| a.max(b));
    let mut weights: Vec<R> = log_means.into_iter().map(|l| (l - max).exp()).collect();
    let total: R = weights.iter().copied().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Result of a K-sweep: the winning solution plus every candidate's score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectSweepOutcome<R> {
    pub solution: HmmDirectSolution<R>,
    pub trace: Vec<R>,
    /// `(K, final objective)` for every K tried.
    pub scores: Vec<(usize, R)>,
}

/// Alternating fit at fixed K. Returns the solution and the objective after
/// every phase of every round (non-increasing).
pub fn fit_hmm_direct<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    k: usize,
    opts: &FitOptions,
) -> Result<(HmmDirectSolution<R>, Vec<R>)> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let t_len = data.len();
    // Contiguous equal blocks; the first block owns t = 0 so z_1 = state 0.
    let mut states: Vec<usize> = (0..t_len).map(|t| (t * k) / t_len).collect();
    let mut means = ridge_means(data, &states, k, hp.lambda3);
    let uniform = R::of_usize(k + 1).recip();
    let mut rows = vec![vec![uniform; k + 1]; k];
    let mut shared = vec![uniform; k + 1];

    let solution_of = |states: &Vec<usize>, means: &Vec<Vec<R>>, rows: &Vec<Vec<R>>, shared: &Vec<R>| {
        HmmDirectSolution::from_raw_parts(
            states.clone(),
            means.clone(),
            rows.clone(),
            shared.clone(),
        )
    };

    let monotone_tol = R::of(1e-9);
    let tol = R::of(opts.tol);
    let mut trace = Vec::new();
    let mut prev = hdp_hmm_direct_objective(data, &solution_of(&states, &means, &rows, &shared), hp)?;
    for _round in 0..opts.max_sweeps {
        let round_start = prev;

        // (1) states
        let unary: Vec<Vec<R>> = data
            .observations()
            .iter()
            .map(|y| {
                (0..k)
                    .map(|s| crate::objectives::squared_distance(y, &means[s]))
                    .collect()
            })
            .collect();
        let arc: Vec<Vec<R>> = (0..k)
            .map(|i| (0..k).map(|j| -(hp.zeta * rows[i][j].ln())).collect())
            .collect();
        states = viterbi_path(&unary, &arc, 0)?;
        prev = phase_check(data, hp, &solution_of(&states, &means, &rows, &shared), prev, monotone_tol, "viterbi")?;
        trace.push(prev);

        // (2) means
        means = ridge_means(data, &states, k, hp.lambda3);
        prev = phase_check(data, hp, &solution_of(&states, &means, &rows, &shared), prev, monotone_tol, "means")?;
        trace.push(prev);

        // (3) transition rows
        rows = update_transition_rows(&transition_counts(&states, k), &shared, hp)?;
        prev = phase_check(data, hp, &solution_of(&states, &means, &rows, &shared), prev, monotone_tol, "rows")?;
        trace.push(prev);

        // (4) shared weights
        shared = update_shared_weights(&rows)?;
        prev = phase_check(data, hp, &solution_of(&states, &means, &rows, &shared), prev, monotone_tol, "shared")?;
        trace.push(prev);

        if round_start - prev < tol {
            break;
        }
    }

    let solution = HmmDirectSolution::from_raw_parts(states, means, rows, shared);
    Ok((solution, trace))
}

fn phase_check<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    solution: &HmmDirectSolution<R>,
    prev: R,
    monotone_tol: R,
    phase: &str,
) -> Result<R> {
    let now = hdp_hmm_direct_objective(data, solution, hp)?;
    assert!(
        now <= prev + monotone_tol,
        "{phase} phase increased the direct objective: {prev} -> {now}"
    );
    Ok(now)
}

fn ridge_means<R: Real>(
    data: &SequenceDataset<R>,
    states: &[usize],
    k: usize,
    lambda3: R,
) -> Vec<Vec<R>> {
    let dim = data.dim();
    let mut sums = vec![vec![R::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (&z, y) in states.iter().zip(data.observations()) {
        counts[z] += 1;
        for (s, &v) in sums[z].iter_mut().zip(y) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, n)| {
            if n == 0 && lambda3 == R::zero() {
                // Unused state with no shrinkage: any mean is optimal; zero.
                return vec![R::zero(); dim];
            }
            let denom = R::of_usize(n) + lambda3;
            sum.into_iter().map(|s| s / denom).collect()
        })
        .collect()
}

/// Fit every K in `k_min..=k_max` and keep the best final objective
/// (smaller K wins ties).
pub fn fit_hmm_direct_sweep<R: Real>(
    data: &SequenceDataset<R>,
    hp: &Hyperparams<R>,
    k_min: usize,
    k_max: usize,
    opts: &FitOptions,
) -> Result<DirectSweepOutcome<R>> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::invalid(format!(
            "invalid K range: {k_min}..={k_max}"
        )));
    }
    let mut best: Option<(HmmDirectSolution<R>, Vec<R>, R)> = None;
    let mut scores = Vec::new();
    for k in k_min..=k_max {
        let (solution, trace) = fit_hmm_direct(data, hp, k, opts)?;
        let objective = *trace.last().expect("at least one phase ran");
        scores.push((k, objective));
        let replace = match &best {
            None => true,
            Some((_, _, incumbent)) => objective < *incumbent,
        };
        if replace {
            best = Some((solution, trace, objective));
        }
    }
    let (solution, trace, _) = best.expect("non-empty K range");
    Ok(DirectSweepOutcome {
        solution,
        trace,
        scores,
    })
}
