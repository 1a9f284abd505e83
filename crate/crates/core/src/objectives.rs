//! The three small-variance objective functions and their inputs.
//!
//! All three penalize a squared-error fit with structure costs:
//!
//! * grouped mixture: `Σ ‖y − μ_z‖² + λ₁(K−1) + λ₂ Σ_i (m_i − 1) + λ₃ Σ ‖μ‖²`
//! * combinatorial HMM: the same with distinct-transition counts `s_i`
//!   in place of local-cluster counts
//! * direct HMM: `Σ ‖y − μ_z‖² − ζ Σ ln π_{z z'} + λ₁K + λ₂ Σ_i KL(β ‖ π_i)
//!   + λ₃ Σ ‖μ‖²`
//!
//! The combinatorial objective is evaluated literally, including the
//! `s_i − 1 = −1` contribution of a state with no outgoing transition
//! (only ever the final state of a sequence). Optimizers never exploit it,
//! but the evaluator does not paper over it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Free parameters of the small-variance objectives.
///
/// `lambda1` prices global clusters / states, `lambda2` local clusters /
/// transition structure, `lambda3` shrinks means toward the origin, and
/// `zeta` weighs the transition log-likelihood of the direct HMM objective.
/// `precision_scale` is the inverse-variance scale `β_s = 1/(2σ²)` used by
/// the limit-verification layer; it is kept here so a single struct carries
/// every free parameter of the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams<R> {
    pub lambda1: R,
    pub lambda2: R,
    pub lambda3: R,
    pub zeta: R,
    pub precision_scale: R,
}

impl<R: Real> Hyperparams<R> {
    pub fn new(lambda1: R, lambda2: R, lambda3: R) -> Result<Self> {
        Hyperparams {
            lambda1,
            lambda2,
            lambda3,
            zeta: R::one(),
            precision_scale: R::one(),
        }
        .validated()
    }

    pub fn with_zeta(mut self, zeta: R) -> Result<Self> {
        self.zeta = zeta;
        self.validated()
    }

    pub fn with_precision_scale(mut self, precision_scale: R) -> Result<Self> {
        self.precision_scale = precision_scale;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        for (name, v, strict) in [
            ("lambda1", self.lambda1, true),
            ("lambda2", self.lambda2, true),
            ("lambda3", self.lambda3, false),
            ("zeta", self.zeta, true),
            ("precision_scale", self.precision_scale, true),
        ] {
            if !v.is_finite() || (strict && !(v > R::zero())) || v < R::zero() {
                return Err(Error::domain(format!(
                    "hyperparameter {name} out of range: {v}"
                )));
            }
        }
        Ok(self)
    }

    /// The observation variance `σ² = 1 / (2 β_s)` implied by
    /// `precision_scale`.
    pub fn sigma2(&self) -> R {
        (R::of(2.0) * self.precision_scale).recip()
    }
}

/// `N` groups of `D`-dimensional observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset<R> {
    groups: Vec<Vec<Vec<R>>>,
    dim: usize,
}

impl<R: Real> GroupedDataset<R> {
    pub fn new(groups: Vec<Vec<Vec<R>>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::invalid("dataset needs at least one group"));
        }
        let dim = groups
            .first()
            .and_then(|g| g.first())
            .map(|y| y.len())
            .ok_or_else(|| Error::invalid("group 0 is empty"))?;
        if dim == 0 {
            return Err(Error::invalid("observations must have dimension >= 1"));
        }
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::invalid(format!("group {i} is empty")));
            }
            for (j, y) in group.iter().enumerate() {
                if y.len() != dim {
                    return Err(Error::invalid(format!(
                        "observation ({i}, {j}) has dimension {}, expected {dim}",
                        y.len()
                    )));
                }
            }
        }
        Ok(GroupedDataset { groups, dim })
    }

    pub fn groups(&self) -> &[Vec<Vec<R>>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group_len(&self, i: usize) -> usize {
        self.groups[i].len()
    }

    pub fn total_observations(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn observation(&self, i: usize, j: usize) -> &[R] {
        &self.groups[i][j]
    }

    /// Iterate `(group, index-in-group, observation)` in scan order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[R])> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.iter().enumerate().map(move |(j, y)| (i, j, y.as_slice())))
    }
}

/// An ordered sequence of `D`-dimensional observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset<R> {
    observations: Vec<Vec<R>>,
    dim: usize,
}

impl<R: Real> SequenceDataset<R> {
    pub fn new(observations: Vec<Vec<R>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("sequence needs at least one observation"));
        }
        let dim = observations[0].len();
        if dim == 0 {
            return Err(Error::invalid("observations must have dimension >= 1"));
        }
        for (t, y) in observations.iter().enumerate() {
            if y.len() != dim {
                return Err(Error::invalid(format!(
                    "observation {t} has dimension {}, expected {dim}",
                    y.len()
                )));
            }
        }
        Ok(SequenceDataset { observations, dim })
    }

    pub fn observations(&self) -> &[Vec<R>] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Cluster assignments and means for grouped data. Labels are 0-based and
/// every label below `k()` must be in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedClustering<R> {
    assignments: Vec<Vec<usize>>,
    means: Vec<Vec<R>>,
}

impl<R: Real> GroupedClustering<R> {
    pub fn new(assignments: Vec<Vec<usize>>, means: Vec<Vec<R>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::invalid("clustering needs at least one cluster"));
        }
        let k = means.len();
        let mut used = vec![false; k];
        for (i, group) in assignments.iter().enumerate() {
            for (j, &z) in group.iter().enumerate() {
                if z >= k {
                    return Err(Error::invalid(format!(
                        "assignment ({i}, {j}) = {z} out of range for K = {k}"
                    )));
                }
                used[z] = true;
            }
        }
        if let Some(idle) = used.iter().position(|&u| !u) {
            return Err(Error::invalid(format!("cluster {idle} has no members")));
        }
        let dim = means[0].len();
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("cluster means differ in dimension"));
        }
        Ok(GroupedClustering { assignments, means })
    }

    /// Construct without the used-cluster check, for tests that exercise
    /// label permutations or partially built states.
    pub fn from_raw_parts(assignments: Vec<Vec<usize>>, means: Vec<Vec<R>>) -> Self {
        GroupedClustering { assignments, means }
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn means(&self) -> &[Vec<R>] {
        &self.means
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }
}

/// State path and state means of a combinatorial HMM solution.
///
/// States are canonically labeled by first appearance, so `states[0] == 0`
/// and label `m` first occurs only after every label below `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSolution<R> {
    states: Vec<usize>,
    means: Vec<Vec<R>>,
}

impl<R: Real> HmmSolution<R> {
    pub fn new(states: Vec<usize>, means: Vec<Vec<R>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("state sequence is empty"));
        }
        let k = means.len();
        let mut next_fresh = 0usize;
        for (t, &z) in states.iter().enumerate() {
            if z > next_fresh {
                return Err(Error::invalid(format!(
                    "states are not labeled by first appearance at t = {t} (saw {z}, expected <= {next_fresh})"
                )));
            }
            if z == next_fresh {
                next_fresh += 1;
            }
        }
        if next_fresh != k {
            return Err(Error::invalid(format!(
                "{next_fresh} states used but {k} means supplied"
            )));
        }
        Ok(HmmSolution { states, means })
    }

    /// Construct without canonical-labeling validation (test helper).
    pub fn from_raw_parts(states: Vec<usize>, means: Vec<Vec<R>>) -> Self {
        HmmSolution { states, means }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn means(&self) -> &[Vec<R>] {
        &self.means
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }
}

/// Solution of the direct HMM objective: a state path, state means, one
/// transition row per state on the `(K+1)`-simplex, and the shared weights
/// `β` on the same simplex. Index `K` (the last column) is the aggregated
/// remainder mass of the truncated stick; data transitions never land
/// there, but the KL term runs over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDirectSolution<R> {
    states: Vec<usize>,
    means: Vec<Vec<R>>,
    transition_rows: Vec<Vec<R>>,
    shared_weights: Vec<R>,
}

impl<R: Real> HmmDirectSolution<R> {
    pub fn new(
        states: Vec<usize>,
        means: Vec<Vec<R>>,
        transition_rows: Vec<Vec<R>>,
        shared_weights: Vec<R>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("state sequence is empty"));
        }
        if states[0] != 0 {
            return Err(Error::invalid("the first state must be state 0"));
        }
        let k = means.len();
        if k == 0 {
            return Err(Error::invalid("need at least one state"));
        }
        if states.iter().any(|&z| z >= k) {
            return Err(Error::invalid("state index out of range"));
        }
        if transition_rows.len() != k {
            return Err(Error::invalid(format!(
                "expected {k} transition rows, got {}",
                transition_rows.len()
            )));
        }
        for (i, row) in transition_rows.iter().enumerate() {
            validate_simplex(row, k + 1, &format!("transition row {i}"))?;
        }
        validate_simplex(&shared_weights, k + 1, "shared weights")?;
        Ok(HmmDirectSolution {
            states,
            means,
            transition_rows,
            shared_weights,
        })
    }

    /// Construct without simplex/labeling validation (test helper).
    pub fn from_raw_parts(
        states: Vec<usize>,
        means: Vec<Vec<R>>,
        transition_rows: Vec<Vec<R>>,
        shared_weights: Vec<R>,
    ) -> Self {
        HmmDirectSolution {
            states,
            means,
            transition_rows,
            shared_weights,
        }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn means(&self) -> &[Vec<R>] {
        &self.means
    }

    pub fn transition_rows(&self) -> &[Vec<R>] {
        &self.transition_rows
    }

    pub fn shared_weights(&self) -> &[R] {
        &self.shared_weights
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }
}

fn validate_simplex<R: Real>(row: &[R], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::invalid(format!(
            "{what}: expected {len} entries, got {}",
            row.len()
        )));
    }
    if row.iter().any(|&p| !(p > R::zero()) || !p.is_finite()) {
        return Err(Error::invalid(format!(
            "{what}: entries must be strictly positive and finite"
        )));
    }
    let sum: R = row.iter().copied().sum();
    if (sum - R::one()).abs() > R::of(1e-12) {
        return Err(Error::invalid(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

/// Squared Euclidean distance, fused per coordinate.
pub fn squared_distance<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = R::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn squared_norm<R: Real>(a: &[R]) -> R {
    let mut acc = R::zero();
    for &x in a {
        acc += x * x;
    }
    acc
}

/// `m_i`: the number of distinct global clusters used by each group.
pub fn local_cluster_counts<R: Real>(clustering: &GroupedClustering<R>) -> Vec<usize> {
    clustering
        .assignments()
        .iter()
        .map(|group| {
            let mut seen = vec![false; clustering.k()];
            let mut count = 0;
            for &z in group {
                if !seen[z] {
                    seen[z] = true;
                    count += 1;
                }
            }
            count
        })
        .collect()
}

/// `s_i`: the number of distinct successor states observed out of each state.
pub fn distinct_transition_counts<R: Real>(solution: &HmmSolution<R>) -> Vec<usize> {
    distinct_transitions_of(solution.states(), solution.k())
}

pub(crate) fn distinct_transitions_of(states: &[usize], k: usize) -> Vec<usize> {
    let mut seen = vec![vec![false; k]; k];
    let mut counts = vec![0usize; k];
    for w in states.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !seen[a][b] {
            seen[a][b] = true;
            counts[a] += 1;
        }
    }
    counts
}

fn check_shapes<R: Real>(data_dim: usize, means: &[Vec<R>]) -> Result<()> {
    for m in means {
        if m.len() != data_dim {
            return Err(Error::DimensionMismatch {
                expected: data_dim,
                got: m.len(),
            });
        }
    }
    Ok(())
}

/// The grouped-mixture objective
/// `Σ_k Σ_{ij: z=k} ‖y − μ_k‖² + λ₁(K−1) + λ₂ Σ_i (m_i−1) + λ₃ Σ_k ‖μ_k‖²`.
pub fn hdp_mixture_objective<R: Real>(
    data: &GroupedDataset<R>,
    clustering: &GroupedClustering<R>,
    hp: &Hyperparams<R>,
) -> Result<R> {
    check_shapes(data.dim(), clustering.means())?;
    if clustering.assignments().len() != data.num_groups()
        || clustering
            .assignments()
            .iter()
            .zip(data.groups())
            .any(|(a, g)| a.len() != g.len())
    {
        return Err(Error::invalid(
            "assignment shape does not match dataset shape",
        ));
    }
    let mut quad = R::zero();
    for (i, j, y) in data.iter() {
        quad += squared_distance(y, &clustering.means()[clustering.assignments()[i][j]]);
    }
    let k = clustering.k();
    let m = local_cluster_counts(clustering);
    let local: usize = m.iter().map(|&mi| mi - 1).sum();
    let shrink: R = clustering.means().iter().map(|mu| squared_norm(mu)).sum();
    Ok(quad
        + hp.lambda1 * R::of_usize(k - 1)
        + hp.lambda2 * R::of_usize(local)
        + hp.lambda3 * shrink)
}

/// The combinatorial HMM objective
/// `Σ_t ‖y_t − μ_{z_t}‖² + λ₁(K−1) + λ₂ Σ_i (s_i−1) + λ₃ Σ_i ‖μ_i‖²`,
/// evaluated literally: a state with no outgoing transition contributes
/// `−λ₂`.
pub fn hdp_hmm_comb_objective<R: Real>(
    data: &SequenceDataset<R>,
    solution: &HmmSolution<R>,
    hp: &Hyperparams<R>,
) -> Result<R> {
    check_shapes(data.dim(), solution.means())?;
    if solution.states().len() != data.len() {
        return Err(Error::invalid("state path length does not match sequence"));
    }
    let mut quad = R::zero();
    for (y, &z) in data.observations().iter().zip(solution.states()) {
        quad += squared_distance(y, &solution.means()[z]);
    }
    let k = solution.k();
    let s = distinct_transition_counts(solution);
    // Σ (s_i − 1) as a signed sum: s_i = 0 is allowed for a terminal state.
    let trans = s.iter().map(|&si| si as i64 - 1).sum::<i64>();
    let shrink: R = solution.means().iter().map(|mu| squared_norm(mu)).sum();
    Ok(quad
        + hp.lambda1 * R::of_usize(k - 1)
        + hp.lambda2 * R::of(trans as f64)
        + hp.lambda3 * shrink)
}

/// `KL(p ‖ q) = Σ p_j ln(p_j / q_j)` with `0 ln 0 = 0`.
///
/// A zero in `q` facing positive mass in `p` makes the divergence `+∞`;
/// that sentinel is returned as-is, never clipped.
pub fn kl_divergence<R: Real>(p: &[R], q: &[R]) -> Result<R> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.iter().chain(q).any(|&x| x < R::zero() || x.is_nan()) {
        return Err(Error::domain("KL divergence needs non-negative inputs"));
    }
    let mut acc = R::zero();
    for (&pj, &qj) in p.iter().zip(q) {
        if pj == R::zero() {
            continue;
        }
        if qj == R::zero() {
            return Ok(R::infinity());
        }
        acc += pj * (pj / qj).ln();
    }
    Ok(acc)
}

/// The direct HMM objective
/// `Σ_t ‖y_t − μ_{z_t}‖² − ζ Σ_{t≥2} ln π_{z_{t−1} z_t} + λ₁K
///  + λ₂ Σ_i KL(β ‖ π_i) + λ₃ Σ_i ‖μ_i‖²`.
pub fn hdp_hmm_direct_objective<R: Real>(
    data: &SequenceDataset<R>,
    solution: &HmmDirectSolution<R>,
    hp: &Hyperparams<R>,
) -> Result<R> {
    check_shapes(data.dim(), solution.means())?;
    if solution.states().len() != data.len() {
        return Err(Error::invalid("state path length does not match sequence"));
    }
    let mut quad = R::zero();
    for (y, &z) in data.observations().iter().zip(solution.states()) {
        quad += squared_distance(y, &solution.means()[z]);
    }
    let mut trans = R::zero();
    for (step, w) in solution.states().windows(2).enumerate() {
        let p = solution.transition_rows()[w[0]][w[1]];
        if p == R::zero() {
            return Err(Error::ZeroTransition {
                step: step + 1,
                from: w[0],
                to: w[1],
            });
        }
        trans += p.ln();
    }
    let mut kl_sum = R::zero();
    for row in solution.transition_rows() {
        kl_sum += kl_divergence(solution.shared_weights(), row)?;
    }
    let shrink: R = solution.means().iter().map(|mu| squared_norm(mu)).sum();
    Ok(quad - hp.zeta * trans
        + hp.lambda1 * R::of_usize(solution.k())
        + hp.lambda2 * kl_sum
        + hp.lambda3 * shrink)
}
