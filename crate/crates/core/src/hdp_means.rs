//! Coordinate descent for the grouped-mixture objective — a grouped
//! generalization of DP-means.
//!
//! A sweep visits observations in input order (groups in input order,
//! observations in input order within each group; results are
//! order-dependent and documented as such) and reassigns each to the
//! option with the smallest exact objective delta:
//!
//! * a cluster already used in the observation's group — pure quadratic
//!   change;
//! * a cluster not yet used in the group — quadratic change plus `λ₂`;
//! * a fresh cluster at the ridge-shrunk mean `y/(1+λ₃)` — shrunk residual
//!   plus `λ₁ + λ₂ + λ₃‖μ_new‖²`.
//!
//! Removal deltas reclaim `λ₂` when the group loses its last copy of a dish
//! and `λ₁ + λ₃‖μ‖²` when a cluster empties globally; empty clusters are
//! dropped on the spot and labels compacted. Ties go to the lowest cluster
//! index, and opening a fresh cluster loses ties to every existing option,
//! so a run is fully deterministic.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::objectives::{
    hdp_mixture_objective, squared_distance, GroupedClustering, GroupedDataset, Hyperparams,
};
use crate::options::FitOptions;
use crate::scalar::Real;

/// Working state of a fit: assignments, means, and the count structures
/// needed for exact O(1) penalty deltas.
#[derive(Debug, Clone)]
pub struct MeansState<R> {
    assignments: Vec<Vec<usize>>,
    means: Vec<Vec<R>>,
    /// Global member count per cluster.
    sizes: Vec<usize>,
    /// Members of each cluster per group (N × K).
    group_counts: Vec<Vec<usize>>,
}

impl<R: Real> MeansState<R> {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn means(&self) -> &[Vec<R>] {
        &self.means
    }

    pub fn to_clustering(&self) -> Result<GroupedClustering<R>> {
        GroupedClustering::new(self.assignments.clone(), self.means.clone())
    }

    pub fn objective(&self, data: &GroupedDataset<R>, hp: &Hyperparams<R>) -> Result<R> {
        hdp_mixture_objective(data, &self.to_clustering()?, hp)
    }

    fn remove_cluster(&mut self, k: usize) {
        self.means.remove(k);
        self.sizes.remove(k);
        for row in &mut self.group_counts {
            row.remove(k);
        }
        for group in &mut self.assignments {
            for z in group.iter_mut() {
                if *z > k {
                    *z -= 1;
                }
            }
        }
    }
}

/// Everything starts in a single global cluster whose mean is the ridge
/// mean `Σy / (n + λ₃)` of the whole dataset.
pub fn init_state<R: Real>(data: &GroupedDataset<R>, hp: &Hyperparams<R>) -> MeansState<R> {
    let n = data.total_observations();
    let mut sum = vec![R::zero(); data.dim()];
    for (_, _, y) in data.iter() {
        for (s, &v) in sum.iter_mut().zip(y) {
            *s += v;
        }
    }
    let denom = R::of_usize(n) + hp.lambda3;
    let mean: Vec<R> = sum.into_iter().map(|s| s / denom).collect();
    MeansState {
        assignments: data.groups().iter().map(|g| vec![0; g.len()]).collect(),
        means: vec![mean],
        sizes: vec![n],
        group_counts: data.groups().iter().map(|g| vec![g.len()]).collect(),
    }
}

/// Seeded k-means++-style initialization used by restarts beyond the first:
/// `centers` observations are drawn by squared-distance weighting, every
/// observation joins its nearest center, and empty centers are dropped.
fn init_state_seeded<R: Real>(
    data: &GroupedDataset<R>,
    hp: &Hyperparams<R>,
    centers: usize,
    rng: &mut ChaCha8Rng,
) -> MeansState<R> {
    let all: Vec<&[R]> = data.iter().map(|(_, _, y)| y).collect();
    let centers = centers.min(all.len()).max(1);
    let mut chosen: Vec<Vec<R>> = vec![all[rng.random_range(0..all.len())].to_vec()];
    while chosen.len() < centers {
        let weights: Vec<f64> = all
            .iter()
            .map(|y| {
                chosen
                    .iter()
                    .map(|c| squared_distance(y, c).as_f64())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            break; // all points coincide with a chosen center
        }
        let mut u = rng.random_range(0.0..total);
        let mut pick = 0;
        for (idx, &w) in weights.iter().enumerate() {
            if u < w {
                pick = idx;
                break;
            }
            u -= w;
        }
        chosen.push(all[pick].to_vec());
    }

    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(data.num_groups());
    for group in data.groups() {
        assignments.push(
            group
                .iter()
                .map(|y| {
                    let mut best = (R::infinity(), 0usize);
                    for (k, c) in chosen.iter().enumerate() {
                        let d = squared_distance(y, c);
                        if d < best.0 {
                            best = (d, k);
                        }
                    }
                    best.1
                })
                .collect(),
        );
    }

    let mut state = rebuild_state(data, assignments, chosen.len());
    update_means(&mut state, data, hp);
    // Ridge means can leave a center unused; compact those labels away.
    let mut k = 0;
    while k < state.k() {
        if state.sizes[k] == 0 {
            state.remove_cluster(k);
        } else {
            k += 1;
        }
    }
    state
}

fn rebuild_state<R: Real>(
    data: &GroupedDataset<R>,
    assignments: Vec<Vec<usize>>,
    k: usize,
) -> MeansState<R> {
    let mut sizes = vec![0usize; k];
    let mut group_counts = vec![vec![0usize; k]; data.num_groups()];
    for (i, group) in assignments.iter().enumerate() {
        for &z in group {
            sizes[z] += 1;
            group_counts[i][z] += 1;
        }
    }
    MeansState {
        assignments,
        means: vec![vec![R::zero(); data.dim()]; k],
        sizes,
        group_counts,
    }
}

/// One full assignment sweep in scan order. Returns the number of moved
/// observations.
pub fn assignment_sweep<R: Real>(
    state: &mut MeansState<R>,
    data: &GroupedDataset<R>,
    hp: &Hyperparams<R>,
) -> usize {
    let shrink_denom = R::one() + hp.lambda3;
    let mut moves = 0;
    for i in 0..data.num_groups() {
        for j in 0..data.group_len(i) {
            let y = data.observation(i, j);
            let old = state.assignments[i][j];

            // Cost reclaimed by plucking the observation out of its cluster.
            let mut removal = -squared_distance(y, &state.means[old]);
            let empties_cluster = state.sizes[old] == 1;
            let leaves_group = state.group_counts[i][old] == 1;
            if leaves_group {
                removal -= hp.lambda2;
            }
            if empties_cluster {
                removal -= hp.lambda1 + hp.lambda3 * norm2(&state.means[old]);
            }

            // Existing clusters, lowest index winning ties; staying is the
            // exact zero delta.
            let mut best_delta = R::zero();
            let mut best: Move = Move::Stay;
            for k in 0..state.k() {
                if k == old {
                    continue;
                }
                let mut delta = removal + squared_distance(y, &state.means[k]);
                if state.group_counts[i][k] == 0 {
                    delta += hp.lambda2;
                }
                let better = delta < best_delta
                    || (delta == best_delta && matches!(best, Move::Stay) && k < old);
                if better {
                    best_delta = delta;
                    best = Move::Existing(k);
                }
            }

            // Fresh cluster at the ridge-shrunk mean y/(1+λ₃); it loses ties.
            let shrunk_cost = hp.lambda3 * norm2(y) / shrink_denom;
            let fresh_delta = removal + shrunk_cost + hp.lambda1 + hp.lambda2;
            if fresh_delta < best_delta {
                best_delta = fresh_delta;
                best = Move::Fresh;
            }

            match best {
                Move::Stay => {}
                Move::Existing(k) => {
                    state.assignments[i][j] = k;
                    state.sizes[old] -= 1;
                    state.group_counts[i][old] -= 1;
                    state.sizes[k] += 1;
                    state.group_counts[i][k] += 1;
                    if state.sizes[old] == 0 {
                        state.remove_cluster(old);
                    }
                    moves += 1;
                }
                Move::Fresh => {
                    let fresh = state.k();
                    state.means.push(y.iter().map(|&v| v / shrink_denom).collect());
                    state.sizes.push(0);
                    for row in &mut state.group_counts {
                        row.push(0);
                    }
                    state.assignments[i][j] = fresh;
                    state.sizes[old] -= 1;
                    state.group_counts[i][old] -= 1;
                    *state.sizes.last_mut().unwrap() += 1;
                    *state.group_counts[i].last_mut().unwrap() += 1;
                    if state.sizes[old] == 0 {
                        state.remove_cluster(old);
                    }
                    moves += 1;
                }
            }
        }
    }
    moves
}

enum Move {
    Stay,
    Existing(usize),
    Fresh,
}

fn norm2<R: Real>(v: &[R]) -> R {
    let mut acc = R::zero();
    for &x in v {
        acc += x * x;
    }
    acc
}

/// Ridge mean update `μ_k = Σ_{z=k} y / (n_k + λ₃)`, the unique minimizer
/// of `Σ ‖y − μ_k‖² + λ₃‖μ_k‖²` per cluster. Sums are recomputed from the
/// assignments so float drift cannot accumulate across sweeps.
pub fn update_means<R: Real>(
    state: &mut MeansState<R>,
    data: &GroupedDataset<R>,
    hp: &Hyperparams<R>,
) {
    let k = state.k();
    let dim = data.dim();
    let mut sums = vec![vec![R::zero(); dim]; k];
    for (i, group) in state.assignments.iter().enumerate() {
        for (j, &z) in group.iter().enumerate() {
            for (s, &v) in sums[z].iter_mut().zip(data.observation(i, j)) {
                *s += v;
            }
        }
    }
    for (kk, sum) in sums.into_iter().enumerate() {
        if state.sizes[kk] == 0 {
            continue;
        }
        let denom = R::of_usize(state.sizes[kk]) + hp.lambda3;
        state.means[kk] = sum.into_iter().map(|s| s / denom).collect();
    }
}

/// Fit by repeated assignment sweeps and ridge mean updates.
///
/// Returns the clustering together with the objective value recorded after
/// each full sweep; the trace is non-increasing. With `restarts > 1` the
/// best final objective wins, earliest restart breaking ties.
pub fn fit_hdp_means<R: Real>(
    data: &GroupedDataset<R>,
    hp: &Hyperparams<R>,
    opts: &FitOptions,
) -> Result<(GroupedClustering<R>, Vec<R>)> {
    opts.validate()?;
    let mut best: Option<(GroupedClustering<R>, Vec<R>, R)> = None;
    for restart in 0..opts.restarts {
        let state = if restart == 0 {
            init_state(data, hp)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(restart as u64));
            init_state_seeded(data, hp, restart + 1, &mut rng)
        };
        let (clustering, trace) = run_descent(state, data, hp, opts)?;
        let objective = *trace.last().expect("trace has at least one entry");
        let replace = match &best {
            None => true,
            Some((_, _, incumbent)) => objective < *incumbent,
        };
        if replace {
            best = Some((clustering, trace, objective));
        }
    }
    let (clustering, trace, _) = best.expect("at least one restart");
    Ok((clustering, trace))
}

fn run_descent<R: Real>(
    mut state: MeansState<R>,
    data: &GroupedDataset<R>,
    hp: &Hyperparams<R>,
    opts: &FitOptions,
) -> Result<(GroupedClustering<R>, Vec<R>)> {
    let tol = R::of(opts.tol);
    let monotone_tol = R::of(1e-9);
    let mut trace = Vec::new();
    let mut prev = state.objective(data, hp)?;
    for _sweep in 0..opts.max_sweeps {
        let before_assign = prev;
        let moves = assignment_sweep(&mut state, data, hp);
        let after_assign = state.objective(data, hp)?;
        assert!(
            after_assign <= before_assign + monotone_tol,
            "assignment sweep increased the objective: {before_assign} -> {after_assign}"
        );
        update_means(&mut state, data, hp);
        let after_means = state.objective(data, hp)?;
        assert!(
            after_means <= after_assign + monotone_tol,
            "mean update increased the objective: {after_assign} -> {after_means}"
        );
        trace.push(after_means);
        let improved = prev - after_means;
        prev = after_means;
        if moves == 0 || improved < tol {
            break;
        }
    }
    if trace.is_empty() {
        trace.push(prev);
    }
    Ok((state.to_clustering()?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(l1: f64, l2: f64, l3: f64) -> Hyperparams<f64> {
        Hyperparams::new(l1, l2, l3).unwrap()
    }

    fn dataset(groups: Vec<Vec<Vec<f64>>>) -> GroupedDataset<f64> {
        GroupedDataset::new(groups).unwrap()
    }

    #[test]
    fn single_point_is_its_own_cluster_at_zero_objective() {
        let data = dataset(vec![vec![vec![2.5, -1.0]]]);
        let h = hp(1.0, 1.0, 0.0);
        let (clustering, trace) = fit_hdp_means(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(clustering.k(), 1);
        assert_eq!(clustering.means()[0], vec![2.5, -1.0]);
        assert!(trace.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn update_means_is_ridge_shrunk() {
        let data = dataset(vec![vec![vec![3.0]]]);
        let h = hp(1.0, 1.0, 1.0);
        let mut state = init_state(&data, &h);
        update_means(&mut state, &data, &h);
        // Single point y with λ3 = 1: μ = y/2.
        assert!((state.means()[0][0] - 1.5).abs() < 1e-15);

        let h0 = hp(1.0, 1.0, 0.0);
        let data2 = dataset(vec![vec![vec![1.0], vec![3.0]]]);
        let mut state2 = init_state(&data2, &h0);
        update_means(&mut state2, &data2, &h0);
        assert!((state2.means()[0][0] - 2.0).abs() < 1e-15, "plain centroid");
    }

    #[test]
    fn isolated_singleton_does_not_move() {
        // Two far-apart singleton clusters, means already at the points.
        let data = dataset(vec![vec![vec![0.0], vec![100.0]]]);
        let h = hp(1.0, 1.0, 0.0);
        let mut state = init_state(&data, &h);
        // Drive to the two-cluster solution first.
        for _ in 0..5 {
            assignment_sweep(&mut state, &data, &h);
            update_means(&mut state, &data, &h);
        }
        assert_eq!(state.k(), 2);
        let before = state.assignments().to_vec();
        let moves = assignment_sweep(&mut state, &data, &h);
        assert_eq!(moves, 0);
        assert_eq!(state.assignments(), &before[..]);
    }

    #[test]
    fn sweep_never_increases_objective() {
        let data = dataset(vec![
            vec![vec![0.1], vec![0.2], vec![5.0], vec![5.2]],
            vec![vec![0.15], vec![4.9]],
        ]);
        let h = hp(2.0, 0.5, 0.1);
        let mut state = init_state(&data, &h);
        for _ in 0..10 {
            let before = state.objective(&data, &h).unwrap();
            assignment_sweep(&mut state, &data, &h);
            let mid = state.objective(&data, &h).unwrap();
            assert!(mid <= before + 1e-9);
            update_means(&mut state, &data, &h);
            let after = state.objective(&data, &h).unwrap();
            assert!(after <= mid + 1e-9);
        }
    }

    #[test]
    fn trace_is_non_increasing_and_fit_deterministic() {
        let data = dataset(vec![
            vec![vec![0.0, 0.0], vec![0.3, -0.1], vec![6.0, 6.2]],
            vec![vec![6.1, 5.9], vec![0.2, 0.1], vec![12.0, -7.0]],
        ]);
        let h = hp(3.0, 1.0, 0.05);
        let opts = FitOptions {
            restarts: 3,
            seed: 7,
            ..FitOptions::default()
        };
        let (c1, t1) = fit_hdp_means(&data, &h, &opts).unwrap();
        let (c2, t2) = fit_hdp_means(&data, &h, &opts).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(t1, t2);
        for w in t1.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn well_separated_planted_clusters_recovered() {
        // Three planted centers, noise bounded well below the penalties.
        let centers = [-30.0, 0.0, 30.0];
        let noise = [-0.4, 0.1, 0.3, -0.2];
        let mut g1 = Vec::new();
        let mut g2 = Vec::new();
        for (ci, &c) in centers.iter().enumerate() {
            for (ni, &n) in noise.iter().enumerate() {
                let y = vec![c + n];
                if (ci + ni) % 2 == 0 {
                    g1.push(y);
                } else {
                    g2.push(y);
                }
            }
        }
        let data = dataset(vec![g1.clone(), g2.clone()]);
        let h = hp(12.0, 4.0, 0.0);
        let (clustering, _) = fit_hdp_means(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(clustering.k(), 3);
        // Points from the same planted center share a label.
        let label_of = |y: f64| -> usize {
            let (i, _) = clustering
                .means()
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (a[0] - y).abs().partial_cmp(&(b[0] - y).abs()).unwrap()
                })
                .unwrap();
            i
        };
        for (i, group) in data.groups().iter().enumerate() {
            for (j, y) in group.iter().enumerate() {
                assert_eq!(clustering.assignments()[i][j], label_of(y[0]));
            }
        }
    }

    #[test]
    fn duplicate_points_and_one_point_groups_are_fine() {
        let data = dataset(vec![
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![vec![1.0]],
        ]);
        let h = hp(1.0, 1.0, 0.0);
        let (clustering, trace) = fit_hdp_means(&data, &h, &FitOptions::default()).unwrap();
        assert_eq!(clustering.k(), 1);
        assert!(trace.last().unwrap().abs() < 1e-12);
    }
}
