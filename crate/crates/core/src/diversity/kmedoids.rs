//! K-medoids selection: exhaustive search for small instances, PAM
//! BUILD+SWAP above that.
//!
//! The pipeline's candidate counts never exceed nine, so the default path
//! is globally optimal by enumeration; the heuristic exists for larger
//! inputs and is held to the exhaustive optimum by tests.

use serde::{Deserialize, Serialize};

use super::{DistanceMatrix, DiversityError};

/// Threshold below which enumeration over all medoid subsets is used.
const EXHAUSTIVE_LIMIT: usize = 10;

/// A k-medoids solution. Medoid indices are distinct and sorted ascending;
/// every point is assigned to its nearest medoid with ties going to the
/// lowest medoid index; total cost is the sum of point-to-medoid distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidSelection {
    pub k: usize,
    pub medoid_indices: Vec<usize>,
    /// Cluster index (position in `medoid_indices`) per point.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

impl MedoidSelection {
    fn from_medoids(d: &DistanceMatrix, mut medoids: Vec<usize>) -> Self {
        medoids.sort_unstable();
        let (assignment, total_cost) = assign(d, &medoids);
        Self {
            k: medoids.len(),
            medoid_indices: medoids,
            assignment,
            total_cost,
        }
    }

    /// Point indices belonging to cluster `c`.
    pub fn cluster_members(&self, c: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| i)
            .collect()
    }
}

fn assign(d: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut assignment = Vec::with_capacity(d.len());
    let mut total = 0.0;
    for i in 0..d.len() {
        let mut best = 0;
        let mut best_dist = d.get(i, medoids[0]);
        for (c, &m) in medoids.iter().enumerate().skip(1) {
            let dist = d.get(i, m);
            if dist < best_dist {
                best = c;
                best_dist = dist;
            }
        }
        assignment.push(best);
        total += best_dist;
    }
    (assignment, total)
}

fn cost_of(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..d.len() {
        let mut best = f64::INFINITY;
        for &m in medoids {
            let dist = d.get(i, m);
            if dist < best {
                best = dist;
            }
        }
        total += best;
    }
    total
}

/// Cluster into k medoids: exhaustive below [`EXHAUSTIVE_LIMIT`] points,
/// PAM BUILD+SWAP otherwise. The seed is accepted for interface stability;
/// both paths are deterministic.
pub fn k_medoids(
    d: &DistanceMatrix,
    k: usize,
    _seed: u64,
) -> Result<MedoidSelection, DiversityError> {
    if d.len() <= EXHAUSTIVE_LIMIT {
        k_medoids_exhaustive(d, k)
    } else {
        k_medoids_pam(d, k)
    }
}

/// Globally optimal medoids by enumerating all C(n, k) subsets in
/// lexicographic order; ties keep the lexicographically smallest index set.
pub fn k_medoids_exhaustive(
    d: &DistanceMatrix,
    k: usize,
) -> Result<MedoidSelection, DiversityError> {
    let n = d.len();
    check_k(k, n)?;
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = subset.clone();
    let mut best_cost = cost_of(d, &subset);
    while next_combination(&mut subset, n) {
        let cost = cost_of(d, &subset);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&subset);
        }
    }
    Ok(MedoidSelection::from_medoids(d, best))
}

/// PAM with a small deterministic multi-start schedule: greedy BUILD plus
/// farthest-point inits seeded from the best singleton medoids, each
/// refined by best-improvement SWAP. The cheapest local optimum wins.
pub fn k_medoids_pam(d: &DistanceMatrix, k: usize) -> Result<MedoidSelection, DiversityError> {
    let n = d.len();
    check_k(k, n)?;
    let mut seeds_by_singleton_cost: Vec<usize> = (0..n).collect();
    seeds_by_singleton_cost.sort_by(|&a, &b| {
        cost_of(d, &[a])
            .partial_cmp(&cost_of(d, &[b]))
            .expect("finite distances")
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |medoids: Vec<usize>| {
        let refined = swap_to_local_optimum(d, medoids);
        let cost = cost_of(d, &refined);
        let mut sorted = refined;
        sorted.sort_unstable();
        let better = match &best {
            None => true,
            Some((best_cost, best_set)) => {
                cost < best_cost - 1e-15
                    || ((cost - best_cost).abs() <= 1e-15 && sorted < *best_set)
            }
        };
        if better {
            best = Some((cost, sorted));
        }
    };

    consider(build_init(d, k));
    for &seed in seeds_by_singleton_cost.iter().take(5.min(n)) {
        consider(farthest_point_init(d, k, seed));
    }
    let (_, medoids) = best.expect("at least one start");
    Ok(MedoidSelection::from_medoids(d, medoids))
}

/// Greedy BUILD: start from the 1-medoid optimum, then add the point that
/// lowers total cost the most.
fn build_init(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest: Vec<f64> = vec![f64::INFINITY; n];
    let first = (0..n)
        .min_by(|&a, &b| {
            cost_of(d, &[a])
                .partial_cmp(&cost_of(d, &[b]))
                .expect("finite distances")
        })
        .expect("nonempty");
    medoids.push(first);
    for (i, near) in nearest.iter_mut().enumerate() {
        *near = d.get(i, first);
    }
    while medoids.len() < k {
        let mut best_candidate = None;
        let mut best_gain = f64::NEG_INFINITY;
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = (0..n).map(|i| (nearest[i] - d.get(i, c)).max(0.0)).sum();
            if gain > best_gain {
                best_gain = gain;
                best_candidate = Some(c);
            }
        }
        let chosen = best_candidate.expect("k <= n leaves a candidate");
        medoids.push(chosen);
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d.get(i, chosen));
        }
    }
    medoids
}

/// Farthest-point start from a given seed point: repeatedly add the point
/// farthest from its nearest chosen medoid.
fn farthest_point_init(d: &DistanceMatrix, k: usize, seed_point: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids = vec![seed_point];
    let mut nearest: Vec<f64> = (0..n).map(|i| d.get(i, seed_point)).collect();
    while medoids.len() < k {
        let chosen = (0..n)
            .filter(|c| !medoids.contains(c))
            .max_by(|&a, &b| nearest[a].partial_cmp(&nearest[b]).expect("finite"))
            .expect("k <= n leaves a candidate");
        medoids.push(chosen);
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d.get(i, chosen));
        }
    }
    medoids
}

/// Per-point nearest/second-nearest medoid distances, for O(n) swap deltas.
struct SwapState {
    nearest_pos: Vec<usize>,
    nearest_d: Vec<f64>,
    second_d: Vec<f64>,
}

fn swap_state(d: &DistanceMatrix, medoids: &[usize]) -> SwapState {
    let n = d.len();
    let mut nearest_pos = vec![0usize; n];
    let mut nearest_d = vec![f64::INFINITY; n];
    let mut second_d = vec![f64::INFINITY; n];
    for i in 0..n {
        for (pos, &m) in medoids.iter().enumerate() {
            let dist = d.get(i, m);
            if dist < nearest_d[i] {
                second_d[i] = nearest_d[i];
                nearest_d[i] = dist;
                nearest_pos[i] = pos;
            } else if dist < second_d[i] {
                second_d[i] = dist;
            }
        }
    }
    SwapState {
        nearest_pos,
        nearest_d,
        second_d,
    }
}

/// Cost change of replacing the medoid at `m_pos` with `candidate`.
fn swap_delta(d: &DistanceMatrix, state: &SwapState, m_pos: usize, candidate: usize) -> f64 {
    let mut delta = 0.0;
    for i in 0..d.len() {
        let dic = d.get(i, candidate);
        if state.nearest_pos[i] == m_pos {
            delta += dic.min(state.second_d[i]) - state.nearest_d[i];
        } else if dic < state.nearest_d[i] {
            delta += dic - state.nearest_d[i];
        }
    }
    delta
}

/// Best-improvement SWAP until no medoid/non-medoid exchange lowers the
/// cost.
fn swap_to_local_optimum(d: &DistanceMatrix, mut medoids: Vec<usize>) -> Vec<usize> {
    let n = d.len();
    loop {
        let state = swap_state(d, &medoids);
        let mut best_swap: Option<(usize, usize, f64)> = None;
        for m_pos in 0..medoids.len() {
            for candidate in 0..n {
                if medoids.contains(&candidate) {
                    continue;
                }
                let delta = swap_delta(d, &state, m_pos, candidate);
                if delta < -1e-15 {
                    match best_swap {
                        Some((_, _, best_delta)) if delta >= best_delta => {}
                        _ => best_swap = Some((m_pos, candidate, delta)),
                    }
                }
            }
        }
        match best_swap {
            Some((m_pos, candidate, _)) => medoids[m_pos] = candidate,
            None => break,
        }
    }
    medoids
}

fn check_k(k: usize, n: usize) -> Result<(), DiversityError> {
    if k == 0 || k > n {
        return Err(DiversityError::KExceedsN { k, n });
    }
    Ok(())
}

/// Advance to the next k-combination of 0..n in lexicographic order.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
