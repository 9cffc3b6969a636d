//! Partitioning Around Medoids over a precomputed dissimilarity matrix.
//!
//! BUILD seeds the medoid set greedily; SWAP is steepest descent over all
//! (medoid, non-medoid) exchanges with deterministic tie-breaking, so a
//! given matrix always yields the same trajectory. Multi-restart search
//! keeps the first restart deterministic (BUILD) and draws the remaining
//! initializations from per-restart seeded RNG streams.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gower::DissimilarityMatrix;
use crate::scalar::Scalar;
use crate::seed::{self, stream};

/// A fitted k-medoids partition. Medoids are stored in ascending row order
/// and cluster ids are their positions in that order, so labels are stable
/// across runs and machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition<T> {
    pub k: usize,
    pub medoids: Vec<usize>,
    pub labels: Vec<u32>,
    pub energy: T,
    pub restarts_used: usize,
    pub seed: u64,
}

impl<T: Scalar> Partition<T> {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Members of cluster `c`.
    pub fn cluster_members(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cluster of the medoid nearest to a new point, given that point's
    /// dissimilarities to all n training rows. Ties pick the lowest medoid
    /// row index.
    pub fn assign_nearest_medoid(&self, dists: &[T]) -> Result<usize> {
        if dists.len() != self.n() {
            return Err(Error::invalid(format!(
                "expected {} dissimilarities, got {}",
                self.n(),
                dists.len()
            )));
        }
        Ok(self.assign_from_medoid_dists(
            &self
                .medoids
                .iter()
                .map(|&m| dists[m])
                .collect::<Vec<_>>(),
        ))
    }

    /// Same as [`Partition::assign_nearest_medoid`] but with one
    /// dissimilarity per medoid, in medoid order.
    pub fn assign_from_medoid_dists(&self, dists: &[T]) -> usize {
        debug_assert_eq!(dists.len(), self.k);
        let mut best = 0usize;
        for (c, &d) in dists.iter().enumerate().skip(1) {
            if d < dists[best] {
                best = c;
            }
        }
        best
    }

    fn validate(&self, m: &DissimilarityMatrix<T>) -> Result<()> {
        let recomputed: T = (0..self.n())
            .map(|i| {
                self.medoids
                    .iter()
                    .map(|&med| m.get(i, med))
                    .fold(T::infinity(), T::min)
            })
            .sum();
        if (recomputed - self.energy).abs() > T::c(1e-12) * T::one().max(self.energy) {
            return Err(Error::numerical(format!(
                "partition energy {} disagrees with recomputed {}",
                self.energy.to_f64_lossy(),
                recomputed.to_f64_lossy()
            )));
        }
        for c in 0..self.k {
            if !self.labels.iter().any(|&l| l as usize == c) {
                return Err(Error::numerical(format!("cluster {c} is empty")));
            }
        }
        Ok(())
    }
}

/// Nearest-medoid labels for `medoids` (ascending order expected).
fn labels_for<T: Scalar>(m: &DissimilarityMatrix<T>, medoids: &[usize]) -> Vec<u32> {
    (0..m.n())
        .map(|i| {
            let mut best = 0usize;
            for (c, &med) in medoids.iter().enumerate().skip(1) {
                if m.get(i, med) < m.get(i, medoids[best]) {
                    best = c;
                }
            }
            best as u32
        })
        .collect()
}

fn energy_for<T: Scalar>(m: &DissimilarityMatrix<T>, medoids: &[usize]) -> T {
    (0..m.n())
        .map(|i| {
            medoids
                .iter()
                .map(|&med| m.get(i, med))
                .fold(T::infinity(), T::min)
        })
        .sum()
}

/// Build a partition around a fixed medoid set (sorted internally).
pub fn partition_from_medoids<T: Scalar>(
    m: &DissimilarityMatrix<T>,
    medoids: &[usize],
    seed: u64,
) -> Partition<T> {
    let mut meds = medoids.to_vec();
    meds.sort_unstable();
    let labels = labels_for(m, &meds);
    let energy = energy_for(m, &meds);
    Partition {
        k: meds.len(),
        medoids: meds,
        labels,
        energy,
        restarts_used: 0,
        seed,
    }
}

/// Greedy BUILD phase. The first medoid minimizes total dissimilarity to
/// all points; each later one maximizes the drop in total nearest-medoid
/// distance. Deterministic; ties pick the lowest row index.
pub fn pam_build<T: Scalar>(m: &DissimilarityMatrix<T>, k: usize) -> Result<Vec<usize>> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside 1..={n}")));
    }
    let mut medoids = Vec::with_capacity(k);
    let mut first = 0usize;
    let mut first_cost = T::infinity();
    for i in 0..n {
        let cost: T = (0..n).map(|j| m.get(i, j)).sum();
        if cost < first_cost {
            first_cost = cost;
            first = i;
        }
    }
    medoids.push(first);
    let mut d_near: Vec<T> = (0..n).map(|j| m.get(j, first)).collect();

    while medoids.len() < k {
        let mut best = None;
        let mut best_gain = T::neg_infinity();
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let mut gain = T::zero();
            for j in 0..n {
                let drop = d_near[j] - m.get(j, c);
                if drop > T::zero() {
                    gain += drop;
                }
            }
            if gain > best_gain {
                best_gain = gain;
                best = Some(c);
            }
        }
        let c = best.expect("candidate remains while medoids < k <= n");
        for j in 0..n {
            let d = m.get(j, c);
            if d < d_near[j] {
                d_near[j] = d;
            }
        }
        medoids.push(c);
    }
    medoids.sort_unstable();
    Ok(medoids)
}

/// Steepest-descent SWAP phase: applies the single best
/// (medoid, non-medoid) exchange until none decreases the energy. The
/// returned energy trace is strictly decreasing; iterations are capped at
/// `10 * n` to guard against cycling on floating-point ties.
pub fn pam_swap<T: Scalar>(
    m: &DissimilarityMatrix<T>,
    medoids: &[usize],
) -> Result<Partition<T>> {
    let n = m.n();
    let k = medoids.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside 1..={n}")));
    }
    let mut meds = medoids.to_vec();
    meds.sort_unstable();
    let mut energy = energy_for(m, &meds);
    let cap = 10 * n.max(1);
    let mut iters = 0usize;

    loop {
        iters += 1;
        if iters > cap {
            return Err(Error::numerical(format!(
                "SWAP did not converge within {cap} iterations"
            )));
        }
        // Nearest / second-nearest medoid distance per point.
        let mut near_pos = vec![0usize; n];
        let mut d_near = vec![T::infinity(); n];
        let mut d_sec = vec![T::infinity(); n];
        for j in 0..n {
            for (pos, &med) in meds.iter().enumerate() {
                let d = m.get(j, med);
                if d < d_near[j] {
                    d_sec[j] = d_near[j];
                    d_near[j] = d;
                    near_pos[j] = pos;
                } else if d < d_sec[j] {
                    d_sec[j] = d;
                }
            }
        }

        let mut best_delta = T::zero();
        let mut best_swap: Option<(usize, usize)> = None; // (medoid pos, candidate row)
        let is_medoid = {
            let mut f = vec![false; n];
            for &med in &meds {
                f[med] = true;
            }
            f
        };
        for (pos, _) in meds.iter().enumerate() {
            for c in 0..n {
                if is_medoid[c] {
                    continue;
                }
                let mut delta = T::zero();
                for j in 0..n {
                    let djc = m.get(j, c);
                    if near_pos[j] == pos {
                        delta += djc.min(d_sec[j]) - d_near[j];
                    } else if djc < d_near[j] {
                        delta += djc - d_near[j];
                    }
                }
                if delta < best_delta {
                    best_delta = delta;
                    best_swap = Some((pos, c));
                }
            }
        }

        let Some((pos, c)) = best_swap else { break };
        let old = meds.clone();
        meds[pos] = c;
        meds.sort_unstable();
        let new_energy = energy_for(m, &meds);
        if new_energy < energy {
            energy = new_energy;
        } else {
            meds = old;
            break;
        }
    }

    let labels = labels_for(m, &meds);
    let part = Partition {
        k,
        medoids: meds,
        labels,
        energy,
        restarts_used: 1,
        seed: 0,
    };
    part.validate(m)?;
    Ok(part)
}

/// Multi-restart PAM. Restart 0 starts from BUILD; later restarts start
/// from uniformly random medoid sets drawn from per-restart seeded streams.
/// Returns the first restart attaining the minimal final energy, so the
/// result is independent of how restarts are scheduled.
pub fn pam_fit<T: Scalar>(
    m: &DissimilarityMatrix<T>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Partition<T>> {
    if restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let n = m.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside 1..={n}")));
    }
    let fits: Vec<Result<Partition<T>>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                pam_build(m, k)?
            } else {
                let mut rng = seed::rng(seed, stream::PAM_RESTART, r as u64);
                let mut meds: Vec<usize> = sample(&mut rng, n, k).into_iter().collect();
                meds.sort_unstable();
                meds
            };
            pam_swap(m, &start)
        })
        .collect();

    let mut best: Option<Partition<T>> = None;
    for fit in fits {
        let fit = fit?;
        match &best {
            Some(b) if fit.energy >= b.energy => {}
            _ => best = Some(fit),
        }
    }
    let mut part = best.expect("restarts >= 1");
    part.restarts_used = restarts;
    part.seed = seed;
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn matrix_from(vals: Array2<f64>) -> DissimilarityMatrix<f64> {
        DissimilarityMatrix::from_values(vals, vec![], false).unwrap()
    }

    fn random_matrix(n: usize, seed: u64) -> DissimilarityMatrix<f64> {
        let mut rng = seed::rng(seed, 99, 0);
        let mut vals = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.gen();
                vals[(i, j)] = v;
                vals[(j, i)] = v;
            }
        }
        matrix_from(vals)
    }

    fn brute_force_energy(m: &DissimilarityMatrix<f64>, k: usize) -> f64 {
        fn rec(
            m: &DissimilarityMatrix<f64>,
            k: usize,
            start: usize,
            picked: &mut Vec<usize>,
            best: &mut f64,
        ) {
            if picked.len() == k {
                let e = energy_for(m, picked);
                if e < *best {
                    *best = e;
                }
                return;
            }
            for i in start..m.n() {
                picked.push(i);
                rec(m, k, i + 1, picked, best);
                picked.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(m, k, 0, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn build_k1_picks_central_point() {
        // Three collinear points 0 -- 1 -- 2 with the middle equidistant.
        let m = matrix_from(ndarray::array![
            [0.0, 0.5, 1.0],
            [0.5, 0.0, 0.5],
            [1.0, 0.5, 0.0]
        ]);
        let meds = pam_build(&m, 1).unwrap();
        assert_eq!(meds, vec![1]);
    }

    #[test]
    fn k_equals_n_gives_zero_energy() {
        let m = random_matrix(5, 3);
        let meds = pam_build(&m, 5).unwrap();
        let part = pam_swap(&m, &meds).unwrap();
        assert_eq!(part.energy, 0.0);
        assert_eq!(part.medoids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn build_two_blobs_finds_blob_centers() {
        // Points 0-2 mutually close, 3-5 mutually close, blobs far apart.
        let mut vals = Array2::<f64>::zeros((6, 6));
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let same = (i < 3) == (j < 3);
                vals[(i, j)] = if same { 0.1 } else { 0.9 };
            }
        }
        // Make 1 and 4 the blob centers.
        for &(a, b) in &[(0usize, 1usize), (1, 2), (3, 4), (4, 5)] {
            vals[(a, b)] = 0.05;
            vals[(b, a)] = 0.05;
        }
        let m = matrix_from(vals);
        let meds = pam_build(&m, 2).unwrap();
        let part = pam_swap(&m, &meds).unwrap();
        let bf = brute_force_energy(&m, 2);
        assert!((part.energy - bf).abs() < 1e-12);
        assert_eq!(part.medoids, vec![1, 4]);
    }

    #[test]
    fn swap_never_increases_build_energy() {
        for s in 0..20 {
            let m = random_matrix(8, s);
            let meds = pam_build(&m, 3).unwrap();
            let build_energy = energy_for(&m, &meds);
            let part = pam_swap(&m, &meds).unwrap();
            assert!(part.energy <= build_energy + 1e-15);
        }
    }

    #[test]
    fn swap_reaches_global_optimum_on_small_instances() {
        for s in 0..30 {
            let m = random_matrix(8, 1000 + s);
            let part = pam_fit(&m, 2, 10, s).unwrap();
            let bf = brute_force_energy(&m, 2);
            assert!(part.energy >= bf - 1e-12);
            assert!(
                (part.energy - bf).abs() < 1e-9,
                "seed {s}: {} vs brute force {}",
                part.energy,
                bf
            );
        }
    }

    #[test]
    fn already_optimal_medoids_are_fixed_point() {
        let m = random_matrix(7, 11);
        let part = pam_fit(&m, 2, 10, 0).unwrap();
        let again = pam_swap(&m, &part.medoids).unwrap();
        assert_eq!(again.medoids, part.medoids);
        assert_eq!(again.energy, part.energy);
    }

    #[test]
    fn fit_is_deterministic_and_restart_dominant() {
        let m = random_matrix(30, 7);
        let a = pam_fit(&m, 3, 50, 42).unwrap();
        let b = pam_fit(&m, 3, 50, 42).unwrap();
        assert_eq!(a, b);
        let single = pam_fit(&m, 3, 1, 42).unwrap();
        assert!(a.energy <= single.energy);
    }

    #[test]
    fn labels_follow_nearest_medoid_with_low_index_ties() {
        let m = random_matrix(12, 5);
        let part = pam_fit(&m, 3, 5, 9).unwrap();
        for i in 0..12 {
            let mut best = 0usize;
            for c in 1..3 {
                if m.get(i, part.medoids[c]) < m.get(i, part.medoids[best]) {
                    best = c;
                }
            }
            assert_eq!(part.labels[i] as usize, best);
        }
        for (c, &med) in part.medoids.iter().enumerate() {
            assert_eq!(part.labels[med] as usize, c);
        }
    }

    #[test]
    fn assign_nearest_medoid_matches_argmin_oracle() {
        let m = random_matrix(10, 21);
        let part = pam_fit(&m, 3, 5, 1).unwrap();
        // Feed back each training row through assignment.
        for i in 0..10 {
            let dists: Vec<f64> = (0..10).map(|j| m.get(i, j)).collect();
            let label = part.assign_nearest_medoid(&dists).unwrap();
            assert_eq!(label, part.labels[i] as usize);
        }
        // Equidistant to every medoid: lowest medoid index wins.
        let tied = vec![0.5; 10];
        assert_eq!(part.assign_nearest_medoid(&tied).unwrap(), 0);
        // Length mismatch is an error.
        assert!(part.assign_nearest_medoid(&[0.1, 0.2]).is_err());
    }
}
