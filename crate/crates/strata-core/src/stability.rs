//! Bootstrap Jaccard stability for selecting the number of clusters.
//!
//! For each candidate k, the original partition is compared against
//! partitions refitted on bootstrap row samples (deduplicated, so each
//! sampled point appears once). Per replicate, each original cluster is
//! restricted to the sampled points and scored by its best Jaccard overlap
//! with the refitted clusters; absent clusters are excluded from the mean
//! rather than scored zero. The selected k* maximizes the worst-case mean
//! similarity over clusters, ties going to the smallest k.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gower::{gower_dissimilarity, DissimilarityMatrix};
use crate::pam::{pam_fit, Partition};
use crate::scalar::Scalar;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Inclusive candidate range for k.
    pub k_min: usize,
    pub k_max: usize,
    /// Bootstrap replicates per k.
    pub replicates: usize,
    /// Restarts for the original per-k fit.
    pub restarts_original: usize,
    /// Restarts for each bootstrap refit.
    pub restarts_bootstrap: usize,
    /// Whether the outcome joins the Gower variables.
    pub include_outcome: bool,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            k_min: 2,
            k_max: 8,
            replicates: 100,
            restarts_original: 50,
            restarts_bootstrap: 5,
            include_outcome: true,
            seed: 0,
        }
    }
}

/// Mean similarity of one original cluster across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStability<T> {
    pub k: usize,
    pub cluster: usize,
    /// Mean of the per-replicate best Jaccard overlaps; `None` when the
    /// cluster was absent from every usable replicate.
    pub mean_jaccard: Option<T>,
    /// Replicates in which the cluster had sampled members.
    pub b_eff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore<T> {
    pub k: usize,
    pub value: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEnergy<T> {
    pub k: usize,
    pub energy: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport<T> {
    pub k_min: usize,
    pub k_max: usize,
    pub replicates: usize,
    pub per_cluster: Vec<ClusterStability<T>>,
    /// Per k: min over clusters of the mean Jaccard.
    pub worst_case: Vec<KScore<T>>,
    pub k_star: usize,
    /// Best PAM energy per k from the original fits.
    pub energy_curve: Vec<KEnergy<T>>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

impl<T: Scalar> StabilityReport<T> {
    /// CSV with the worst-case stability curve: `k,worst_case_jaccard`.
    pub fn write_curve_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,worst_case_jaccard")?;
        for s in &self.worst_case {
            match s.value {
                Some(v) => writeln!(w, "{},{}", s.k, v.to_f64_lossy())?,
                None => writeln!(w, "{},", s.k)?,
            }
        }
        Ok(())
    }

    /// CSV with the PAM energy curve: `k,energy`.
    pub fn write_energy_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,energy")?;
        for e in &self.energy_curve {
            writeln!(w, "{},{}", e.k, e.energy.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// Jaccard similarity of two ascending index slices.
pub fn jaccard<T: Scalar>(a: &[usize], b: &[usize]) -> Result<T> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::invalid("jaccard of two empty sets"));
    }
    let mut i = 0;
    let mut j = 0;
    let mut inter = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    Ok(T::from_usize(inter).unwrap() / T::from_usize(union).unwrap())
}

/// Ascending unique row indices of one bootstrap sample of size n.
pub fn bootstrap_sample_unique(seed: u64, replicate: u64, n: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed, stream::STABILITY_REPLICATE, replicate);
    let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Best Jaccard overlap of each original cluster with the partition
/// refitted on `sample` (ascending unique row indices). Clusters whose
/// members were all left out of the sample come back as `None`.
pub fn replicate_similarity<T: Scalar>(
    original: &Partition<T>,
    m: &DissimilarityMatrix<T>,
    sample: &[usize],
    restarts: usize,
    pam_seed: u64,
) -> Result<Vec<Option<T>>> {
    let k = original.k;
    if sample.len() < k {
        return Err(Error::numerical(format!(
            "bootstrap sample has {} distinct points, fewer than k = {k}",
            sample.len()
        )));
    }
    let sub = m.subselect(sample);
    let refit = pam_fit(&sub, k, restarts, pam_seed)?;

    // Refit clusters in original row ids, ascending.
    let mut refit_clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &lab) in refit.labels.iter().enumerate() {
        refit_clusters[lab as usize].push(sample[pos]);
    }

    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members = original.cluster_members(c);
        let restricted: Vec<usize> = {
            let mut r = Vec::new();
            let mut i = 0;
            let mut j = 0;
            while i < members.len() && j < sample.len() {
                match members[i].cmp(&sample[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        r.push(members[i]);
                        i += 1;
                        j += 1;
                    }
                }
            }
            r
        };
        if restricted.is_empty() {
            out.push(None);
            continue;
        }
        let mut best = T::zero();
        for s in &refit_clusters {
            if s.is_empty() {
                continue;
            }
            let j: T = jaccard(&restricted, s)?;
            if j > best {
                best = j;
            }
        }
        out.push(Some(best));
    }
    Ok(out)
}

/// Smallest k attaining the maximal worst-case score.
pub fn select_k_star<T: Scalar>(worst: &[KScore<T>]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for s in worst {
        let Some(v) = s.value else { continue };
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((s.k, v)),
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::numerical("no k produced a usable stability score"))
}

/// Full stability analysis over a precomputed dissimilarity matrix.
///
/// Replicate b's row sample depends only on `(seed, b)`, so the same
/// perturbed datasets are reused across k and extending the replicate count
/// never alters earlier replicates. Bootstrap refits subselect the
/// precomputed matrix, keeping the original Gower ranges.
pub fn stability_curve_on_matrix<T: Scalar>(
    m: &DissimilarityMatrix<T>,
    cfg: &StabilityConfig,
) -> Result<StabilityReport<T>> {
    let n = m.n();
    if cfg.k_min < 2 || cfg.k_max < cfg.k_min {
        return Err(Error::invalid("need 2 <= k_min <= k_max"));
    }
    if cfg.k_max >= n {
        return Err(Error::invalid(format!(
            "k_max = {} must be below n = {n}",
            cfg.k_max
        )));
    }
    if cfg.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }

    let samples: Vec<Vec<usize>> = (0..cfg.replicates)
        .map(|b| bootstrap_sample_unique(cfg.seed, b as u64, n))
        .collect();

    let mut per_cluster = Vec::new();
    let mut worst_case = Vec::new();
    let mut energy_curve = Vec::new();
    let mut warnings = Vec::new();

    for k in cfg.k_min..=cfg.k_max {
        let original = pam_fit(m, k, cfg.restarts_original, seed::derive(cfg.seed, 10, k as u64))?;
        energy_curve.push(KEnergy {
            k,
            energy: original.energy,
        });

        let replicate_values: Vec<Result<Vec<Option<T>>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|b| {
                replicate_similarity(
                    &original,
                    m,
                    &samples[b],
                    cfg.restarts_bootstrap,
                    seed::derive(cfg.seed, stream::STABILITY_REPLICATE, b as u64),
                )
            })
            .collect();

        let mut sums = vec![T::zero(); k];
        let mut counts = vec![0usize; k];
        for r in replicate_values {
            let values = r?;
            for (c, v) in values.into_iter().enumerate() {
                if let Some(v) = v {
                    sums[c] += v;
                    counts[c] += 1;
                }
            }
        }

        let mut worst: Option<T> = None;
        for c in 0..k {
            let mean = if counts[c] > 0 {
                Some(sums[c] / T::from_usize(counts[c]).unwrap())
            } else {
                warnings.push(format!(
                    "k={k}: cluster {c} absent from every bootstrap sample; excluded"
                ));
                None
            };
            per_cluster.push(ClusterStability {
                k,
                cluster: c,
                mean_jaccard: mean,
                b_eff: counts[c],
            });
            if let Some(v) = mean {
                worst = Some(match worst {
                    Some(w) => w.min(v),
                    None => v,
                });
            }
        }
        worst_case.push(KScore { k, value: worst });
    }

    let k_star = select_k_star(&worst_case)?;
    Ok(StabilityReport {
        k_min: cfg.k_min,
        k_max: cfg.k_max,
        replicates: cfg.replicates,
        per_cluster,
        worst_case,
        k_star,
        energy_curve,
        warnings,
        seed: cfg.seed,
    })
}

/// Convenience wrapper computing the Gower matrix from the dataset first.
pub fn stability_curve<T: Scalar>(
    ds: &Dataset<T>,
    cfg: &StabilityConfig,
) -> Result<StabilityReport<T>> {
    let m = gower_dissimilarity(ds, cfg.include_outcome)?;
    stability_curve_on_matrix(&m, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VariableSchema;
    use ndarray::Array2;

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard::<f64>(&[1, 2, 5], &[1, 2, 5]).unwrap(), 1.0);
        assert!((jaccard::<f64>(&[1, 2], &[2, 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard::<f64>(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert!(jaccard::<f64>(&[], &[]).is_err());
        assert_eq!(jaccard::<f64>(&[], &[1]).unwrap(), 0.0);
    }

    /// Two well-separated blobs on one continuous feature.
    fn blob_dataset(n_per: usize) -> Dataset<f64> {
        let n = 2 * n_per;
        let mut cont = Array2::<f64>::zeros((n, 1));
        let mut cat = vec![0u32; n];
        let mut y = vec![0u8; n];
        for i in 0..n {
            let blob = i % 2;
            // Deterministic jitter keeps rows distinct.
            let jitter = (i as f64) * 0.01;
            cont[(i, 0)] = if blob == 0 { jitter } else { 100.0 + jitter };
            cat[i] = blob as u32;
            y[i] = ((i / 2) % 2) as u8;
        }
        Dataset::from_parts(
            vec![
                VariableSchema::continuous("x1"),
                VariableSchema::categorical("g", &["u", "v"]),
            ],
            VariableSchema::outcome("y", "0", "1"),
            cont,
            vec![cat],
            y,
        )
        .unwrap()
    }

    #[test]
    fn identity_resample_scores_one_everywhere() {
        let ds = blob_dataset(10);
        let m = gower_dissimilarity(&ds, true).unwrap();
        let original = pam_fit(&m, 2, 1, 0).unwrap();
        let every_row: Vec<usize> = (0..ds.n()).collect();
        let values = replicate_similarity(&original, &m, &every_row, 1, 123).unwrap();
        for v in values {
            assert_eq!(v.unwrap(), 1.0);
        }
    }

    #[test]
    fn separated_blobs_are_stable() {
        let ds = blob_dataset(20);
        let m = gower_dissimilarity(&ds, true).unwrap();
        let original = pam_fit(&m, 2, 5, 7).unwrap();
        for b in 0..20u64 {
            let sample = bootstrap_sample_unique(7, b, ds.n());
            let values =
                replicate_similarity(&original, &m, &sample, 3, seed::derive(7, 2, b)).unwrap();
            for v in values.into_iter().flatten() {
                assert!(v >= 0.95, "blob similarity dropped to {v}");
            }
        }
    }

    #[test]
    fn absent_cluster_marked_none_not_zero() {
        let ds = blob_dataset(10);
        let m = gower_dissimilarity(&ds, true).unwrap();
        let original = pam_fit(&m, 2, 1, 0).unwrap();
        // Blob 0 rows have even indices; sample only odd rows (blob 1).
        let sample: Vec<usize> = (0..ds.n()).filter(|i| i % 2 == 1).collect();
        let values = replicate_similarity(&original, &m, &sample, 1, 5).unwrap();
        let absent = original.labels[0] as usize; // row 0 sits in blob 0
        assert!(values[absent].is_none());
        assert!(values[1 - absent].is_some());
    }

    #[test]
    fn curve_selects_two_blobs() {
        let ds = blob_dataset(30);
        let cfg = StabilityConfig {
            k_min: 2,
            k_max: 4,
            replicates: 30,
            restarts_original: 5,
            restarts_bootstrap: 3,
            include_outcome: true,
            seed: 11,
        };
        let report = stability_curve(&ds, &cfg).unwrap();
        assert_eq!(report.k_star, 2);
        // Energy decreases with k.
        for w in report.energy_curve.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
        }
    }

    #[test]
    fn report_is_deterministic() {
        let ds = blob_dataset(12);
        let cfg = StabilityConfig {
            k_min: 2,
            k_max: 3,
            replicates: 10,
            restarts_original: 3,
            restarts_bootstrap: 2,
            include_outcome: true,
            seed: 21,
        };
        let a = stability_curve(&ds, &cfg).unwrap();
        let b = stability_curve(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replicate_stream_is_prefix_stable() {
        // Extending B only appends: sample b depends on (seed, b) alone.
        let first: Vec<_> = (0..5u64).map(|b| bootstrap_sample_unique(3, b, 40)).collect();
        let extended: Vec<_> = (0..10u64).map(|b| bootstrap_sample_unique(3, b, 40)).collect();
        assert_eq!(&extended[..5], &first[..]);
    }

    #[test]
    fn tie_breaks_to_smallest_k() {
        let worst = vec![
            KScore { k: 2, value: Some(0.8) },
            KScore { k: 3, value: Some(0.8) },
            KScore { k: 4, value: Some(0.7) },
        ];
        assert_eq!(select_k_star::<f64>(&worst).unwrap(), 2);
    }
}
