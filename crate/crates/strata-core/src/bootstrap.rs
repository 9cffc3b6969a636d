//! Nonparametric bootstrap of the sparse pipeline with BCa intervals.
//!
//! Each replicate resamples (outcome, features, cluster label) triples with
//! replacement, reruns standardization, cross-validation, and the penalized
//! fit, and records odds ratios, ratios of odds ratios, and which
//! coefficient groups were zeroed. Intervals are bias-corrected and
//! accelerated; the acceleration inside the pipeline comes from the
//! resampling-count influence approximation rather than n leave-one-out
//! pipeline refits, which would cost n full cross-validated fits apiece.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, StandardizationReport};
use crate::design::build_design;
use crate::effects::{effect_table, EffectTable};
use crate::error::{Error, Result};
use crate::glasso::{cv_select, CvConfig, ModelParams};
use crate::gower::DissimilarityMatrix;
use crate::normal::{norm_cdf, norm_quantile};
use crate::pam::pam_fit;
use crate::scalar::Scalar;
use crate::seed::{self, stream};

/// Bias correction and acceleration behind one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaParams<T> {
    pub z0: T,
    pub a: T,
    /// All replicates identical; the interval collapses to a point.
    pub degenerate: bool,
    /// The bias-correction count was clamped away from 0 or B.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval<T> {
    pub lower: T,
    pub upper: T,
    pub params: BcaParams<T>,
}

/// Type-7 empirical quantile (linear interpolation) of ascending `sorted`.
fn quantile<T: Scalar>(sorted: &[T], q: T) -> T {
    let b = sorted.len();
    debug_assert!(b > 0);
    let q = q.max(T::zero()).min(T::one());
    let h = q * T::from_usize(b - 1).unwrap();
    let lo = h.floor().to_usize().unwrap_or(0).min(b - 1);
    let hi = (lo + 1).min(b - 1);
    let frac = h - T::from_usize(lo).unwrap();
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Plain percentile interval at level `1 - alpha`.
pub fn percentile_interval<T: Scalar>(replicates: &[T], alpha: T) -> Result<(T, T)> {
    if replicates.is_empty() {
        return Err(Error::invalid("no replicates"));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite replicate values"));
    let half = alpha / T::c(2.0);
    Ok((quantile(&sorted, half), quantile(&sorted, T::one() - half)))
}

/// Acceleration from influence values: `sum(u^3) / (6 (sum(u^2))^1.5)`.
pub fn influence_acceleration<T: Scalar>(u: &[T]) -> T {
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    for &v in u {
        s2 += v * v;
        s3 += v * v * v;
    }
    if s2 <= T::zero() {
        return T::zero();
    }
    s3 / (T::c(6.0) * s2.powf(T::c(1.5)))
}

/// Acceleration from leave-one-out estimates via the jackknife skewness.
pub fn jackknife_acceleration<T: Scalar>(jackknife: &[T]) -> T {
    if jackknife.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(jackknife.len()).unwrap();
    let mean = jackknife.iter().cloned().sum::<T>() / n;
    let d: Vec<T> = jackknife.iter().map(|&v| mean - v).collect();
    influence_acceleration(&d)
}

/// BCa interval from replicate values, the point estimate, and a
/// precomputed acceleration.
pub fn bca_interval_with_acceleration<T: Scalar>(
    replicates: &[T],
    point: T,
    alpha: T,
    a: T,
) -> Result<BcaInterval<T>> {
    let b = replicates.len();
    if b == 0 {
        return Err(Error::invalid("no replicates"));
    }
    if !(alpha > T::zero() && alpha < T::c(0.5)) {
        return Err(Error::invalid("alpha must be in (0, 0.5)"));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite replicate values"));
    if sorted[0] == sorted[b - 1] {
        return Ok(BcaInterval {
            lower: sorted[0],
            upper: sorted[0],
            params: BcaParams {
                z0: T::zero(),
                a: T::zero(),
                degenerate: true,
                clamped: false,
            },
        });
    }

    let below = replicates.iter().filter(|&&v| v < point).count();
    let clamped = below == 0 || below == b;
    let below = below.clamp(1, b - 1);
    let z0 = norm_quantile(T::from_usize(below).unwrap() / T::from_usize(b).unwrap());

    let half = alpha / T::c(2.0);
    let adjust = |z: T| -> T {
        let num = z0 + z;
        let denom = T::one() - a * num;
        if denom <= T::zero() {
            // Acceleration ran away; saturate toward the nearer tail.
            return if num > T::zero() { T::one() } else { T::zero() };
        }
        norm_cdf(z0 + num / denom)
    };
    // With both corrections zero the adjustment is the identity; skip the
    // quantile/CDF round trip so the collapse to the percentile interval
    // is exact.
    let (q_lo, q_hi) = if z0 == T::zero() && a == T::zero() {
        (half, T::one() - half)
    } else {
        (
            adjust(norm_quantile(half)),
            adjust(norm_quantile(T::one() - half)),
        )
    };

    Ok(BcaInterval {
        lower: quantile(&sorted, q_lo),
        upper: quantile(&sorted, q_hi),
        params: BcaParams {
            z0,
            a,
            degenerate: false,
            clamped,
        },
    })
}

/// BCa interval with acceleration estimated from leave-one-out values.
pub fn bca_interval<T: Scalar>(
    replicates: &[T],
    point: T,
    alpha: T,
    jackknife: &[T],
) -> Result<BcaInterval<T>> {
    bca_interval_with_acceleration(replicates, point, alpha, jackknife_acceleration(jackknife))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    /// Odds ratio within a cluster.
    Or,
    /// Ratio of odds ratios of a cluster versus the reference cluster.
    Ror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantitySummary<T> {
    pub variable: String,
    pub feature: usize,
    pub level: Option<usize>,
    pub level_label: String,
    pub kind: QuantityKind,
    pub cluster: usize,
    pub point: T,
    pub mean: T,
    pub sd: T,
    pub lower: T,
    pub upper: T,
    pub bca: BcaParams<T>,
    /// Interval excludes 1.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermZeroStats<T> {
    pub variable: String,
    pub feature: usize,
    /// Share of replicates in which the recovered main block was all zero.
    pub main_zero: T,
    /// Share of replicates in which the interaction block was all zero.
    pub interaction_zero: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary<T> {
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub excluded_nonconverged: usize,
    pub excluded_failed: usize,
    pub single_class_redraws: usize,
    pub alpha: T,
    pub quantities: Vec<QuantitySummary<T>>,
    pub zero_stats: Vec<TermZeroStats<T>>,
    pub cluster_zero: T,
    pub lambda_cv: Vec<T>,
    pub seed: u64,
}

/// Full bootstrap output; replicate-level values are quantity-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun<T> {
    pub summary: BootstrapSummary<T>,
    pub replicate_values: Vec<Vec<T>>,
}

impl<T: Scalar> BootstrapRun<T> {
    /// One row per (replicate, quantity) for external box plots.
    pub fn write_replicates_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "replicate,variable,level,kind,cluster,value")?;
        for (qi, q) in self.summary.quantities.iter().enumerate() {
            for (b, v) in self.replicate_values[qi].iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{:?},{},{}",
                    b,
                    q.variable,
                    q.level_label,
                    q.kind,
                    q.cluster,
                    v.to_f64_lossy()
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig<T> {
    pub replicates: usize,
    /// Interval level: `1 - alpha` coverage.
    pub alpha: T,
    pub seed: u64,
    /// Cross-validation settings reused inside every replicate; the seed
    /// field is re-derived per replicate.
    pub cv: CvConfig<T>,
    /// Redraw limit for resamples whose outcome is single-class.
    pub max_redraws: usize,
    /// Refit the clustering on each resample instead of carrying the
    /// original labels with the triples.
    pub recluster_per_replicate: bool,
    pub recluster_restarts: usize,
}

impl<T: Scalar> Default for BootstrapConfig<T> {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 300,
            alpha: T::c(0.05),
            seed: 0,
            cv: CvConfig::default(),
            max_redraws: 100,
            recluster_per_replicate: false,
            recluster_restarts: 5,
        }
    }
}

struct ReplicateOutcome<T> {
    values: Vec<T>,
    main_zero: Vec<bool>,
    interaction_zero: Vec<bool>,
    cluster_zero: bool,
    lambda_cv: T,
    converged: bool,
    counts: Vec<u16>,
    redraws: usize,
}

/// Quantity descriptors in a fixed order shared by points and replicates:
/// per effect row, the k odds ratios then the k-1 RORs.
fn flatten_effects<T: Scalar>(table: &EffectTable<T>) -> Vec<T> {
    let mut out = Vec::new();
    for e in &table.effects {
        for s in 0..table.k {
            out.push(e.or_by_cluster[s].expect("sparse fit ORs always estimable"));
        }
        for s in 1..table.k {
            out.push(e.ror_vs_reference[s].expect("sparse fit RORs always estimable"));
        }
    }
    out
}

/// Rerun the pipeline on `B` resamples of the (outcome, features, label)
/// triples. Replicate b's randomness depends only on `(seed, b)`; results
/// are independent of thread count, and extending `B` never alters the
/// replicates already drawn.
pub fn bootstrap_run<T: Scalar>(
    ds_raw: &Dataset<T>,
    labels: &[u32],
    k: usize,
    point_params: &ModelParams<T>,
    point_std: &StandardizationReport<T>,
    cfg: &BootstrapConfig<T>,
    recluster_matrix: Option<&DissimilarityMatrix<T>>,
) -> Result<BootstrapRun<T>> {
    let n = ds_raw.n();
    if labels.len() != n {
        return Err(Error::invalid("labels length mismatch"));
    }
    if cfg.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    if !(cfg.alpha > T::zero() && cfg.alpha < T::c(0.5)) {
        return Err(Error::invalid("alpha must be in (0, 0.5)"));
    }
    if cfg.recluster_per_replicate && recluster_matrix.is_none() {
        return Err(Error::invalid(
            "recluster_per_replicate needs the dissimilarity matrix",
        ));
    }

    let point_table = effect_table(
        point_params,
        ds_raw.features(),
        Some(point_std),
        false,
    )?;
    let point_values = flatten_effects(&point_table);

    let outcomes: Vec<Result<ReplicateOutcome<T>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| -> Result<ReplicateOutcome<T>> {
            let mut rng = seed::rng(cfg.seed, stream::BOOTSTRAP_REPLICATE, b as u64);
            let mut redraws = 0usize;
            let idx: Vec<usize> = loop {
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let ones = idx.iter().filter(|&&i| ds_raw.outcome()[i] == 1).count();
                if ones > 0 && ones < n {
                    break idx;
                }
                redraws += 1;
                if redraws > cfg.max_redraws {
                    return Err(Error::numerical(
                        "resample kept producing a single-class outcome",
                    ));
                }
            };
            let mut counts = vec![0u16; n];
            for &i in &idx {
                counts[i] += 1;
            }

            let ds_b = ds_raw.select_rows(&idx)?;
            let labels_b: Vec<u32> = if cfg.recluster_per_replicate {
                let m = recluster_matrix.expect("checked above").subselect(&idx);
                let part = pam_fit(&m, k, cfg.recluster_restarts, seed::derive(cfg.seed, 31, b as u64))?;
                part.labels
            } else {
                idx.iter().map(|&i| labels[i]).collect()
            };

            let (ds_std, std_rep) = ds_b.standardize_continuous()?;
            let design = build_design(&ds_std, &labels_b, k)?;
            let mut cv_cfg = cfg.cv.clone();
            cv_cfg.seed = seed::derive(cfg.seed, 32, b as u64);
            cv_cfg.heuristic_max_interactions = None;
            let (cv, path) = cv_select(&design, ds_std.outcome(), &cv_cfg)?;
            let final_point = &path.points[cv.lambda_cv_index];
            let params = path.params_at(cv.lambda_cv_index, &design)?;
            let table = effect_table(&params, ds_std.features(), Some(&std_rep), false)?;
            let values = flatten_effects(&table);

            Ok(ReplicateOutcome {
                values,
                main_zero: params.main_active.iter().map(|&a| !a).collect(),
                interaction_zero: params.interaction_active.iter().map(|&a| !a).collect(),
                cluster_zero: !params.cluster_active,
                lambda_cv: cv.lambda_cv,
                converged: final_point.converged,
                counts,
                redraws,
            })
        })
        .collect();

    let mut used: Vec<ReplicateOutcome<T>> = Vec::with_capacity(cfg.replicates);
    let mut excluded_nonconverged = 0usize;
    let mut excluded_failed = 0usize;
    let mut single_class_redraws = 0usize;
    for o in outcomes {
        match o {
            Ok(o) => {
                single_class_redraws += o.redraws;
                if o.converged {
                    used.push(o);
                } else {
                    excluded_nonconverged += 1;
                }
            }
            Err(_) => excluded_failed += 1,
        }
    }
    let b_used = used.len();
    if b_used == 0 {
        return Err(Error::numerical("no bootstrap replicate converged"));
    }
    let bt = T::from_usize(b_used).unwrap();

    let n_q = point_values.len();
    let mut replicate_values: Vec<Vec<T>> = vec![Vec::with_capacity(b_used); n_q];
    for o in &used {
        for (qi, &v) in o.values.iter().enumerate() {
            replicate_values[qi].push(v);
        }
    }

    // Influence values per quantity from resampling counts.
    let mut quantities = Vec::with_capacity(n_q);
    let mut qi = 0usize;
    for e in &point_table.effects {
        let mut kinds: Vec<(QuantityKind, usize)> = (0..point_table.k)
            .map(|s| (QuantityKind::Or, s))
            .collect();
        kinds.extend((1..point_table.k).map(|s| (QuantityKind::Ror, s)));
        for (kind, cluster) in kinds {
            let values = &replicate_values[qi];
            let mean = values.iter().cloned().sum::<T>() / bt;
            let var = if b_used > 1 {
                values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>()
                    / (bt - T::one())
            } else {
                T::zero()
            };
            let mut infl = vec![T::zero(); n];
            for (o, _) in used.iter().zip(0..) {
                let dv = o.values[qi] - mean;
                for i in 0..n {
                    let dc = T::from_u16(o.counts[i]).unwrap() - T::one();
                    infl[i] += dc * dv;
                }
            }
            for v in infl.iter_mut() {
                *v /= bt;
            }
            let a = influence_acceleration(&infl);
            let interval =
                bca_interval_with_acceleration(values, point_values[qi], cfg.alpha, a)?;
            quantities.push(QuantitySummary {
                variable: e.variable.clone(),
                feature: e.feature,
                level: e.level,
                level_label: e.level_label.clone(),
                kind,
                cluster,
                point: point_values[qi],
                mean,
                sd: var.sqrt(),
                lower: interval.lower,
                upper: interval.upper,
                bca: interval.params,
                significant: false,
            });
            qi += 1;
        }
    }

    let mut zero_stats = Vec::with_capacity(ds_raw.p());
    for j in 0..ds_raw.p() {
        let mz = used.iter().filter(|o| o.main_zero[j]).count();
        let iz = used.iter().filter(|o| o.interaction_zero[j]).count();
        zero_stats.push(TermZeroStats {
            variable: ds_raw.features()[j].name.clone(),
            feature: j,
            main_zero: T::from_usize(mz).unwrap() / bt,
            interaction_zero: T::from_usize(iz).unwrap() / bt,
        });
    }
    let cz = used.iter().filter(|o| o.cluster_zero).count();

    let mut summary = BootstrapSummary {
        replicates_requested: cfg.replicates,
        replicates_used: b_used,
        excluded_nonconverged,
        excluded_failed,
        single_class_redraws,
        alpha: cfg.alpha,
        quantities,
        zero_stats,
        cluster_zero: T::from_usize(cz).unwrap() / bt,
        lambda_cv: used.iter().map(|o| o.lambda_cv).collect(),
        seed: cfg.seed,
    };
    significance_table(&mut summary);

    Ok(BootstrapRun {
        summary,
        replicate_values,
    })
}

/// Terms retained under the zero-proportion screen, with the hierarchy
/// checked rather than assumed: a retained interaction whose parents were
/// dropped is a bug upstream, not a reporting choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionScreen<T> {
    pub threshold: T,
    pub retained_mains: Vec<usize>,
    pub retained_interactions: Vec<usize>,
    pub cluster_retained: bool,
}

pub fn inclusion_screen<T: Scalar>(
    summary: &BootstrapSummary<T>,
    threshold: T,
) -> Result<InclusionScreen<T>> {
    let mut retained_mains = Vec::new();
    let mut retained_interactions = Vec::new();
    for z in &summary.zero_stats {
        if z.main_zero < threshold {
            retained_mains.push(z.feature);
        }
        if z.interaction_zero < threshold {
            retained_interactions.push(z.feature);
        }
    }
    let cluster_retained = summary.cluster_zero < threshold;
    for &j in &retained_interactions {
        if !retained_mains.contains(&j) || !cluster_retained {
            return Err(Error::numerical(format!(
                "inclusion screen broke strong hierarchy for feature {j}"
            )));
        }
    }
    Ok(InclusionScreen {
        threshold,
        retained_mains,
        retained_interactions,
        cluster_retained,
    })
}

/// Mark each quantity significant when its interval excludes 1; degenerate
/// intervals are never significant.
pub fn significance_table<T: Scalar>(summary: &mut BootstrapSummary<T>) {
    for q in summary.quantities.iter_mut() {
        let one = T::one();
        q.significant = !q.bca.degenerate && (q.lower > one || q.upper < one);
    }
}

/// CSV of the bootstrap summary: per effect row the per-cluster odds-ratio
/// summaries and the ROR summaries with interval bounds and significance.
pub fn write_summary_csv<T: Scalar, W: std::io::Write>(
    summary: &BootstrapSummary<T>,
    mut w: W,
) -> Result<()> {
    writeln!(
        w,
        "variable,level,kind,cluster,point,mean,sd,lower,upper,significant"
    )?;
    for q in &summary.quantities {
        writeln!(
            w,
            "{},{},{:?},{},{},{},{},{},{},{}",
            q.variable,
            q.level_label,
            q.kind,
            q.cluster,
            q.point.to_f64_lossy(),
            q.mean.to_f64_lossy(),
            q.sd.to_f64_lossy(),
            q.lower.to_f64_lossy(),
            q.upper.to_f64_lossy(),
            q.significant
        )?;
    }
    Ok(())
}
