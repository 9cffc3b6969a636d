//! Cluster-conditional odds ratios and ratios of odds ratios.
//!
//! One generic engine produces every case: the log odds ratio of a feature
//! within a cluster is the linear-predictor difference between the
//! feature's level (or a unit increase) and its reference, holding the
//! cluster one-hot fixed, evaluated on the sum-to-zero parameter blocks.
//! Closed-form expressions for specific level/cluster counts exist in the
//! test suite as oracles for this engine, not in the implementation.

use serde::{Deserialize, Serialize};

use crate::dataset::{StandardizationReport, VariableSchema};
use crate::error::{Error, Result};
use crate::glasso::{GlmFit, ModelParams};
use crate::scalar::Scalar;

/// Conditional log odds ratio of feature `j` within `cluster`.
///
/// `level` is `Some(a)` for a categorical level `a >= 1` against the
/// reference level, `None` for a one-unit increase of a continuous
/// feature (whose main effect carries no sum-to-zero constraint).
pub fn conditional_log_or<T: Scalar>(
    params: &ModelParams<T>,
    feature: usize,
    level: Option<usize>,
    cluster: usize,
) -> Result<T> {
    let k = params.k;
    if cluster >= k {
        return Err(Error::invalid(format!("cluster {cluster} out of range")));
    }
    let l = params.level_counts[feature];
    match level {
        None => {
            if l != 1 {
                return Err(Error::invalid("level required for a categorical feature"));
            }
            Ok(params.beta[feature][0] + params.theta[feature][cluster])
        }
        Some(a) => {
            if a == 0 || a >= l {
                return Err(Error::invalid(format!("level {a} out of range 1..{l}")));
            }
            let beta = &params.beta[feature];
            let theta = &params.theta[feature];
            Ok(beta[a] - beta[0] + theta[a * k + cluster] - theta[cluster])
        }
    }
}

/// Ratio of odds ratios: the second odds ratio against the reference one.
pub fn ror_from_ors<T: Scalar>(or_reference: T, or_other: T) -> Result<T> {
    if !(or_reference > T::zero()) || !(or_other > T::zero()) {
        return Err(Error::invalid("odds ratios must be positive"));
    }
    Ok(or_other / or_reference)
}

/// One feature level's odds ratios across clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate<T> {
    pub variable: String,
    pub feature: usize,
    /// `None` for continuous (per-unit) effects.
    pub level: Option<usize>,
    pub level_label: String,
    /// Odds ratio within each cluster; `None` marks a non-estimable cell.
    pub or_by_cluster: Vec<Option<T>>,
    /// Ratio of odds ratios of cluster s versus the reference cluster 0;
    /// entry 0 is 1 by construction when estimable.
    pub ror_vs_reference: Vec<Option<T>>,
    pub interaction_active: bool,
    /// Which engine case produced the numbers.
    pub derivation: String,
    pub na_causes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable<T> {
    pub k: usize,
    pub reference_cluster: usize,
    /// Continuous effects are per this many original units (1.0) unless
    /// reported in standardized units.
    pub standardized_units: bool,
    pub effects: Vec<EffectEstimate<T>>,
}

impl<T: Scalar> EffectTable<T> {
    /// CSV mirroring the per-cluster layout: one row per variable level,
    /// odds ratio per cluster, then RORs for the non-reference clusters.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["variable".to_string(), "level".to_string()];
        for s in 0..self.k {
            header.push(format!("or_cluster{s}"));
        }
        for s in 1..self.k {
            header.push(format!("ror_cluster{s}_vs_{}", self.reference_cluster));
        }
        header.push("interaction_active".into());
        writeln!(w, "{}", header.join(","))?;
        for e in &self.effects {
            let mut cells = vec![e.variable.clone(), e.level_label.clone()];
            for s in 0..self.k {
                cells.push(match e.or_by_cluster[s] {
                    Some(v) => format!("{}", v.to_f64_lossy()),
                    None => "NA".into(),
                });
            }
            for s in 1..self.k {
                cells.push(match e.ror_vs_reference[s] {
                    Some(v) => format!("{}", v.to_f64_lossy()),
                    None => "NA".into(),
                });
            }
            cells.push(format!("{}", e.interaction_active));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn derivation_tag(levels: usize, k: usize) -> String {
    if levels == 1 {
        format!("logit-diff(continuous,k={k})")
    } else {
        format!("logit-diff(L={levels},k={k})")
    }
}

/// Effect table for a fitted sparse model.
///
/// Continuous effects are translated back to original units through the
/// standardization report unless `standardized_units` is set.
pub fn effect_table<T: Scalar>(
    params: &ModelParams<T>,
    features: &[VariableSchema],
    standardization: Option<&StandardizationReport<T>>,
    standardized_units: bool,
) -> Result<EffectTable<T>> {
    let k = params.k;
    let mut effects = Vec::new();
    for (j, f) in features.iter().enumerate() {
        let l = params.level_counts[j];
        let levels: Vec<Option<usize>> = if l == 1 {
            vec![None]
        } else {
            (1..l).map(Some).collect()
        };
        for level in levels {
            let scale = match (level, standardized_units, standardization) {
                (None, false, Some(rep)) => rep.scale[j],
                _ => T::one(),
            };
            let mut log_ors = Vec::with_capacity(k);
            for s in 0..k {
                let lo = conditional_log_or(params, j, level, s)? / scale;
                log_ors.push(lo);
            }
            let or_by_cluster: Vec<Option<T>> =
                log_ors.iter().map(|&lo| Some(lo.exp())).collect();
            let mut ror = Vec::with_capacity(k);
            for s in 0..k {
                ror.push(Some((log_ors[s] - log_ors[0]).exp()));
            }
            effects.push(EffectEstimate {
                variable: f.name.clone(),
                feature: j,
                level,
                level_label: match level {
                    None => "unit increase".into(),
                    Some(a) => f.levels[a].clone(),
                },
                or_by_cluster,
                ror_vs_reference: ror,
                interaction_active: params.interaction_active[j],
                derivation: derivation_tag(l, k),
                na_causes: Vec::new(),
            });
        }
    }
    Ok(EffectTable {
        k,
        reference_cluster: 0,
        standardized_units,
        effects,
    })
}

/// Effect table for an unpenalized reference-coded fit, propagating
/// non-estimable cells as `None`.
pub fn effect_table_from_glm<T: Scalar>(
    fit: &GlmFit<T>,
    features: &[VariableSchema],
) -> Result<EffectTable<T>> {
    let k = fit.k;
    let mut effects = Vec::new();
    for (j, f) in features.iter().enumerate() {
        let levels: Vec<Option<usize>> = if f.levels.is_empty() {
            vec![None]
        } else {
            (1..f.levels.len()).map(Some).collect()
        };
        for level in levels {
            let mut or_by_cluster = Vec::with_capacity(k);
            let mut na_causes = Vec::new();
            for s in 0..k {
                match fit.conditional_log_or(j, level, s) {
                    Some(lo) => or_by_cluster.push(Some(lo.exp())),
                    None => {
                        or_by_cluster.push(None);
                        na_causes.push(format!("cluster {s}: not estimable"));
                    }
                }
            }
            let mut ror = Vec::with_capacity(k);
            for s in 0..k {
                ror.push(fit.log_ror(j, level, s).map(|v| v.exp()));
            }
            effects.push(EffectEstimate {
                variable: f.name.clone(),
                feature: j,
                level,
                level_label: match level {
                    None => "unit increase".into(),
                    Some(a) => f.levels[a].clone(),
                },
                or_by_cluster,
                ror_vs_reference: ror,
                interaction_active: fit.include_interactions,
                derivation: "glm-reference-coding".into(),
                na_causes,
            });
        }
    }
    Ok(EffectTable {
        k,
        reference_cluster: 0,
        standardized_units: true,
        effects,
    })
}

/// Reading of one ratio of odds ratios against the reference cluster.
pub fn interpret<T: Scalar>(effect: &EffectEstimate<T>, cluster: usize) -> String {
    let Some(ror) = effect.ror_vs_reference.get(cluster).copied().flatten() else {
        return format!(
            "{} ({}): not estimable in cluster {cluster}",
            effect.variable, effect.level_label
        );
    };
    let one = T::one();
    if ror == one {
        return format!(
            "{} ({}): no differential effect between cluster {cluster} and the reference cluster",
            effect.variable, effect.level_label
        );
    }
    let (pct, word) = if ror > one {
        ((ror - one) * T::c(100.0), "stronger")
    } else {
        ((one - ror) * T::c(100.0), "weaker")
    };
    format!(
        "{} ({}): association with the outcome is approximately {:.0}% {word} within cluster {cluster} than within the reference cluster",
        effect.variable,
        effect.level_label,
        pct.to_f64_lossy()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{expand_free, expand_free_grid};

    /// Parameter set over one feature with `levels` levels and k clusters,
    /// built by expanding free sum-to-zero coordinates.
    fn params_one_feature(
        levels: usize,
        k: usize,
        beta_free: &[f64],
        gamma_free: &[f64],
        theta_free: &[f64],
    ) -> ModelParams<f64> {
        let beta = if levels == 1 {
            vec![beta_free[0]]
        } else {
            expand_free(beta_free)
        };
        let theta = if levels == 1 {
            expand_free_grid(theta_free, 2, k)[k..].to_vec() // single row summing to zero
        } else {
            expand_free_grid(theta_free, levels, k)
        };
        ModelParams {
            intercept: 0.3,
            beta: vec![beta],
            gamma: expand_free(gamma_free),
            theta: vec![theta.clone()],
            main_active: vec![true],
            interaction_active: vec![theta.iter().any(|&t| t != 0.0)],
            cluster_active: true,
            level_counts: vec![levels],
            q: usize::from(levels == 1),
            k,
        }
    }

    #[test]
    fn all_zero_parameters_give_unit_odds_ratios() {
        let params = params_one_feature(2, 2, &[0.0], &[0.0], &[0.0]);
        for s in 0..2 {
            assert_eq!(conditional_log_or(&params, 0, Some(1), s).unwrap(), 0.0);
        }
    }

    #[test]
    fn binary_feature_two_clusters_closed_form() {
        let (b, t) = (0.37, -0.21);
        let params = params_one_feature(2, 2, &[b], &[0.5], &[t]);
        // Inside the non-reference cluster: 2(beta + theta).
        let inside = conditional_log_or(&params, 0, Some(1), 1).unwrap();
        assert!((inside - 2.0 * (b + t)).abs() < 1e-14);
        // Reference cluster: 2(beta - theta).
        let outside = conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((outside - 2.0 * (b - t)).abs() < 1e-14);
        // Ratio of odds ratios: exp(4 theta).
        assert!(((inside - outside) - 4.0 * t).abs() < 1e-14);
    }

    #[test]
    fn three_level_feature_two_clusters_closed_form() {
        let (b1, b2, t1, t2) = (0.4, -0.15, 0.22, 0.08);
        let params = params_one_feature(3, 2, &[b1, b2], &[0.3], &[t1, t2]);
        // Level 1 inside cluster 1: 2(b1 + t1) + b2 + t2.
        let got = conditional_log_or(&params, 0, Some(1), 1).unwrap();
        assert!((got - (2.0 * (b1 + t1) + b2 + t2)).abs() < 1e-14);
        // Level 2 inside cluster 1: 2(b2 + t2) + b1 + t1.
        let got = conditional_log_or(&params, 0, Some(2), 1).unwrap();
        assert!((got - (2.0 * (b2 + t2) + b1 + t1)).abs() < 1e-14);
        // Reference cluster flips the interaction signs.
        let got = conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((got - (2.0 * (b1 - t1) + b2 - t2)).abs() < 1e-14);
        // RORs: exp(4 t1 + 2 t2) and exp(4 t2 + 2 t1).
        let r1 = conditional_log_or(&params, 0, Some(1), 1).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r1 - (4.0 * t1 + 2.0 * t2)).abs() < 1e-14);
        let r2 = conditional_log_or(&params, 0, Some(2), 1).unwrap()
            - conditional_log_or(&params, 0, Some(2), 0).unwrap();
        assert!((r2 - (4.0 * t2 + 2.0 * t1)).abs() < 1e-14);
    }

    #[test]
    fn continuous_feature_two_clusters_closed_form() {
        let (b, t) = (0.6, 0.2);
        let params = params_one_feature(1, 2, &[b], &[0.25], &[t]);
        let inside = conditional_log_or(&params, 0, None, 1).unwrap();
        let outside = conditional_log_or(&params, 0, None, 0).unwrap();
        assert!((inside - (b + t)).abs() < 1e-14);
        assert!((outside - (b - t)).abs() < 1e-14);
        assert!(((inside - outside) - 2.0 * t).abs() < 1e-14);
    }

    #[test]
    fn binary_feature_three_clusters_ror() {
        let (t1, t2) = (0.3, -0.12);
        let params = params_one_feature(2, 3, &[0.5], &[0.1, 0.2], &[t1, t2]);
        // ROR for cluster 1 vs reference: exp(4 t1 + 2 t2).
        let r1 = conditional_log_or(&params, 0, Some(1), 1).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r1 - (4.0 * t1 + 2.0 * t2)).abs() < 1e-14);
        let r2 = conditional_log_or(&params, 0, Some(1), 2).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r2 - (4.0 * t2 + 2.0 * t1)).abs() < 1e-14);
    }

    #[test]
    fn continuous_feature_three_clusters_ror() {
        let (t1, t2) = (0.25, -0.1);
        let params = params_one_feature(1, 3, &[0.4], &[0.1, 0.05], &[t1, t2]);
        let r1 = conditional_log_or(&params, 0, None, 1).unwrap()
            - conditional_log_or(&params, 0, None, 0).unwrap();
        assert!((r1 - (2.0 * t1 + t2)).abs() < 1e-14);
        let r2 = conditional_log_or(&params, 0, None, 2).unwrap()
            - conditional_log_or(&params, 0, None, 0).unwrap();
        assert!((r2 - (2.0 * t2 + t1)).abs() < 1e-14);
    }

    #[test]
    fn binary_feature_four_clusters_ror() {
        let (t1, t2, t3) = (0.2, -0.05, 0.12);
        let params = params_one_feature(2, 4, &[0.3], &[0.1, 0.0, -0.05], &[t1, t2, t3]);
        let r1 = conditional_log_or(&params, 0, Some(1), 1).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r1 - (4.0 * t1 + 2.0 * t2 + 2.0 * t3)).abs() < 1e-14);
        let r2 = conditional_log_or(&params, 0, Some(1), 2).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r2 - (4.0 * t2 + 2.0 * t1 + 2.0 * t3)).abs() < 1e-14);
        let r3 = conditional_log_or(&params, 0, Some(1), 3).unwrap()
            - conditional_log_or(&params, 0, Some(1), 0).unwrap();
        assert!((r3 - (4.0 * t3 + 2.0 * t1 + 2.0 * t2)).abs() < 1e-14);
    }

    #[test]
    fn three_level_three_cluster_exchange_symmetry() {
        // Free grid layout is level-major: [t11, t12, t21, t22] with
        // t(level r, cluster c).
        let free = [0.3, -0.1, 0.15, 0.22];
        let params = params_one_feature(3, 3, &[0.2, -0.4], &[0.1, 0.3], &free);
        let ror = |level: usize, cluster: usize| {
            conditional_log_or(&params, 0, Some(level), cluster).unwrap()
                - conditional_log_or(&params, 0, Some(level), 0).unwrap()
        };
        let (t11, t12, t21, t22) = (free[0], free[1], free[2], free[3]);
        // Cluster 1, level 1: 4 t11 + 2 t21 + 2 t12 + t22.
        assert!((ror(1, 1) - (4.0 * t11 + 2.0 * t21 + 2.0 * t12 + t22)).abs() < 1e-14);
        // Exchanging level subscripts maps to level 2.
        assert!((ror(2, 1) - (4.0 * t21 + 2.0 * t11 + 2.0 * t22 + t12)).abs() < 1e-14);
        // Exchanging cluster superscripts maps to cluster 2.
        assert!((ror(1, 2) - (4.0 * t12 + 2.0 * t22 + 2.0 * t11 + t21)).abs() < 1e-14);
    }

    #[test]
    fn zero_interaction_collapses_clusters() {
        let params = params_one_feature(3, 3, &[0.4, -0.2], &[0.3, -0.1], &[0.0; 4]);
        let schema = vec![VariableSchema::categorical("x", &["a", "b", "c"])];
        let table = effect_table(&params, &schema, None, true).unwrap();
        for e in &table.effects {
            let first = e.or_by_cluster[0].unwrap();
            for s in 1..3 {
                assert_eq!(e.or_by_cluster[s].unwrap(), first);
                assert_eq!(e.ror_vs_reference[s].unwrap(), 1.0);
            }
            assert!(!e.interaction_active);
        }
    }

    #[test]
    fn ror_from_ors_reference_values() {
        let r: f64 = ror_from_ors(0.7473, 0.8350).unwrap();
        assert!((r - 1.1174).abs() < 5e-5);
        assert_eq!(ror_from_ors(0.5, 0.5).unwrap(), 1.0);
        let tiny: f64 = ror_from_ors(1.6021, 1e-8).unwrap();
        assert!(tiny < 1e-6);
        assert!(ror_from_ors(-1.0, 2.0).is_err());
    }

    #[test]
    fn interpretation_templates() {
        let mk = |ror: f64| EffectEstimate {
            variable: "x".into(),
            feature: 0,
            level: Some(1),
            level_label: "b".into(),
            or_by_cluster: vec![Some(1.0), Some(ror)],
            ror_vs_reference: vec![Some(1.0), Some(ror)],
            interaction_active: true,
            derivation: "test".into(),
            na_causes: vec![],
        };
        assert!(interpret(&mk(2.0), 1).contains("approximately 100% stronger"));
        assert!(interpret(&mk(1.11), 1).contains("approximately 11% stronger"));
        assert!(interpret(&mk(0.8), 1).contains("approximately 20% weaker"));
        assert!(interpret(&mk(1.0), 1).contains("no differential effect"));
    }
}
