//! Sparse logistic regression under the overlapping group penalty.
//!
//! The solver minimizes `negloglik/n + lambda * sum_g ||a_g||_2` over the
//! weight-folded expanded design by accelerated proximal gradient with a
//! function-value restart ([`solver`]), the penalty weight is selected by
//! repeated 10-fold cross-validation over a log-spaced grid ([`cv`]), and
//! the fitted expanded coefficients are mapped back to interpretable
//! parameters here. [`irls`] fits the unpenalized reference-coded model by
//! Newton iterations for cross-checks against the sparse fit.

pub mod cv;
pub mod irls;
pub mod solver;

pub use cv::{
    cv_select, fit_path, lambda_grid, make_folds, CvConfig, CvLoss, CvResult, FitPath, FitPoint,
};
pub use irls::{fit_unpenalized, GlmFit, GlmTerm, IrlsOptions, NaCause};
pub use solver::{
    deviance, fista_solve, lambda_max, negloglik, prox_group, FitOutcome, SolveOptions,
};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coefficients of the expanded predictor, unscaled (weights folded back
/// out): per feature the main copy, the shared cluster copy, and per
/// feature the composite triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams<T> {
    pub intercept: T,
    /// Per feature: length L_j (1 for continuous).
    pub main: Vec<Vec<T>>,
    /// Length k.
    pub cluster: Vec<T>,
    /// Duplicated feature copies inside each composite.
    pub comp_x: Vec<Vec<T>>,
    /// Duplicated cluster copies inside each composite (length k each).
    pub comp_c: Vec<Vec<T>>,
    /// Interaction coefficients, level-major (length L_j * k).
    pub comp_xi: Vec<Vec<T>>,
}

impl<T: Scalar> AlphaParams<T> {
    /// Structured view of a flat solver-space coefficient vector.
    pub fn from_flat(design: &GroupedDesign<T>, coefs: &ArrayView1<T>) -> Self {
        let p = design.p();
        let mut main = Vec::with_capacity(p);
        for span in &design.main_spans {
            main.push(coefs.slice(ndarray::s![span.clone()]).to_vec());
        }
        let cluster = coefs
            .slice(ndarray::s![design.cluster_span.clone()])
            .to_vec();
        let mut comp_x = Vec::with_capacity(p);
        let mut comp_c = Vec::with_capacity(p);
        let mut comp_xi = Vec::with_capacity(p);
        for (j, comp) in design.composites.iter().enumerate() {
            let wx = design.weight_x(j);
            let wc = design.weight_c(j);
            comp_x.push(
                coefs
                    .slice(ndarray::s![comp.x.clone()])
                    .iter()
                    .map(|&u| u / wx)
                    .collect(),
            );
            comp_c.push(
                coefs
                    .slice(ndarray::s![comp.c.clone()])
                    .iter()
                    .map(|&u| u / wc)
                    .collect(),
            );
            comp_xi.push(coefs.slice(ndarray::s![comp.xi.clone()]).to_vec());
        }
        AlphaParams {
            intercept: coefs[0],
            main,
            cluster,
            comp_x,
            comp_c,
            comp_xi,
        }
    }

    /// Inverse of [`AlphaParams::from_flat`].
    pub fn to_flat(&self, design: &GroupedDesign<T>) -> Array1<T> {
        let mut coefs = Array1::<T>::zeros(design.m());
        coefs[0] = self.intercept;
        for (j, span) in design.main_spans.iter().enumerate() {
            for (o, &v) in self.main[j].iter().enumerate() {
                coefs[span.start + o] = v;
            }
        }
        for (o, &v) in self.cluster.iter().enumerate() {
            coefs[design.cluster_span.start + o] = v;
        }
        for (j, comp) in design.composites.iter().enumerate() {
            let wx = design.weight_x(j);
            let wc = design.weight_c(j);
            for (o, &v) in self.comp_x[j].iter().enumerate() {
                coefs[comp.x.start + o] = v * wx;
            }
            for (o, &v) in self.comp_c[j].iter().enumerate() {
                coefs[comp.c.start + o] = v * wc;
            }
            for (o, &v) in self.comp_xi[j].iter().enumerate() {
                coefs[comp.xi.start + o] = v;
            }
        }
        coefs
    }
}

/// Interpretable model parameters under the sum-to-zero parameterization.
///
/// `beta[j]` has length 1 for a continuous feature and L_j for a
/// categorical one; `theta[j]` has length k for continuous and L_j * k
/// (level-major) for categorical. Categorical blocks sum to zero within
/// solver tolerance, as does `gamma` and every row/column of each theta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub intercept: T,
    pub beta: Vec<Vec<T>>,
    pub gamma: Vec<T>,
    pub theta: Vec<Vec<T>>,
    pub main_active: Vec<bool>,
    pub interaction_active: Vec<bool>,
    pub cluster_active: bool,
    pub level_counts: Vec<usize>,
    pub q: usize,
    pub k: usize,
}

impl<T: Scalar> ModelParams<T> {
    /// Linear predictor for one observation given its cluster.
    pub fn logit(&self, cont: &[T], cat: &[u32], cluster: usize) -> T {
        let mut eta = self.intercept + self.gamma[cluster];
        for (j, &x) in cont.iter().enumerate() {
            eta += self.beta[j][0] * x + self.theta[j][cluster] * x;
        }
        for (c, &a) in cat.iter().enumerate() {
            let j = self.q + c;
            let a = a as usize;
            eta += self.beta[j][a] + self.theta[j][a * self.k + cluster];
        }
        eta
    }

    pub fn probability(&self, cont: &[T], cat: &[u32], cluster: usize) -> T {
        let eta = self.logit(cont, cat, cluster);
        T::one() / (T::one() + (-eta).exp())
    }
}

/// Map expanded coefficients to the canonical interpretable parameters.
///
/// The two feature copies add and the cluster copies accumulate over
/// features. The raw interaction block is then replaced by its
/// double-centered representative, with the centered-out margins absorbed
/// into the parent effects and the intercept: the duplicated-copy
/// parameterization leaves those margins tied to the copies, so the raw
/// block does not satisfy the sum-to-zero constraints the odds-ratio
/// calculus is stated under, while this absorption preserves the linear
/// predictor exactly and therefore every fitted probability and odds
/// ratio. Errors if an interaction is present without both parent
/// effects, which indicates a solver bug.
pub fn recover_params<T: Scalar>(
    design: &GroupedDesign<T>,
    alpha: &AlphaParams<T>,
) -> Result<ModelParams<T>> {
    let p = design.p();
    let k = design.k;
    let kt = T::from_usize(k).unwrap();
    let mut intercept = alpha.intercept;
    let mut beta = Vec::with_capacity(p);
    let mut theta = Vec::with_capacity(p);
    let mut gamma = alpha.cluster.clone();
    for j in 0..p {
        for (s, &v) in alpha.comp_c[j].iter().enumerate() {
            gamma[s] += v;
        }
        let l = design.level_counts[j];
        let raw = &alpha.comp_xi[j];
        if l == 1 {
            // Continuous: the cluster margin of theta is redundant with
            // the feature's own slope.
            let mean = raw.iter().cloned().sum::<T>() / kt;
            beta.push(vec![alpha.main[j][0] + alpha.comp_x[j][0] + mean]);
            theta.push(raw.iter().map(|&v| v - mean).collect());
        } else {
            let lt = T::from_usize(l).unwrap();
            let mut row_mean = vec![T::zero(); l];
            let mut col_mean = vec![T::zero(); k];
            let mut grand = T::zero();
            for a in 0..l {
                for s in 0..k {
                    let v = raw[a * k + s];
                    row_mean[a] += v;
                    col_mean[s] += v;
                    grand += v;
                }
            }
            for v in row_mean.iter_mut() {
                *v /= kt;
            }
            for v in col_mean.iter_mut() {
                *v /= lt;
            }
            grand /= lt * kt;
            let mut centered = vec![T::zero(); l * k];
            for a in 0..l {
                for s in 0..k {
                    centered[a * k + s] = raw[a * k + s] - row_mean[a] - col_mean[s] + grand;
                }
            }
            let mut b: Vec<T> = (0..l)
                .map(|a| alpha.main[j][a] + alpha.comp_x[j][a] + row_mean[a] - grand)
                .collect();
            // Center the categorical main block itself; its mean is a
            // shared offset that belongs to the intercept.
            let b_mean = b.iter().cloned().sum::<T>() / lt;
            for v in b.iter_mut() {
                *v -= b_mean;
            }
            for s in 0..k {
                gamma[s] += col_mean[s] - grand;
            }
            intercept += grand + b_mean;
            beta.push(b);
            theta.push(centered);
        }
    }
    // Same for the cluster block.
    let g_mean = gamma.iter().cloned().sum::<T>() / kt;
    for v in gamma.iter_mut() {
        *v -= g_mean;
    }
    intercept += g_mean;

    let is_nonzero = |v: &[T]| v.iter().any(|&x| x != T::zero());
    let interaction_active: Vec<bool> = theta.iter().map(|t| is_nonzero(t)).collect();
    let main_active: Vec<bool> = beta.iter().map(|b| is_nonzero(b)).collect();
    let cluster_active = is_nonzero(&gamma);

    for j in 0..p {
        if interaction_active[j] && !(main_active[j] && cluster_active) {
            return Err(Error::numerical(format!(
                "strong hierarchy violated for feature {j}: interaction active without parents"
            )));
        }
    }

    Ok(ModelParams {
        intercept,
        beta,
        gamma,
        theta,
        main_active,
        interaction_active,
        cluster_active,
        level_counts: design.level_counts.clone(),
        q: design.q,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, VariableSchema};
    use crate::design::build_design;
    use ndarray::array;

    fn toy_design() -> (Dataset<f64>, GroupedDesign<f64>) {
        let ds = Dataset::from_parts(
            vec![
                VariableSchema::continuous("x1"),
                VariableSchema::categorical("x2", &["a", "b", "c"]),
            ],
            VariableSchema::outcome("y", "0", "1"),
            array![[0.1], [0.4], [-1.2], [2.0], [0.9], [-0.3]],
            vec![vec![0, 1, 2, 1, 0, 2]],
            vec![0, 1, 0, 1, 0, 1],
        )
        .unwrap();
        let labels = vec![0u32, 1, 0, 1, 0, 1];
        let design = build_design(&ds, &labels, 2).unwrap();
        (ds, design)
    }

    #[test]
    fn alpha_round_trips_through_flat() {
        let (_, design) = toy_design();
        let m = design.m();
        let coefs = Array1::from_iter((0..m).map(|i| (i as f64) * 0.1 - 0.7));
        let alpha = AlphaParams::from_flat(&design, &coefs.view());
        let back = alpha.to_flat(&design);
        for i in 0..m {
            assert!((back[i] - coefs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn recovery_preserves_predictor_and_centers_interactions() {
        let (ds, design) = toy_design();
        let m = design.m();
        let coefs = Array1::from_iter((0..m).map(|i| ((i * 7 % 5) as f64) * 0.2 - 0.3));
        let alpha = AlphaParams::from_flat(&design, &coefs.view());
        let params = recover_params(&design, &alpha).unwrap();
        // Same linear predictor through either parameterization.
        let labels = vec![0u32, 1, 0, 1, 0, 1];
        let eta_design = design.matrix().dot(&coefs);
        for i in 0..ds.n() {
            let eta = params.logit(
                &[ds.continuous_col(0)[i]],
                &[ds.categorical_col(1)[i]],
                labels[i] as usize,
            );
            assert!((eta - eta_design[i]).abs() < 1e-12, "row {i}");
        }
        // Centering zeroes the interaction margins for any coefficients;
        // the main-block zero sums additionally need solver optimality and
        // are checked on converged fits elsewhere.
        let k = design.k;
        for (j, theta) in params.theta.iter().enumerate() {
            let l = params.level_counts[j];
            if l > 1 {
                for s in 0..k {
                    let col: f64 = (0..l).map(|a| theta[a * k + s]).sum();
                    assert!(col.abs() < 1e-12, "theta[{j}] col {s}");
                }
            }
            for a in 0..l {
                let row: f64 = (0..k).map(|s| theta[a * k + s]).sum();
                assert!(row.abs() < 1e-12, "theta[{j}] row {a}");
            }
        }
    }

    #[test]
    fn zero_composites_collapse_to_main_only() {
        let (_, design) = toy_design();
        let mut coefs = Array1::<f64>::zeros(design.m());
        coefs[0] = 0.5;
        // Zero-sum main blocks, as solver optima produce.
        coefs[design.main_spans[0].start] = 0.1; // continuous slope
        let cat = &design.main_spans[1];
        coefs[cat.start] = 0.1;
        coefs[cat.start + 1] = 0.0;
        coefs[cat.start + 2] = -0.1;
        coefs[design.cluster_span.start] = -0.2;
        coefs[design.cluster_span.start + 1] = 0.2;
        let alpha = AlphaParams::from_flat(&design, &coefs.view());
        let params = recover_params(&design, &alpha).unwrap();
        for j in 0..design.p() {
            assert!(params.theta[j].iter().all(|&t| t == 0.0));
            assert!(!params.interaction_active[j]);
            for (o, &b) in params.beta[j].iter().enumerate() {
                assert_eq!(b, alpha.main[j][o]);
            }
        }
        assert_eq!(params.gamma, alpha.cluster);
        assert_eq!(params.intercept, 0.5);
    }

    #[test]
    fn hierarchy_violation_is_reported() {
        let (_, design) = toy_design();
        let mut coefs = Array1::<f64>::zeros(design.m());
        // Interaction coefficient without any main effect.
        coefs[design.composites[0].xi.start] = 0.4;
        let alpha = AlphaParams::from_flat(&design, &coefs.view());
        assert!(recover_params(&design, &alpha).is_err());
    }
}
