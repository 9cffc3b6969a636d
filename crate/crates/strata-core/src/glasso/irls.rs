//! Unpenalized maximum likelihood by Newton-IRLS on the reference-coded
//! design: intercept, per-feature dummies (reference level dropped),
//! cluster dummies (cluster 0 dropped), and optionally all
//! feature-by-cluster interaction dummies.
//!
//! Exactly collinear columns are detected up front and reported as aliased;
//! coefficients that diverge past the separation threshold are reported as
//! non-estimable. Both come back as `None` estimates with a cause, the way
//! a saturated fit on data with an empty feature-by-cluster cell should.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarKind};
use crate::error::{Error, Result};
use crate::linalg::{chol_inverse, chol_solve, cholesky, dependent_columns};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaCause {
    /// Column exactly collinear with earlier columns.
    Aliased,
    /// Coefficient diverged past the separation threshold.
    Separated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmTerm<T> {
    pub name: String,
    /// Feature index, when the term involves a feature.
    pub feature: Option<usize>,
    /// Dummy level index (>= 1) for categorical features.
    pub level: Option<usize>,
    /// Dummy cluster index (>= 1) for cluster main effects / interactions.
    pub cluster: Option<usize>,
    pub estimate: Option<T>,
    pub se: Option<T>,
    pub na_cause: Option<NaCause>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IrlsOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// |coefficient| beyond this is treated as non-estimable.
    pub separation_threshold: T,
}

impl<T: Scalar> Default for IrlsOptions<T> {
    fn default() -> Self {
        IrlsOptions {
            tol: T::c(1e-12),
            max_iter: 100,
            separation_threshold: T::c(30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit<T> {
    pub terms: Vec<GlmTerm<T>>,
    pub deviance: T,
    pub converged: bool,
    pub iterations: usize,
    pub k: usize,
    pub include_interactions: bool,
}

impl<T: Scalar> GlmFit<T> {
    fn find(&self, feature: usize, level: Option<usize>, cluster: Option<usize>) -> Option<&GlmTerm<T>> {
        self.terms
            .iter()
            .find(|t| t.feature == Some(feature) && t.level == level && t.cluster == cluster)
    }

    /// True when any interaction dummy of (feature, level) is aliased,
    /// which entangles the remaining coefficients of that cell.
    fn cell_aliased(&self, feature: usize, level: Option<usize>) -> bool {
        self.terms.iter().any(|t| {
            t.feature == Some(feature)
                && t.level == level
                && t.na_cause == Some(NaCause::Aliased)
        })
    }

    /// Conditional log odds ratio for a feature within a cluster, in
    /// reference coding: main dummy plus, outside cluster 0, the matching
    /// interaction dummy. `level` is `None` for continuous features (unit
    /// increase). Returns `None` when an involved coefficient is not
    /// estimable.
    pub fn conditional_log_or(
        &self,
        feature: usize,
        level: Option<usize>,
        cluster: usize,
    ) -> Option<T> {
        if self.cell_aliased(feature, level) {
            return None;
        }
        let main = self.find(feature, level, None)?;
        let mut value = main.estimate?;
        if self.include_interactions && cluster > 0 {
            let inter = self.find(feature, level, Some(cluster))?;
            value += inter.estimate?;
        }
        Some(value)
    }

    /// Ratio of odds ratios of `cluster` versus cluster 0 for one feature
    /// (level) cell.
    pub fn log_ror(&self, feature: usize, level: Option<usize>, cluster: usize) -> Option<T> {
        let a = self.conditional_log_or(feature, level, 0)?;
        let b = self.conditional_log_or(feature, level, cluster)?;
        Some(b - a)
    }
}

/// Reference-coded design. Term order: intercept, feature mains in feature
/// order (levels 1..L within a categorical), cluster dummies, then
/// interactions feature-major, level-major, cluster-major.
fn dummy_design<T: Scalar>(
    ds: &Dataset<T>,
    labels: Option<(&[u32], usize)>,
    include_interactions: bool,
) -> Result<(Array2<T>, Vec<GlmTerm<T>>)> {
    let n = ds.n();
    let p = ds.p();
    let q = ds.q();
    let mut terms: Vec<GlmTerm<T>> = vec![GlmTerm {
        name: "(intercept)".into(),
        feature: None,
        level: None,
        cluster: None,
        estimate: None,
        se: None,
        na_cause: None,
    }];
    for j in 0..p {
        let f = &ds.features()[j];
        match f.kind {
            VarKind::Continuous => terms.push(GlmTerm {
                name: f.name.clone(),
                feature: Some(j),
                level: None,
                cluster: None,
                estimate: None,
                se: None,
                na_cause: None,
            }),
            VarKind::Categorical => {
                for a in 1..f.levels.len() {
                    terms.push(GlmTerm {
                        name: format!("{}[{}]", f.name, f.levels[a]),
                        feature: Some(j),
                        level: Some(a),
                        cluster: None,
                        estimate: None,
                        se: None,
                        na_cause: None,
                    });
                }
            }
        }
    }
    if let Some((_, k)) = labels {
        for s in 1..k {
            terms.push(GlmTerm {
                name: format!("cluster[{s}]"),
                feature: None,
                level: None,
                cluster: Some(s),
                estimate: None,
                se: None,
                na_cause: None,
            });
        }
        if include_interactions {
            for j in 0..p {
                let f = &ds.features()[j];
                let levels: Vec<Option<usize>> = match f.kind {
                    VarKind::Continuous => vec![None],
                    VarKind::Categorical => (1..f.levels.len()).map(Some).collect(),
                };
                for level in levels {
                    for s in 1..k {
                        let lname = match level {
                            Some(a) => format!("{}[{}]", f.name, f.levels[a]),
                            None => f.name.clone(),
                        };
                        terms.push(GlmTerm {
                            name: format!("{lname}:cluster[{s}]"),
                            feature: Some(j),
                            level,
                            cluster: Some(s),
                            estimate: None,
                            se: None,
                            na_cause: None,
                        });
                    }
                }
            }
        }
    }

    let m = terms.len();
    let mut x = Array2::<T>::zeros((n, m));
    for i in 0..n {
        x[(i, 0)] = T::one();
    }
    for (c, t) in terms.iter().enumerate().skip(1) {
        for i in 0..n {
            let feat_val: T = match t.feature {
                None => T::one(), // cluster main
                Some(j) => {
                    if j < q {
                        ds.continuous_col(j)[i]
                    } else if ds.categorical_col(j)[i] as usize == t.level.unwrap_or(0) {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
            };
            let cl_val: T = match t.cluster {
                None => T::one(),
                Some(s) => {
                    let (labels, _) = labels.expect("cluster term without labels");
                    if labels[i] as usize == s {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
            };
            x[(i, c)] = feat_val * cl_val;
        }
    }
    Ok((x, terms))
}

/// Newton-IRLS maximum likelihood fit on the reference-coded design.
/// `labels` adds cluster main effects (and interactions when asked);
/// `None` fits a features-only model, which is what the per-cluster subset
/// cross-check uses.
pub fn fit_unpenalized<T: Scalar>(
    ds: &Dataset<T>,
    labels: Option<(&[u32], usize)>,
    include_interactions: bool,
    opts: &IrlsOptions<T>,
) -> Result<GlmFit<T>> {
    if let Some((l, k)) = labels {
        if l.len() != ds.n() {
            return Err(Error::invalid("labels length mismatch"));
        }
        if k < 2 {
            return Err(Error::invalid("need k >= 2"));
        }
    }
    let (x, mut terms) = dummy_design(ds, labels, include_interactions)?;
    let n = x.nrows();
    let m = x.ncols();
    let y: Vec<T> = ds.outcome().iter().map(|&v| T::from_u8(v).unwrap()).collect();

    // Exact collinearity first; aliased columns drop out of the fit.
    let gram = x.t().dot(&x);
    let dep = dependent_columns(&gram, T::c(1e-10));
    let keep: Vec<usize> = (0..m).filter(|&c| !dep[c]).collect();
    for (c, t) in terms.iter_mut().enumerate() {
        if dep[c] {
            t.na_cause = Some(NaCause::Aliased);
        }
    }
    let mut xk = Array2::<T>::zeros((n, keep.len()));
    for (cc, &c) in keep.iter().enumerate() {
        for i in 0..n {
            xk[(i, cc)] = x[(i, c)];
        }
    }

    let mk = keep.len();
    let mut beta = Array1::<T>::zeros(mk);
    let ones = ds.outcome().iter().filter(|&&v| v == 1).count();
    let pbar = T::from_usize(ones).unwrap() / T::from_usize(n).unwrap();
    beta[0] = (pbar / (T::one() - pbar)).ln();

    let deviance_at = |eta: &Array1<T>| -> T {
        let mut acc = T::zero();
        for i in 0..n {
            let sp = if eta[i] > T::zero() {
                eta[i] + (-eta[i]).exp().ln_1p()
            } else {
                eta[i].exp().ln_1p()
            };
            acc += sp - y[i] * eta[i];
        }
        T::c(2.0) * acc
    };

    let mut eta = xk.dot(&beta);
    let mut dev = deviance_at(&eta);
    let mut converged = false;
    let mut iterations = 0usize;
    let mut info_l: Option<Array2<T>> = None;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut w = Array1::<T>::zeros(n);
        let mut resid = Array1::<T>::zeros(n);
        for i in 0..n {
            let mu = T::one() / (T::one() + (-eta[i]).exp());
            w[i] = mu * (T::one() - mu);
            resid[i] = y[i] - mu;
        }
        // Information matrix X' W X and score X'(y - mu).
        let mut xtwx = Array2::<T>::zeros((mk, mk));
        for a in 0..mk {
            for b in a..mk {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += xk[(i, a)] * w[i] * xk[(i, b)];
                }
                xtwx[(a, b)] = acc;
                xtwx[(b, a)] = acc;
            }
        }
        let score = xk.t().dot(&resid);
        let l = match cholesky(&xtwx) {
            Ok(l) => l,
            Err(_) => break, // weights collapsed; keep last iterate
        };
        let step = chol_solve(&l, &score);
        info_l = Some(l);

        // Step-halving keeps the deviance non-increasing.
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &(&step * scale);
            let eta_c = xk.dot(&cand);
            let dev_c = deviance_at(&eta_c);
            if dev_c <= dev + T::c(1e-12) * dev.abs().max(T::one()) {
                let rel = (dev - dev_c).abs() / (dev_c.abs() + T::c(0.1));
                beta = cand;
                eta = eta_c;
                dev = dev_c;
                accepted = true;
                if rel < opts.tol {
                    converged = true;
                }
                break;
            }
            scale /= T::c(2.0);
        }
        if !accepted || converged {
            converged = converged || !accepted;
            break;
        }
    }

    // Standard errors from the final information matrix.
    let se: Option<Array2<T>> = info_l.map(|l| chol_inverse(&l));
    for (cc, &c) in keep.iter().enumerate() {
        let est = beta[cc];
        if est.abs() > opts.separation_threshold {
            terms[c].na_cause = Some(NaCause::Separated);
            continue;
        }
        terms[c].estimate = Some(est);
        terms[c].se = se.as_ref().map(|v| v[(cc, cc)].sqrt());
    }

    Ok(GlmFit {
        terms,
        deviance: dev,
        converged,
        iterations,
        k: labels.map(|(_, k)| k).unwrap_or(1),
        include_interactions,
    })
}
