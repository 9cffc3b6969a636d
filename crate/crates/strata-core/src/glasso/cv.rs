//! Regularization path and repeated k-fold cross-validation.

use ndarray::linalg::general_mat_vec_mul;
use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, stream};

use super::solver::{fista_solve, lambda_max, lipschitz_estimate, SolveOptions};
use super::{recover_params, AlphaParams, ModelParams};

/// Descending log-spaced grid from `lmax` down to `lmax * min_ratio`.
pub fn lambda_grid<T: Scalar>(lmax: T, size: usize, min_ratio: T) -> Vec<T> {
    assert!(size >= 1);
    if size == 1 || lmax <= T::zero() {
        return vec![lmax];
    }
    let log_max = lmax.ln();
    let log_min = (lmax * min_ratio).ln();
    let step = (log_min - log_max) / T::from_usize(size - 1).unwrap();
    (0..size)
        .map(|i| {
            if i == 0 {
                lmax
            } else {
                (log_max + step * T::from_usize(i).unwrap()).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint<T> {
    pub lambda: T,
    pub coefs: Vec<T>,
    pub objective: T,
    pub deviance: T,
    pub converged: bool,
    pub iterations: usize,
    pub active_mains: usize,
    pub active_interactions: usize,
}

/// Warm-started fits over a descending lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPath<T> {
    pub lambda_max: T,
    pub points: Vec<FitPoint<T>>,
}

impl<T: Scalar> FitPath<T> {
    pub fn lambdas(&self) -> Vec<T> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn alpha_at(&self, idx: usize, design: &GroupedDesign<T>) -> AlphaParams<T> {
        let coefs = Array1::from_vec(self.points[idx].coefs.clone());
        AlphaParams::from_flat(design, &coefs.view())
    }

    pub fn params_at(&self, idx: usize, design: &GroupedDesign<T>) -> Result<ModelParams<T>> {
        recover_params(design, &self.alpha_at(idx, design))
    }
}

fn count_active<T: Scalar>(design: &GroupedDesign<T>, coefs: &[T]) -> (usize, usize) {
    let mut mains = 0usize;
    let mut interactions = 0usize;
    for j in 0..design.p() {
        let span = &design.main_spans[j];
        let comp = &design.composites[j];
        let main_on = coefs[span.start..span.end].iter().any(|&v| v != T::zero())
            || coefs[comp.x.start..comp.x.end].iter().any(|&v| v != T::zero());
        let int_on = coefs[comp.xi.start..comp.xi.end]
            .iter()
            .any(|&v| v != T::zero());
        if main_on {
            mains += 1;
        }
        if int_on {
            interactions += 1;
        }
    }
    (mains, interactions)
}

/// Fit the whole grid with warm starts. `lipschitz` may carry a
/// precomputed estimate for this design.
pub fn fit_path<T: Scalar>(
    design: &GroupedDesign<T>,
    y: &[u8],
    grid: &[T],
    opts: &SolveOptions<T>,
    lipschitz: Option<T>,
) -> Result<FitPath<T>> {
    let lip = lipschitz.unwrap_or_else(|| lipschitz_estimate(design));
    let solve_opts = SolveOptions {
        lipschitz: Some(lip),
        ..*opts
    };
    let mut points = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<T>> = None;
    let mut prev: Option<Vec<T>> = None;
    for &lam in grid {
        // Secant extrapolation along the path: the grid is log-uniform, so
        // continuing the last coefficient step is a better start than the
        // previous solution itself.
        let start: Option<Vec<T>> = match (&warm, &prev) {
            (Some(w), Some(p)) => Some(
                w.iter()
                    .zip(p.iter())
                    .map(|(&a, &b)| a + (a - b))
                    .collect(),
            ),
            (Some(w), None) => Some(w.clone()),
            _ => None,
        };
        let out = fista_solve(design, y, lam, start.as_deref(), &solve_opts)?;
        let coefs = Array1::from_vec(out.coefs.clone());
        let dev = super::solver::deviance(design, &coefs.view(), y);
        let (active_mains, active_interactions) = count_active(design, &out.coefs);
        prev = warm.take();
        warm = Some(out.coefs.clone());
        points.push(FitPoint {
            lambda: lam,
            coefs: out.coefs,
            objective: out.objective,
            deviance: dev,
            converged: out.converged,
            iterations: out.iterations,
            active_mains,
            active_interactions,
        });
    }
    Ok(FitPath {
        lambda_max: grid[0],
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvLoss {
    /// Mean per-observation binomial deviance (matches the likelihood).
    Deviance,
    /// Misclassification rate at the 0.5 threshold.
    Misclassification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig<T> {
    pub grid_size: usize,
    pub lambda_min_ratio: T,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// When set, also report the largest-to-smallest path point before the
    /// active interaction count first exceeds this.
    pub heuristic_max_interactions: Option<usize>,
    pub loss: CvLoss,
    pub solve: SolveOptions<T>,
}

impl<T: Scalar> Default for CvConfig<T> {
    fn default() -> Self {
        CvConfig {
            grid_size: 100,
            lambda_min_ratio: T::c(1e-3),
            folds: 10,
            repeats: 1,
            seed: 0,
            heuristic_max_interactions: None,
            loss: CvLoss::Deviance,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<T> {
    pub lambda: Vec<T>,
    /// Mean validation error per lambda, from the winning repeat.
    pub mean_error: Vec<T>,
    pub se_error: Vec<T>,
    pub lambda_cv: T,
    pub lambda_cv_index: usize,
    pub best_repeat: usize,
    pub repeats: usize,
    pub folds: usize,
    pub stratified_refold: bool,
    pub heuristic_lambda: Option<T>,
    pub heuristic_index: Option<usize>,
    pub seed: u64,
}

impl<T: Scalar> CvResult<T> {
    /// CSV of the validation curve: `lambda,mean_error,se_error`.
    pub fn write_curve_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,mean_error,se_error")?;
        for i in 0..self.lambda.len() {
            writeln!(
                w,
                "{},{},{}",
                self.lambda[i].to_f64_lossy(),
                self.mean_error[i].to_f64_lossy(),
                self.se_error[i].to_f64_lossy()
            )?;
        }
        Ok(())
    }
}

/// Fold assignment: random chunks, falling back to stratified round-robin
/// when a fold would miss an outcome class. Returns (assignment, stratified).
pub fn make_folds(y: &[u8], folds: usize, seed: u64, repeat: u64) -> Result<(Vec<usize>, bool)> {
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!("folds = {folds} outside 2..={n}")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = n - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::numerical(
            "need at least 2 rows of each outcome class for cross-validation",
        ));
    }
    let mut rng = seed::rng(seed, stream::CV_FOLDS, repeat);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assign = vec![0usize; n];
    for (pos_in_order, &row) in order.iter().enumerate() {
        assign[row] = pos_in_order * folds / n;
    }
    let ok = (0..folds).all(|f| {
        let mut has = [false, false];
        for i in 0..n {
            if assign[i] == f {
                has[y[i] as usize] = true;
            }
        }
        has[0] && has[1]
    });
    if ok {
        return Ok((assign, false));
    }
    // Stratified: deal each class round-robin after an independent shuffle.
    let mut pos_rows: Vec<usize> = (0..n).filter(|&i| y[i] == 1).collect();
    let mut neg_rows: Vec<usize> = (0..n).filter(|&i| y[i] == 0).collect();
    pos_rows.shuffle(&mut rng);
    neg_rows.shuffle(&mut rng);
    for (c, &row) in pos_rows.iter().enumerate() {
        assign[row] = c % folds;
    }
    for (c, &row) in neg_rows.iter().enumerate() {
        assign[row] = c % folds;
    }
    Ok((assign, true))
}

/// Per-observation validation error of the coefficient vector on rows of
/// `val_design`.
fn validation_error<T: Scalar>(
    val_design: &GroupedDesign<T>,
    y_val: &[u8],
    coefs: &[T],
    loss: CvLoss,
) -> T {
    let z = val_design.matrix();
    let n = z.nrows();
    let coefs = Array1::from_vec(coefs.to_vec());
    let mut eta = Array1::<T>::zeros(n);
    general_mat_vec_mul(T::one(), z, &coefs.view(), T::zero(), &mut eta);
    let nt = T::from_usize(n).unwrap();
    match loss {
        CvLoss::Deviance => {
            let mut acc = T::zero();
            for i in 0..n {
                let yi = T::from_u8(y_val[i]).unwrap();
                let sp = if eta[i] > T::zero() {
                    eta[i] + (-eta[i]).exp().ln_1p()
                } else {
                    eta[i].exp().ln_1p()
                };
                acc += sp - yi * eta[i];
            }
            T::c(2.0) * acc / nt
        }
        CvLoss::Misclassification => {
            let mut wrong = 0usize;
            for i in 0..n {
                let pred = u8::from(eta[i] > T::zero());
                if pred != y_val[i] {
                    wrong += 1;
                }
            }
            T::from_usize(wrong).unwrap() / nt
        }
    }
}

/// Repeated k-fold cross-validation over a shared grid, plus the full-data
/// path. The winning repeat is the one whose minimal mean validation error
/// is lowest; exact ties keep the earliest repeat, and ties along the grid
/// keep the largest lambda.
pub fn cv_select<T: Scalar>(
    design: &GroupedDesign<T>,
    y: &[u8],
    cfg: &CvConfig<T>,
) -> Result<(CvResult<T>, FitPath<T>)> {
    if cfg.repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let lmax = lambda_max(design, y)?;
    if !(lmax > T::zero()) {
        return Err(Error::numerical("lambda_max is zero; nothing to penalize"));
    }
    let grid = lambda_grid(lmax, cfg.grid_size, cfg.lambda_min_ratio);

    let full_lip = lipschitz_estimate(design);
    let full_path = fit_path(design, y, &grid, &cfg.solve, Some(full_lip))?;

    let mut any_stratified = false;
    let mut best: Option<(usize, T, Vec<T>, Vec<T>)> = None; // repeat, min, mean, se

    for r in 0..cfg.repeats {
        let (assign, stratified) = make_folds(y, cfg.folds, cfg.seed, r as u64)?;
        any_stratified |= stratified;

        let fold_curves: Vec<Result<Vec<T>>> = (0..cfg.folds)
            .into_par_iter()
            .map(|f| {
                let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != f).collect();
                let val: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == f).collect();
                let d_train = design.select_rows(&train);
                let d_val = design.select_rows(&val);
                let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
                let y_val: Vec<u8> = val.iter().map(|&i| y[i]).collect();
                let lip = lipschitz_estimate(&d_train);
                let path = fit_path(&d_train, &y_train, &grid, &cfg.solve, Some(lip))?;
                Ok(path
                    .points
                    .iter()
                    .map(|pt| validation_error(&d_val, &y_val, &pt.coefs, cfg.loss))
                    .collect())
            })
            .collect();

        let mut curves = Vec::with_capacity(cfg.folds);
        for c in fold_curves {
            curves.push(c?);
        }
        let ft = T::from_usize(cfg.folds).unwrap();
        let mut mean = vec![T::zero(); grid.len()];
        let mut se = vec![T::zero(); grid.len()];
        for (l, m_l) in mean.iter_mut().enumerate() {
            let mut acc = T::zero();
            for c in &curves {
                acc += c[l];
            }
            *m_l = acc / ft;
        }
        for (l, se_l) in se.iter_mut().enumerate() {
            let mut var = T::zero();
            for c in &curves {
                let d = c[l] - mean[l];
                var += d * d;
            }
            *se_l = (var / (ft - T::one())).sqrt() / ft.sqrt();
        }
        let min_val = mean.iter().cloned().fold(T::infinity(), T::min);
        match &best {
            Some((_, bm, _, _)) if min_val >= *bm => {}
            _ => best = Some((r, min_val, mean, se)),
        }
    }

    let (best_repeat, _, mean_error, se_error) = best.expect("repeats >= 1");
    let mut lambda_cv_index = 0usize;
    for (l, &v) in mean_error.iter().enumerate() {
        if v < mean_error[lambda_cv_index] {
            lambda_cv_index = l;
        }
    }

    let (heuristic_lambda, heuristic_index) = match cfg.heuristic_max_interactions {
        None => (None, None),
        Some(p_max) => {
            let mut idx = None;
            for (l, pt) in full_path.points.iter().enumerate() {
                if pt.active_interactions <= p_max {
                    idx = Some(l);
                } else {
                    break;
                }
            }
            (idx.map(|l| grid[l]), idx)
        }
    };

    Ok((
        CvResult {
            lambda: grid.clone(),
            mean_error,
            se_error,
            lambda_cv: grid[lambda_cv_index],
            lambda_cv_index,
            best_repeat,
            repeats: cfg.repeats,
            folds: cfg.folds,
            stratified_refold: any_stratified,
            heuristic_lambda,
            heuristic_index,
            seed: cfg.seed,
        },
        full_path,
    ))
}
