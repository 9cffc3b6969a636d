//! Accelerated proximal gradient for the penalized logistic objective.

use std::ops::Range;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::linalg::eig_max_psd;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions<T> {
    /// Stop when the relative objective change drops below this.
    pub tol: T,
    pub max_iter: usize,
    /// Precomputed Lipschitz estimate `||Z||_2^2 / (4 n)`; computed by
    /// power iteration when absent.
    pub lipschitz: Option<T>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            tol: T::c(1e-9),
            max_iter: 10_000,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome<T> {
    pub coefs: Vec<T>,
    pub objective: T,
    pub converged: bool,
    pub iterations: usize,
    pub rel_change: T,
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp_fast().ln_1p()
    } else {
        x.exp_fast().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp_fast())
    } else {
        let e = x.exp_fast();
        e / (T::one() + e)
    }
}

/// Softplus and sigmoid from one shared exponential.
#[inline]
fn softplus_sigmoid<T: Scalar>(x: T) -> (T, T) {
    if x >= T::zero() {
        let e = (-x).exp_fast();
        (x + e.ln_1p(), T::one() / (T::one() + e))
    } else {
        let e = x.exp_fast();
        (e.ln_1p(), e / (T::one() + e))
    }
}

/// Negative log-likelihood (sum over rows) of the expanded model at flat
/// coefficients `coefs`, with its exact gradient. Evaluation is
/// overflow-guarded through `softplus`.
pub fn negloglik<T: Scalar>(
    design: &GroupedDesign<T>,
    coefs: &ArrayView1<T>,
    y: &[u8],
) -> (T, Array1<T>) {
    let z = design.matrix();
    let n = z.nrows();
    debug_assert_eq!(y.len(), n);
    let mut eta = Array1::<T>::zeros(n);
    general_mat_vec_mul(T::one(), z, coefs, T::zero(), &mut eta);
    let mut value = T::zero();
    let mut resid = Array1::<T>::zeros(n);
    for i in 0..n {
        let yi = T::from_u8(y[i]).unwrap();
        value += softplus(eta[i]) - yi * eta[i];
        resid[i] = sigmoid(eta[i]) - yi;
    }
    let mut grad = Array1::<T>::zeros(z.ncols());
    general_mat_vec_mul(T::one(), &z.t(), &resid, T::zero(), &mut grad);
    (value, grad)
}

/// Binomial deviance `2 * negloglik` at flat coefficients.
pub fn deviance<T: Scalar>(design: &GroupedDesign<T>, coefs: &ArrayView1<T>, y: &[u8]) -> T {
    let (nll, _) = negloglik(design, coefs, y);
    T::c(2.0) * nll
}

/// Group soft-threshold: `v * max(0, 1 - t / ||v||)`, the proximal map of
/// `t * ||.||_2`.
pub fn prox_group<T: Scalar>(v: &[T], t: T) -> Vec<T> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm <= t {
        return vec![T::zero(); v.len()];
    }
    let scale = T::one() - t / norm;
    v.iter().map(|&x| x * scale).collect()
}

fn prox_in_place<T: Scalar>(coefs: &mut Array1<T>, groups: &[Range<usize>], t: T) {
    if t <= T::zero() {
        return;
    }
    for g in groups {
        let mut norm = T::zero();
        for c in g.clone() {
            norm += coefs[c] * coefs[c];
        }
        let norm = norm.sqrt();
        if norm <= t {
            for c in g.clone() {
                coefs[c] = T::zero();
            }
        } else {
            let scale = T::one() - t / norm;
            for c in g.clone() {
                coefs[c] *= scale;
            }
        }
    }
}

fn penalty<T: Scalar>(coefs: &Array1<T>, groups: &[Range<usize>]) -> T {
    let mut acc = T::zero();
    for g in groups {
        let mut norm = T::zero();
        for c in g.clone() {
            norm += coefs[c] * coefs[c];
        }
        acc += norm.sqrt();
    }
    acc
}

/// Smallest penalty weight at which every group is zero: the largest group
/// norm of the mean-scaled gradient at the intercept-only model.
pub fn lambda_max<T: Scalar>(design: &GroupedDesign<T>, y: &[u8]) -> Result<T> {
    let groups: Vec<Range<usize>> = design.groups().into_iter().map(|g| g.cols).collect();
    if groups.is_empty() {
        return Ok(T::zero());
    }
    let n = design.n();
    let nt = T::from_usize(n).unwrap();
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::numerical("outcome is constant; lambda_max undefined"));
    }
    let ybar = T::from_usize(ones).unwrap() / nt;
    let mut resid = Array1::<T>::zeros(n);
    for i in 0..n {
        resid[i] = ybar - T::from_u8(y[i]).unwrap();
    }
    let z = design.matrix();
    let mut grad = Array1::<T>::zeros(z.ncols());
    general_mat_vec_mul(T::one() / nt, &z.t(), &resid, T::zero(), &mut grad);
    let mut best = T::zero();
    for g in &groups {
        let mut norm = T::zero();
        for c in g.clone() {
            norm += grad[c] * grad[c];
        }
        best = best.max(norm.sqrt());
    }
    // The solver recomputes this gradient through a differently ordered
    // reduction; the tiny headroom keeps every group on the zero side of
    // the prox threshold at exactly lambda_max.
    Ok(best * (T::one() + T::c(1e-12)))
}

/// Lipschitz estimate of the mean logistic gradient over this design.
pub fn lipschitz_estimate<T: Scalar>(design: &GroupedDesign<T>) -> T {
    let z = design.matrix();
    let gram = z.t().dot(z);
    let sigma_sq = eig_max_psd(&gram, 200, T::c(1e-12));
    let n = T::from_usize(z.nrows().max(1)).unwrap();
    (sigma_sq / (T::c(4.0) * n)).max(T::c(1e-12))
}

/// Minimize `negloglik/n + lambda * sum_g ||a_g||` by FISTA with
/// backtracking line search and a function-value restart: an iterate that
/// raises the objective keeps its position but drops the momentum, so the
/// objective is non-increasing within every restart segment. The returned
/// coefficients are the best iterate seen.
pub fn fista_solve<T: Scalar>(
    design: &GroupedDesign<T>,
    y: &[u8],
    lambda: T,
    warm_start: Option<&[T]>,
    opts: &SolveOptions<T>,
) -> Result<FitOutcome<T>> {
    if lambda < T::zero() {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let z = design.matrix();
    let n = z.nrows();
    let m = z.ncols();
    if y.len() != n {
        return Err(Error::invalid("outcome length mismatch"));
    }
    let nt = T::from_usize(n).unwrap();
    let n_inv = T::one() / nt;
    let groups: Vec<Range<usize>> = design.groups().into_iter().map(|g| g.cols).collect();
    let yt: Vec<T> = y.iter().map(|&v| T::from_u8(v).unwrap()).collect();

    let lip0 = opts.lipschitz.unwrap_or_else(|| lipschitz_estimate(design));
    let mut lip = if lip0 > T::zero() { lip0 } else { T::one() };
    let lip_floor = lip * T::c(1e-6);

    // Contiguous transpose so the gradient product walks memory linearly.
    let zt = z.t().as_standard_layout().into_owned();

    let f_of_eta = |eta: &Array1<T>| -> T {
        let mut v = T::zero();
        for i in 0..n {
            v += softplus(eta[i]) - yt[i] * eta[i];
        }
        v * n_inv
    };
    let eta_of = |coefs: &Array1<T>, eta: &mut Array1<T>| {
        general_mat_vec_mul(T::one(), z, &coefs.view(), T::zero(), eta);
    };
    // Loss value and gradient residual from one pass over eta.
    let f_grad_from_eta =
        |eta: &Array1<T>, grad: &mut Array1<T>, resid: &mut Array1<T>| -> T {
            let mut v = T::zero();
            for i in 0..n {
                let (sp, sg) = softplus_sigmoid(eta[i]);
                v += sp - yt[i] * eta[i];
                resid[i] = (sg - yt[i]) * n_inv;
            }
            general_mat_vec_mul(T::one(), &zt, &resid.view(), T::zero(), grad);
            v * n_inv
        };

    let mut x = match warm_start {
        Some(w) => {
            if w.len() != m {
                return Err(Error::invalid("warm start length mismatch"));
            }
            Array1::from_vec(w.to_vec())
        }
        None => {
            let mut x0 = Array1::<T>::zeros(m);
            let ones = y.iter().filter(|&&v| v == 1).count();
            if ones > 0 && ones < n {
                let pbar = T::from_usize(ones).unwrap() / nt;
                x0[0] = (pbar / (T::one() - pbar)).ln();
            }
            x0
        }
    };

    let mut resid = Array1::<T>::zeros(n);
    let mut grad = Array1::<T>::zeros(m);
    let mut eta_x = Array1::<T>::zeros(n);
    eta_of(&x, &mut eta_x);
    let mut obj_x = f_of_eta(&eta_x) + lambda * penalty(&x, &groups);
    let mut best_x = x.clone();
    let mut best_obj = obj_x;
    let mut yv = x.clone();
    let mut eta_y = eta_x.clone();
    let mut t_mom = T::one();
    let mut converged = false;
    let mut rel = T::infinity();
    let mut iterations = 0usize;

    let mut eta_cand = Array1::<T>::zeros(n);
    for iter in 1..=opts.max_iter {
        iterations = iter;
        // Let the step size recover between iterations; backtracking pushes
        // it back up wherever the local curvature demands.
        // Let the step size recover between iterations; backtracking pushes
        // it back up wherever the local curvature demands.
        lip = (lip / T::c(1.5)).max(lip_floor);
        let fy = f_grad_from_eta(&eta_y, &mut grad, &mut resid);

        // Backtracking proximal step from yv.
        let (cand, fc) = loop {
            let step = T::one() / lip;
            let mut cand = &yv - &(&grad * step);
            prox_in_place(&mut cand, &groups, lambda * step);
            eta_of(&cand, &mut eta_cand);
            let fc = f_of_eta(&eta_cand);
            let mut ip = T::zero();
            let mut sq = T::zero();
            for c in 0..m {
                let d = cand[c] - yv[c];
                ip += grad[c] * d;
                sq += d * d;
            }
            let bound = fy + ip + lip / T::c(2.0) * sq + T::c(1e-15) * fy.abs().max(T::one());
            if fc <= bound || lip > T::c(1e18) {
                break (cand, fc);
            }
            lip *= T::c(2.0);
        };
        let obj_c = fc + lambda * penalty(&cand, &groups);
        rel = (obj_x - obj_c) / obj_x.abs().max(T::one());

        if obj_c > obj_x {
            // Function restart: keep the position, drop the momentum.
            t_mom = T::one();
            yv = cand;
            obj_x = obj_c;
            x = yv.clone();
            eta_y.assign(&eta_cand);
            eta_x.assign(&eta_cand);
        } else {
            let t_next = (T::one() + (T::one() + T::c(4.0) * t_mom * t_mom).sqrt()) / T::c(2.0);
            let beta = (t_mom - T::one()) / t_next;
            // yv = cand + beta (cand - x); eta follows by linearity.
            for c in 0..m {
                yv[c] = cand[c] + beta * (cand[c] - x[c]);
            }
            for i in 0..n {
                eta_y[i] = eta_cand[i] + beta * (eta_cand[i] - eta_x[i]);
            }
            x = cand;
            eta_x.assign(&eta_cand);
            obj_x = obj_c;
            t_mom = t_next;
            if obj_x < best_obj {
                best_obj = obj_x;
                best_x = x.clone();
            }
            // Converge only on a small non-negative decrease.
            if rel >= T::zero() && rel < opts.tol {
                converged = true;
                break;
            }
        }
    }

    Ok(FitOutcome {
        coefs: best_x.to_vec(),
        objective: best_obj,
        converged,
        iterations,
        rel_change: rel,
    })
}
