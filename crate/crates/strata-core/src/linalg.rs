//! Small dense symmetric-matrix helpers used by the solvers.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::invalid("cholesky: matrix not square"));
    }
    let mut l = Array2::<T>::zeros((m, m));
    for j in 0..m {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::numerical(format!(
                "cholesky: non-positive pivot at column {j}"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..m {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
pub fn chol_solve<T: Scalar>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let m = l.nrows();
    let mut y = Array1::<T>::zeros(m);
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Array1::<T>::zeros(m);
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in (i + 1)..m {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix from its Cholesky factor.
pub fn chol_inverse<T: Scalar>(l: &Array2<T>) -> Array2<T> {
    let m = l.nrows();
    let mut inv = Array2::<T>::zeros((m, m));
    for j in 0..m {
        let mut e = Array1::<T>::zeros(m);
        e[j] = T::one();
        let col = chol_solve(l, &e);
        inv.column_mut(j).assign(&col);
    }
    // Symmetrize against round-off.
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (inv[(i, j)] + inv[(j, i)]) / T::c(2.0);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

/// Numerically dependent columns of a Gram matrix, found by diagonally
/// pivoted Cholesky. A column whose remaining diagonal mass drops below
/// `rel_tol` times its original diagonal is linearly dependent on the
/// columns processed before it. Ties pick the lowest index, so among
/// duplicated columns the later one is flagged.
pub fn dependent_columns<T: Scalar>(gram: &Array2<T>, rel_tol: T) -> Vec<bool> {
    let m = gram.nrows();
    let mut w = gram.clone();
    let orig: Vec<T> = (0..m).map(|j| gram[(j, j)]).collect();
    let mut state = vec![0u8; m]; // 0 = pending, 1 = processed, 2 = aliased
    loop {
        let mut best: Option<(usize, T)> = None;
        for j in 0..m {
            if state[j] != 0 {
                continue;
            }
            let d = w[(j, j)];
            match best {
                Some((_, bd)) if d <= bd => {}
                _ => best = Some((j, d)),
            }
        }
        let Some((j, d)) = best else { break };
        if orig[j] <= T::zero() || d <= rel_tol * orig[j] {
            state[j] = 2;
            continue;
        }
        // Schur complement update of the pending block.
        for r in 0..m {
            if state[r] != 0 || r == j {
                continue;
            }
            let f = w[(r, j)] / d;
            for c in 0..m {
                if state[c] != 0 || c == j {
                    continue;
                }
                let delta = f * w[(j, c)];
                w[(r, c)] = w[(r, c)] - delta;
            }
        }
        state[j] = 1;
    }
    state.iter().map(|&s| s == 2).collect()
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration with a deterministic start vector.
pub fn eig_max_psd<T: Scalar>(gram: &Array2<T>, max_iter: usize, tol: T) -> T {
    let m = gram.nrows();
    if m == 0 {
        return T::zero();
    }
    let mut v = Array1::<T>::from_elem(m, T::one() / T::from_usize(m).unwrap().sqrt());
    let mut lambda = T::zero();
    for _ in 0..max_iter {
        let u = gram.dot(&v);
        let norm = u.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        let next = norm;
        v = u / norm;
        if (next - lambda).abs() <= tol * next.max(T::one()) {
            return next;
        }
        lambda = next;
    }
    lambda
}
