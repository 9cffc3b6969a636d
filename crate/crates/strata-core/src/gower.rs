//! Gower dissimilarity over mixed-type rows.
//!
//! For two rows, each continuous variable contributes `|a - b| / R_j` with
//! `R_j` the variable's full-data range, each categorical variable
//! contributes 0 on a match and 1 otherwise, and the dissimilarity is the
//! plain average over the variables used. The binary outcome may be included
//! as one more categorical variable, which is the default for clustering.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric matrix of pairwise dissimilarities in `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissimilarityMatrix<T> {
    values: Array2<T>,
    /// Range of each continuous feature, in canonical feature order.
    pub ranges: Vec<T>,
    /// Whether the outcome participated as a categorical variable.
    pub includes_outcome: bool,
}

impl<T: Scalar> DissimilarityMatrix<T> {
    /// Wrap a precomputed symmetric matrix; validates shape, symmetry,
    /// bounds, and the zero diagonal.
    pub fn from_values(values: Array2<T>, ranges: Vec<T>, includes_outcome: bool) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::invalid("dissimilarity matrix not square"));
        }
        for i in 0..n {
            if values[(i, i)] != T::zero() {
                return Err(Error::invalid("dissimilarity diagonal must be zero"));
            }
            for j in (i + 1)..n {
                let v = values[(i, j)];
                if v != values[(j, i)] {
                    return Err(Error::invalid("dissimilarity matrix not symmetric"));
                }
                if !(v >= T::zero() && v <= T::one()) {
                    return Err(Error::invalid("dissimilarity entries must be in [0, 1]"));
                }
            }
        }
        Ok(DissimilarityMatrix {
            values,
            ranges,
            includes_outcome,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    /// Sub-matrix over `rows` (in the given order). Used by the stability
    /// bootstrap so resampled fits live on the same geometry as the
    /// original fit (ranges stay fixed).
    pub fn subselect(&self, rows: &[usize]) -> DissimilarityMatrix<T> {
        let m = rows.len();
        let mut values = Array2::<T>::zeros((m, m));
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in rows.iter().enumerate() {
                values[(a, b)] = self.values[(i, j)];
            }
        }
        DissimilarityMatrix {
            values,
            ranges: self.ranges.clone(),
            includes_outcome: self.includes_outcome,
        }
    }

    /// Audit dump: `row,col,value` lines for the upper triangle.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,dissimilarity")?;
        let n = self.n();
        for i in 0..n {
            for j in i..n {
                writeln!(w, "{},{},{}", i, j, self.values[(i, j)].to_f64_lossy())?;
            }
        }
        Ok(())
    }
}

/// Ranges `max - min` of the continuous features; errors on zero range.
fn continuous_ranges<T: Scalar>(ds: &Dataset<T>) -> Result<Vec<T>> {
    let mut ranges = Vec::with_capacity(ds.q());
    for j in 0..ds.q() {
        let col = ds.continuous_col(j);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &v in col.iter() {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        let r = hi - lo;
        if !(r > T::zero()) {
            return Err(Error::data(format!(
                "continuous variable '{}' has zero range",
                ds.features()[j].name
            )));
        }
        ranges.push(r);
    }
    Ok(ranges)
}

/// Pairwise Gower dissimilarity matrix of `ds`.
///
/// Entries are averages over `p` variables, or `p + 1` when
/// `include_outcome` is set. Rows are computed independently, so the result
/// does not depend on thread count.
pub fn gower_dissimilarity<T: Scalar>(
    ds: &Dataset<T>,
    include_outcome: bool,
) -> Result<DissimilarityMatrix<T>> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::data(
            "need at least 2 rows for a dissimilarity matrix",
        ));
    }
    let ranges = continuous_ranges(ds)?;
    let q = ds.q();
    let p = ds.p();
    let vars = p + usize::from(include_outcome);
    let denom = T::from_usize(vars).unwrap();

    let cont_cols: Vec<Vec<T>> = (0..q).map(|j| ds.continuous_col(j).to_vec()).collect();
    let cat_cols: Vec<&[u32]> = (q..p).map(|j| ds.categorical_col(j)).collect();
    let outcome = ds.outcome();

    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![T::zero(); n];
            for (jj, item) in row.iter_mut().enumerate().take(n).skip(i + 1) {
                let mut acc = T::zero();
                for (j, col) in cont_cols.iter().enumerate() {
                    acc += (col[i] - col[jj]).abs() / ranges[j];
                }
                for col in &cat_cols {
                    if col[i] != col[jj] {
                        acc += T::one();
                    }
                }
                if include_outcome && outcome[i] != outcome[jj] {
                    acc += T::one();
                }
                *item = acc / denom;
            }
            row
        })
        .collect();

    let mut values = Array2::<T>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            if j > i {
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
    }

    Ok(DissimilarityMatrix {
        values,
        ranges,
        includes_outcome: include_outcome,
    })
}

/// Gower dissimilarity of one external row to each of the given reference
/// rows, over features only (no outcome term). Continuous contributions are
/// clamped to `[0, 1]` since an external value may fall outside the training
/// range that fixed `ranges`.
pub fn gower_to_rows<T: Scalar>(
    cont: &[T],
    cat: &[u32],
    ref_rows_cont: &[Vec<T>],
    ref_rows_cat: &[Vec<u32>],
    ranges: &[T],
) -> Result<Vec<T>> {
    if ref_rows_cont.len() != ref_rows_cat.len() {
        return Err(Error::invalid("reference row blocks disagree in length"));
    }
    let p = cont.len() + cat.len();
    if p == 0 {
        return Err(Error::invalid("no features"));
    }
    let denom = T::from_usize(p).unwrap();
    let mut out = Vec::with_capacity(ref_rows_cont.len());
    for (rc, rk) in ref_rows_cont.iter().zip(ref_rows_cat) {
        let mut acc = T::zero();
        for (j, (&a, &b)) in cont.iter().zip(rc.iter()).enumerate() {
            acc += ((a - b).abs() / ranges[j]).min(T::one());
        }
        for (&a, &b) in cat.iter().zip(rk.iter()) {
            if a != b {
                acc += T::one();
            }
        }
        out.push(acc / denom);
    }
    Ok(out)
}
