//! Expanded design matrix with the overlapped group structure.
//!
//! Column layout: intercept, one main block per feature (single column for
//! continuous, full one-hot for categorical), the one-hot cluster block,
//! then one composite block per feature holding a second copy of that
//! feature's block, a second copy of the cluster block, and the
//! feature-by-cluster interaction columns.
//!
//! The penalty treats each main block, the cluster block, and each
//! composite block as one group. Inside a composite the duplicated feature
//! copy carries weight sqrt(k) and the duplicated cluster copy weight
//! sqrt(L_j); both weights are folded into the columns (column divided by
//! the weight), which turns every group norm into a plain Euclidean norm so
//! one group soft-threshold serves all groups. Recovery divides the fitted
//! coefficients by the same weights.

use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column spans of one composite block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSpan {
    /// Duplicated feature copy, scaled by 1/sqrt(k).
    pub x: Range<usize>,
    /// Duplicated cluster copy, scaled by 1/sqrt(L_j).
    pub c: Range<usize>,
    /// Interaction columns, level-major: column a*k + s pairs level a with
    /// cluster s. Unscaled.
    pub xi: Range<usize>,
}

/// One penalized group of columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    MainFeature(usize),
    MainCluster,
    Composite(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub kind: GroupKind,
    pub cols: Range<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupedDesign<T> {
    matrix: Array2<T>,
    pub k: usize,
    /// Per feature: 1 for continuous, L for categorical.
    pub level_counts: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Continuous feature count; features 0..q are continuous.
    pub q: usize,
    pub main_spans: Vec<Range<usize>>,
    pub cluster_span: Range<usize>,
    pub composites: Vec<CompositeSpan>,
    /// Clusters with no rows; their one-hot columns are all zero.
    pub empty_clusters: Vec<usize>,
}

impl<T: Scalar> GroupedDesign<T> {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn p(&self) -> usize {
        self.level_counts.len()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    /// Weight on the duplicated feature copy of composite j.
    pub fn weight_x(&self, _j: usize) -> T {
        T::from_usize(self.k).unwrap().sqrt()
    }

    /// Weight on the duplicated cluster copy of composite j.
    pub fn weight_c(&self, j: usize) -> T {
        T::from_usize(self.level_counts[j]).unwrap().sqrt()
    }

    /// All penalized groups in deterministic order: feature mains in
    /// feature order, the cluster main, then composites in feature order.
    pub fn groups(&self) -> Vec<Group> {
        let mut out = Vec::with_capacity(2 * self.p() + 1);
        for (j, span) in self.main_spans.iter().enumerate() {
            out.push(Group {
                kind: GroupKind::MainFeature(j),
                cols: span.clone(),
            });
        }
        out.push(Group {
            kind: GroupKind::MainCluster,
            cols: self.cluster_span.clone(),
        });
        for (j, comp) in self.composites.iter().enumerate() {
            out.push(Group {
                kind: GroupKind::Composite(j),
                cols: comp.x.start..comp.xi.end,
            });
        }
        out
    }

    /// Rows of the design restricted to `rows` (order kept, repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> GroupedDesign<T> {
        let m = self.m();
        let mut matrix = Array2::<T>::zeros((rows.len(), m));
        for (r, &i) in rows.iter().enumerate() {
            for c in 0..m {
                matrix[(r, c)] = self.matrix[(i, c)];
            }
        }
        GroupedDesign {
            matrix,
            k: self.k,
            level_counts: self.level_counts.clone(),
            feature_names: self.feature_names.clone(),
            q: self.q,
            main_spans: self.main_spans.clone(),
            cluster_span: self.cluster_span.clone(),
            composites: self.composites.clone(),
            empty_clusters: self.empty_clusters.clone(),
        }
    }

    /// Block layout dump for debugging and artifacts.
    pub fn layout_json(&self) -> serde_json::Value {
        let groups: Vec<serde_json::Value> = self
            .groups()
            .iter()
            .map(|g| {
                serde_json::json!({
                    "kind": format!("{:?}", g.kind),
                    "cols": [g.cols.start, g.cols.end],
                })
            })
            .collect();
        serde_json::json!({
            "n": self.n(),
            "m": self.m(),
            "k": self.k,
            "level_counts": self.level_counts,
            "groups": groups,
        })
    }
}

/// Build the expanded design for `ds` under cluster `labels` (values in
/// `0..k`). An empty cluster leaves its one-hot column all zero; the design
/// is still usable and the cluster is reported in `empty_clusters`.
pub fn build_design<T: Scalar>(
    ds: &Dataset<T>,
    labels: &[u32],
    k: usize,
) -> Result<GroupedDesign<T>> {
    let n = ds.n();
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "labels length {} != dataset rows {n}",
            labels.len()
        )));
    }
    if k < 2 {
        return Err(Error::invalid("need k >= 2 clusters"));
    }
    for &l in labels {
        if l as usize >= k {
            return Err(Error::invalid(format!("label {l} outside 0..{k}")));
        }
    }
    let p = ds.p();
    let q = ds.q();
    let level_counts: Vec<usize> = (0..p).map(|j| ds.level_count(j)).collect();

    let mut m = 1; // intercept
    let mut main_spans = Vec::with_capacity(p);
    for &l in &level_counts {
        main_spans.push(m..m + l);
        m += l;
    }
    let cluster_span = m..m + k;
    m += k;
    let mut composites = Vec::with_capacity(p);
    for &l in &level_counts {
        let x = m..m + l;
        let c = m + l..m + l + k;
        let xi = m + l + k..m + l + k + l * k;
        m = xi.end;
        composites.push(CompositeSpan { x, c, xi });
    }

    let mut matrix = Array2::<T>::zeros((n, m));
    let w_x = T::from_usize(k).unwrap().sqrt();

    for i in 0..n {
        matrix[(i, 0)] = T::one();
        let s = labels[i] as usize;
        matrix[(i, cluster_span.start + s)] = T::one();
        for j in 0..p {
            let span = &main_spans[j];
            let comp = &composites[j];
            let w_c = T::from_usize(level_counts[j]).unwrap().sqrt();
            match ds.features()[j].kind {
                VarKind::Continuous => {
                    let v = ds.continuous_col(j)[i];
                    matrix[(i, span.start)] = v;
                    matrix[(i, comp.x.start)] = v / w_x;
                    matrix[(i, comp.c.start + s)] = T::one() / w_c;
                    matrix[(i, comp.xi.start + s)] = v;
                }
                VarKind::Categorical => {
                    let a = ds.categorical_col(j)[i] as usize;
                    matrix[(i, span.start + a)] = T::one();
                    matrix[(i, comp.x.start + a)] = T::one() / w_x;
                    matrix[(i, comp.c.start + s)] = T::one() / w_c;
                    matrix[(i, comp.xi.start + a * k + s)] = T::one();
                }
            }
        }
    }

    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l as usize] += 1;
    }
    let empty_clusters: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();

    Ok(GroupedDesign {
        matrix,
        k,
        level_counts,
        feature_names: ds.features().iter().map(|f| f.name.clone()).collect(),
        q,
        main_spans,
        cluster_span,
        composites,
        empty_clusters,
    })
}

/// Sum-to-zero contrast codes.
///
/// A variable with L levels has L-1 free coordinates: the reference level
/// codes as all -1, level r >= 1 as the r-th canonical basis vector. The
/// full L-vector of block coefficients is recovered from free coordinates
/// by [`expand_free`], and interactions expand level-by-cluster through
/// [`expand_free_grid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FCoding {
    pub level_counts: Vec<usize>,
    pub k: usize,
}

impl FCoding {
    pub fn from_design<T: Scalar>(d: &GroupedDesign<T>) -> FCoding {
        FCoding {
            level_counts: d.level_counts.clone(),
            k: d.k,
        }
    }

    /// Contrast row of `level` within a variable of `levels` levels
    /// (length `levels - 1`).
    pub fn contrast<T: Scalar>(levels: usize, level: usize) -> Vec<T> {
        debug_assert!(level < levels);
        let mut row = vec![T::zero(); levels - 1];
        if level == 0 {
            for v in row.iter_mut() {
                *v = -T::one();
            }
        } else {
            row[level - 1] = T::one();
        }
        row
    }

    /// Main, cluster, and induced interaction contrasts for evaluating the
    /// linear predictor at (feature level, cluster). The interaction part
    /// is the outer product of the two contrast rows, level-major.
    pub fn row<T: Scalar>(
        &self,
        feature: usize,
        level: usize,
        cluster: usize,
    ) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let l = self.level_counts[feature];
        if level >= l.max(2) || cluster >= self.k {
            return Err(Error::invalid(format!(
                "level {level} or cluster {cluster} out of range"
            )));
        }
        // A continuous feature (l = 1) contributes a single slope; treat it
        // as a 2-"level" contrast only for the categorical case.
        let main: Vec<T> = if l == 1 {
            vec![T::one()]
        } else {
            Self::contrast(l, level)
        };
        let cl: Vec<T> = Self::contrast(self.k, cluster);
        let mut inter = Vec::with_capacity(main.len() * cl.len());
        for &a in &main {
            for &c in &cl {
                inter.push(a * c);
            }
        }
        Ok((main, cl, inter))
    }
}

/// Expand free sum-to-zero coordinates (length L-1) into the full block
/// (length L): entry 0 is minus the sum, entry r is free[r-1].
pub fn expand_free<T: Scalar>(free: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(free.len() + 1);
    let neg_sum = -free.iter().cloned().sum::<T>();
    out.push(neg_sum);
    out.extend_from_slice(free);
    out
}

/// Expand a free (L-1) x (k-1) interaction grid (level-major) into the full
/// L x k grid (level-major) satisfying sum-to-zero over both indices.
pub fn expand_free_grid<T: Scalar>(free: &[T], levels: usize, k: usize) -> Vec<T> {
    debug_assert_eq!(free.len(), (levels - 1) * (k - 1));
    let mut full = vec![T::zero(); levels * k];
    for a in 1..levels {
        for s in 1..k {
            full[a * k + s] = free[(a - 1) * (k - 1) + (s - 1)];
        }
    }
    // Reference level row: minus the column sums.
    for s in 1..k {
        let mut sum = T::zero();
        for a in 1..levels {
            sum += full[a * k + s];
        }
        full[s] = -sum;
    }
    // Reference cluster column: minus the row sums (grand total cancels).
    for a in 0..levels {
        let mut sum = T::zero();
        for s in 1..k {
            sum += full[a * k + s];
        }
        full[a * k] = -sum;
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VariableSchema;
    use crate::linalg;
    use ndarray::array;

    fn toy_dataset() -> Dataset<f64> {
        // x1 continuous, x2 categorical with 2 levels, 6 rows.
        Dataset::from_parts(
            vec![
                VariableSchema::continuous("x1"),
                VariableSchema::categorical("x2", &["a", "b"]),
            ],
            VariableSchema::outcome("y", "0", "1"),
            array![[0.1], [0.4], [-1.2], [2.0], [0.9], [-0.3]],
            vec![vec![0, 1, 0, 1, 1, 0]],
            vec![0, 1, 0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn dimensions_and_layout() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 0, 1, 0, 1];
        let d = build_design(&ds, &labels, 2).unwrap();
        // intercept 1 + main x1 1 + main x2 2 + cluster 2
        //   + composite x1 (1 + 2 + 2) + composite x2 (2 + 2 + 4)
        assert_eq!(d.m(), 1 + 1 + 2 + 2 + 5 + 8);
        assert_eq!(d.level_counts, vec![1, 2]);
        // Categorical interaction block has L*k = 4 columns and each row is
        // a canonical basis vector of that 4-dim block.
        let xi = &d.composites[1].xi;
        assert_eq!(xi.len(), 4);
        for i in 0..d.n() {
            let ones: Vec<usize> = (xi.start..xi.end)
                .filter(|&c| d.matrix()[(i, c)] != 0.0)
                .collect();
            assert_eq!(ones.len(), 1);
            assert_eq!(d.matrix()[(i, ones[0])], 1.0);
        }
    }

    #[test]
    fn continuous_composite_has_k_interaction_columns() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 2, 1, 0, 2];
        let d = build_design(&ds, &labels, 3).unwrap();
        assert_eq!(d.composites[0].xi.len(), 3);
    }

    #[test]
    fn interaction_columns_are_elementwise_products() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 0, 1, 1, 0];
        let d = build_design(&ds, &labels, 2).unwrap();
        let m = d.matrix();
        let k = 2usize;
        // Feature 1 (categorical): xi col (a, s) = main one-hot a * cluster one-hot s.
        let main = &d.main_spans[1];
        let cl = &d.cluster_span;
        let xi = &d.composites[1].xi;
        for i in 0..d.n() {
            for a in 0..2 {
                for s in 0..k {
                    let lhs = m[(i, xi.start + a * k + s)];
                    let rhs = m[(i, main.start + a)] * m[(i, cl.start + s)];
                    assert_eq!(lhs, rhs);
                }
            }
        }
        // Feature 0 (continuous): xi col s = x * cluster one-hot s.
        let xmain = d.main_spans[0].start;
        let xi0 = &d.composites[0].xi;
        for i in 0..d.n() {
            for s in 0..k {
                assert_eq!(
                    m[(i, xi0.start + s)],
                    m[(i, xmain)] * m[(i, cl.start + s)]
                );
            }
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one_and_weights_fold() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 0, 1, 0, 1];
        let d = build_design(&ds, &labels, 2).unwrap();
        let m = d.matrix();
        for i in 0..d.n() {
            let main_sum: f64 = (d.main_spans[1].start..d.main_spans[1].end)
                .map(|c| m[(i, c)])
                .sum();
            assert_eq!(main_sum, 1.0);
            let cl_sum: f64 = (d.cluster_span.start..d.cluster_span.end)
                .map(|c| m[(i, c)])
                .sum();
            assert_eq!(cl_sum, 1.0);
            // Duplicated copies are the originals divided by their weights.
            let comp = &d.composites[1];
            for a in 0..2 {
                assert!(
                    (m[(i, comp.x.start + a)]
                        - m[(i, d.main_spans[1].start + a)] / d.weight_x(1))
                    .abs()
                        < 1e-15
                );
            }
            for s in 0..2 {
                assert!(
                    (m[(i, comp.c.start + s)]
                        - m[(i, d.cluster_span.start + s)] / d.weight_c(1))
                    .abs()
                        < 1e-15
                );
            }
        }
    }

    #[test]
    fn groups_cover_all_penalized_columns_once() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 0, 1, 0, 1];
        let d = build_design(&ds, &labels, 2).unwrap();
        let mut covered = vec![0usize; d.m()];
        for g in d.groups() {
            for c in g.cols.clone() {
                covered[c] += 1;
            }
        }
        assert_eq!(covered[0], 0); // intercept unpenalized
        for c in 1..d.m() {
            assert_eq!(covered[c], 1, "column {c} covered {} times", covered[c]);
        }
    }

    #[test]
    fn empty_cluster_flagged_not_fatal() {
        let ds = toy_dataset();
        let labels = vec![0u32, 0, 0, 1, 1, 0];
        let d = build_design(&ds, &labels, 3).unwrap();
        assert_eq!(d.empty_clusters, vec![2]);
    }

    #[test]
    fn expanded_design_spans_plain_interaction_design() {
        let ds = toy_dataset();
        let labels = vec![0u32, 1, 0, 1, 1, 0];
        let d = build_design(&ds, &labels, 2).unwrap();
        let n = d.n();
        // Plain design: intercept, x1, x2 dummy(b), cluster dummy(1),
        // x1:cluster, x2(b):cluster.
        let mut plain = Array2::<f64>::zeros((n, 6));
        for i in 0..n {
            let x1 = ds.continuous_col(0)[i];
            let x2b = if ds.categorical_col(1)[i] == 1 { 1.0 } else { 0.0 };
            let cl = labels[i] as f64;
            plain[(i, 0)] = 1.0;
            plain[(i, 1)] = x1;
            plain[(i, 2)] = x2b;
            plain[(i, 3)] = cl;
            plain[(i, 4)] = x1 * cl;
            plain[(i, 5)] = x2b * cl;
        }
        // Project each plain column onto the expanded column space.
        let z = d.matrix();
        let gram = z.t().dot(z);
        let dep = linalg::dependent_columns(&gram, 1e-10);
        let keep: Vec<usize> = (0..d.m()).filter(|&c| !dep[c]).collect();
        let mut zk = Array2::<f64>::zeros((n, keep.len()));
        for (cc, &c) in keep.iter().enumerate() {
            for i in 0..n {
                zk[(i, cc)] = z[(i, c)];
            }
        }
        let gk = zk.t().dot(&zk);
        let l = linalg::cholesky(&gk).unwrap();
        for t in 0..6 {
            let target = plain.column(t).to_owned();
            let rhs = zk.t().dot(&target);
            let coef = linalg::chol_solve(&l, &rhs);
            let fitted = zk.dot(&coef);
            let mut resid = 0.0;
            for i in 0..n {
                resid += (fitted[i] - target[i]).powi(2);
            }
            assert!(resid.sqrt() < 1e-10, "column {t} residual {resid}");
        }
    }

    #[test]
    fn fcode_contrasts_match_layout() {
        // Binary: reference -> -1, other -> +1.
        assert_eq!(FCoding::contrast::<f64>(2, 0), vec![-1.0]);
        assert_eq!(FCoding::contrast::<f64>(2, 1), vec![1.0]);
        // Three levels: level 2 -> (0, +1); reference -> (-1, -1).
        assert_eq!(FCoding::contrast::<f64>(3, 2), vec![0.0, 1.0]);
        assert_eq!(FCoding::contrast::<f64>(3, 1), vec![1.0, 0.0]);
        assert_eq!(FCoding::contrast::<f64>(3, 0), vec![-1.0, -1.0]);
    }

    #[test]
    fn expand_free_satisfies_sum_to_zero() {
        let full = expand_free(&[0.3, -0.1]);
        assert!((full.iter().sum::<f64>()).abs() < 1e-15);
        assert_eq!(&full[1..], &[0.3, -0.1]);

        let grid = expand_free_grid(&[0.5, -0.2, 0.1, 0.4], 3, 3);
        // Row sums and column sums vanish.
        for a in 0..3 {
            let row: f64 = (0..3).map(|s| grid[a * 3 + s]).sum();
            assert!(row.abs() < 1e-15);
        }
        for s in 0..3 {
            let col: f64 = (0..3).map(|a| grid[a * 3 + s]).sum();
            assert!(col.abs() < 1e-15);
        }
        assert_eq!(grid[4], 0.5);
        assert_eq!(grid[5], -0.2);
        assert_eq!(grid[7], 0.1);
        assert_eq!(grid[8], 0.4);
    }
}
